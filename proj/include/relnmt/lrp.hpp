#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relnmt/model.hpp"

namespace relnmt {

enum class LrpRuleKind { kEpsilon, kAlphaBeta };
enum class NormRelevance { kIdentity, kAffineEps };

// Propagation rule. The stabilizer share (and any bias share) is folded
// back into the inputs, so each local redistribution conserves relevance
// exactly; epsilon only damps near-cancelling denominators.
struct LrpRule {
  LrpRuleKind kind = LrpRuleKind::kEpsilon;
  double epsilon = 1e-6;
  double alpha = 1.0;
  double beta = 0.0;
  NormRelevance norm = NormRelevance::kIdentity;
  // Source framing tokens keep their own relevance by default; when
  // false, ids below special_id_limit fold into the remaining source.
  bool include_source_specials = true;
  int special_id_limit = 0;

  void validate() const;
};

// Relevance of every input token for one generation step t (1-based).
// target_tokens[j-1] is the relevance of target token y_{j}; entries with
// j >= t are exactly zero. The direction token's relevance is folded
// proportionally into the other processed tokens.
struct RelevanceMap {
  int step = 0;
  ArrayXd source_tokens;
  ArrayXd target_tokens;
  double source_total = 0.0;
  double target_total = 0.0;
  ArrayXd normalized_source;  // filled by normalize_relevance
  ArrayXd normalized_target;
  // per-neuron relevance at the embedding layer (token sums above)
  RowMat source_neurons;
  RowMat target_neurons;  // rows follow decoder input positions
};

// Propagates relevance of the step-t top-1 logit back through the
// decoder and then the encoder, down to the input embeddings. Attention
// weights and normalization statistics are constants; relevance flows
// through value vectors and affine paths.
RelevanceMap propagate(const ForwardTrace& trace, int step_t, const LrpRule& rule = {});

// Shared-trace batch variant (one propagation per requested step).
std::vector<RelevanceMap> propagate_steps(const ForwardTrace& trace,
                                          const std::vector<int>& steps,
                                          const LrpRule& rule = {});

std::pair<double, double> aggregate(const RelevanceMap& map);

// Divides token relevances by the largest absolute token relevance
// (jointly over source and target); all-zero maps stay all-zero.
RelevanceMap normalize_relevance(const RelevanceMap& map);

// Contribution matrix [steps x (src_len + tgt_len)]; row t-1 holds the
// token relevances of step t, future target entries zero.
RowMat heatmap(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids,
               const std::vector<RelevanceMap>& maps);

// CSV with a quoted token header row; cells printed with 17 significant
// digits so values round-trip bit-exactly.
void write_heatmap_csv(const std::string& path,
                       const std::vector<std::string>& src_tokens,
                       const std::vector<std::string>& tgt_tokens,
                       const RowMat& matrix);
std::pair<std::vector<std::string>, RowMat> read_heatmap_csv(const std::string& path);

// Relevance redistribution of one linear map y = x*w + b; exposed for
// the rule-level oracle tests.
Eigen::MatrixXd linear_relevance(const Eigen::MatrixXd& r_out,
                                 const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                                 const ArrayXd& b, const LrpRule& rule);

}  // namespace relnmt
