#include "relnmt/lrp.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace relnmt {

namespace {

using Eigen::ArrayXXd;
using Eigen::MatrixXd;
using Eigen::VectorXd;

ArrayXXd sign_pos(const MatrixXd& z) {
  return (z.array() >= 0.0).select(ArrayXXd::Ones(z.rows(), z.cols()),
                                   -ArrayXXd::Ones(z.rows(), z.cols()));
}

// Relevance through an A*V mix with A constant and nonnegative. The
// stabilizer share folds back proportionally to the attention weights,
// so masked-out key positions receive exactly zero and each query
// conserves its relevance exactly.
MatrixXd attn_value_relevance(const MatrixXd& r_out, const MatrixXd& a,
                              const MatrixXd& v, const LrpRule& rule) {
  const ArrayXd row_sum = a.rowwise().sum().array();  // 1 unless dropout hit
  // Denominators may only be floored where they are exactly zero (all
  // numerators are zero there too); any other floor would break the
  // per-query conservation identity.
  if (rule.kind == LrpRuleKind::kEpsilon) {
    MatrixXd z = a * v;
    ArrayXXd s = sign_pos(z);
    ArrayXXd abs_den = z.array().abs().colwise() + rule.epsilon * row_sum;
    abs_den = (abs_den > 0.0).select(abs_den, rule.epsilon);
    ArrayXXd f = r_out.array() / (abs_den * s);
    // R_V[k,d] = sum_q A[q,k] (V[k,d] + eps*S[q,d]) F[q,d]
    MatrixXd r_v = v.array() * (a.transpose() * f.matrix()).array() +
                   rule.epsilon * (a.transpose() * (s * f).matrix()).array();
    return r_v;
  }
  MatrixXd vp = v.cwiseMax(0.0), vn = v.cwiseMin(0.0);
  ArrayXXd dp = (a * vp).array().colwise() + rule.epsilon * row_sum;
  ArrayXXd dn = (a * vn).array().colwise() - rule.epsilon * row_sum;
  dp = (dp > 0.0).select(dp, rule.epsilon);
  dn = (dn < 0.0).select(dn, -rule.epsilon);
  ArrayXXd fp = rule.alpha * r_out.array() / dp;
  ArrayXXd fn = rule.beta * r_out.array() / dn;
  MatrixXd r_v = (vp.array() + rule.epsilon) * (a.transpose() * fp.matrix()).array() -
                 (vn.array() - rule.epsilon) * (a.transpose() * fn.matrix()).array();
  return r_v;
}

// Splits relevance between the two branches of a residual sum in
// proportion to the absolute contribution of each branch.
void residual_split(const MatrixXd& r, const MatrixXd& skip, const MatrixXd& branch,
                    MatrixXd& r_skip, MatrixXd& r_branch) {
  ArrayXXd denom = skip.array().abs() + branch.array().abs();
  ArrayXXd w = (denom > 0.0).select(skip.array().abs() / denom.max(1e-300), 0.5);
  r_skip = r.array() * w;
  r_branch = r - r_skip;
}

// Relevance through layer norm with the statistics as constants. The
// default treats the per-neuron affine map as a pass-through (the J=1
// case of the folded rule); the leaky alternative keeps the constant
// shift's share out of the input.
MatrixXd norm_relevance(const MatrixXd& r, const Tensor& x_in, const Tensor& y_out,
                        const Tensor& gain, double eps, const LrpRule& rule) {
  if (rule.norm == NormRelevance::kIdentity) return r;
  auto x = x_in.mat();
  auto y = y_out.mat();
  MatrixXd out(r.rows(), r.cols());
  const auto& g = gain.value();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double inv_std = 1.0 / std::sqrt(var + eps);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double s = y(i, j) >= 0.0 ? 1.0 : -1.0;
      out(i, j) = r(i, j) * g[j] * inv_std * x(i, j) / (y(i, j) + rule.epsilon * s);
    }
  }
  return out;
}

struct StreamRelevance {
  MatrixXd dec;  // over decoder positions
  MatrixXd enc;  // accumulated relevance of the cross-attention memory
};

class Propagator {
 public:
  Propagator(const ForwardTrace& trace, const LrpRule& rule)
      : trace_(trace), rule_(rule), m_(*trace.model) {
    if (m_.cfg.tie_embeddings)
      out_w_ = trace.model->tok_emb.mat().transpose();
    else
      out_w_ = trace.model->out_w.mat();
  }

  RelevanceMap run(int step_t) const;

 private:
  // Relevance through one attention sublayer; returns relevance of the
  // sublayer block input, accumulating memory relevance for cross
  // attention into r_mem_out.
  MatrixXd attention_back(const AttnTrace& at, const AttentionParams& p,
                          const Tensor& ln_g, const MatrixXd& r_out,
                          MatrixXd* r_mem_out) const {
    MatrixXd r_skip, r_branch;
    residual_split(r_out, at.block_in.mat(), at.branch.mat(), r_skip, r_branch);
    // dropout passes relevance through unchanged
    MatrixXd r_concat =
        linear_relevance(r_branch, at.concat.mat(), p.wo.mat(), p.bo.value(), rule_);
    const int heads = m_.cfg.n_heads;
    const Eigen::Index dh = m_.cfg.d_model / heads;
    const Eigen::Index klen = at.values.rows();
    MatrixXd r_v = MatrixXd::Zero(klen, m_.cfg.d_model);
    for (int h = 0; h < heads; ++h) {
      MatrixXd vh = at.values.mat().middleCols(h * dh, dh);
      r_v.middleCols(h * dh, dh) = attn_value_relevance(
          r_concat.middleCols(h * dh, dh), at.attn[static_cast<std::size_t>(h)], vh,
          rule_);
    }
    const Tensor& mem = at.is_cross ? trace_.enc_out : at.normed;
    MatrixXd r_mem =
        linear_relevance(r_v, mem.mat(), p.wv.mat(), p.bv.value(), rule_);
    if (at.is_cross) {
      *r_mem_out += r_mem;
      return r_skip;
    }
    return r_skip + norm_relevance(r_mem, at.block_in, at.normed, ln_g, 1e-5, rule_);
  }

  MatrixXd ffn_back(const FfnTrace& ft, const LayerParams& lp,
                    const MatrixXd& r_out) const {
    MatrixXd r_skip, r_branch;
    residual_split(r_out, ft.block_in.mat(), ft.branch.mat(), r_skip, r_branch);
    MatrixXd r_hidden =
        linear_relevance(r_branch, ft.hidden.mat(), lp.w2.mat(), lp.b2.value(), rule_);
    // relu: relevance of the clipped activation stays on its neuron
    MatrixXd r_normed =
        linear_relevance(r_hidden, ft.normed.mat(), lp.w1.mat(), lp.b1.value(), rule_);
    return r_skip + norm_relevance(r_normed, ft.block_in, ft.normed, lp.ln2_g, 1e-5,
                                   rule_);
  }

  const ForwardTrace& trace_;
  const LrpRule& rule_;
  const TransformerModel& m_;
  MatrixXd out_w_;  // [d, vocab]
};

RelevanceMap Propagator::run(int step_t) const {
  const Eigen::Index dec_len = static_cast<Eigen::Index>(trace_.dec_ids.size());
  const Eigen::Index src_len = static_cast<Eigen::Index>(trace_.src_ids.size());
  const Eigen::Index d = m_.cfg.d_model;
  if (step_t < 1 || step_t > static_cast<int>(dec_len))
    throw InputError("propagate: step " + std::to_string(step_t) +
                     " out of range [1," + std::to_string(dec_len) + "]");

  // seed: total relevance 1.0 on the top-1 logit of step t
  const Eigen::Index row = step_t - 1;
  const ArrayXd& lv = trace_.logits.value();
  const Eigen::Index vocab = trace_.logits.cols();
  Eigen::Index top1 = 0;
  double best = lv[row * vocab];
  for (Eigen::Index j = 1; j < vocab; ++j) {
    const double x = lv[row * vocab + j];
    if (x > best) {
      best = x;
      top1 = j;
    }
  }
  MatrixXd r_logits = MatrixXd::Zero(dec_len, vocab);
  r_logits(row, top1) = 1.0;
  MatrixXd r_dec_out = linear_relevance(r_logits, trace_.dec_out.mat(), out_w_,
                                        m_.out_b.value(), rule_);

  StreamRelevance r;
  r.enc = MatrixXd::Zero(src_len, d);
  // final decoder norm
  r.dec = norm_relevance(r_dec_out,
                         trace_.decoder.empty() ? trace_.dec_emb
                                                : trace_.decoder.back().ffn.out,
                         trace_.dec_out, m_.dec_ln_g, 1e-5, rule_);

  for (std::size_t li = trace_.decoder.size(); li-- > 0;) {
    const LayerTrace& lt = trace_.decoder[li];
    const LayerParams& lp = m_.decoder[li];
    r.dec = ffn_back(lt.ffn, lp, r.dec);
    if (lt.cross_attn)
      r.dec = attention_back(*lt.cross_attn, lp.cross_attn, lp.ln_cross_g, r.dec,
                             &r.enc);
    r.dec = attention_back(lt.self_attn, lp.self_attn, lp.ln1_g, r.dec, nullptr);
  }

  // encoder, entered through its final norm
  MatrixXd r_enc = norm_relevance(
      r.enc, trace_.encoder.empty() ? trace_.src_emb : trace_.encoder.back().ffn.out,
      trace_.enc_out, m_.enc_ln_g, 1e-5, rule_);
  for (std::size_t li = trace_.encoder.size(); li-- > 0;) {
    const LayerTrace& lt = trace_.encoder[li];
    const LayerParams& lp = m_.encoder[li];
    r_enc = ffn_back(lt.ffn, lp, r_enc);
    r_enc = attention_back(lt.self_attn, lp.self_attn, lp.ln1_g, r_enc, nullptr);
  }

  RelevanceMap map;
  map.step = step_t;
  map.source_neurons = r_enc;
  map.target_neurons = r.dec;
  ArrayXd src_tok = r_enc.rowwise().sum().array();
  ArrayXd dec_pos = r.dec.rowwise().sum().array();

  // The direction token is a conditioning constant, not a sentence
  // token: its relevance folds into the other processed tokens in
  // proportion to their absolute relevance.
  auto redistribute = [](double pool, ArrayXd& a, ArrayXd& b, Eigen::Index b_limit) {
    double total = a.abs().sum();
    for (Eigen::Index j = 0; j < b_limit; ++j) total += std::abs(b[j]);
    if (total <= 0.0) {
      a += pool / static_cast<double>(a.size());
      return;
    }
    a += pool * (a.abs() / total);
    for (Eigen::Index j = 0; j < b_limit; ++j)
      b[j] += pool * std::abs(b[j]) / total;
  };
  double bos_pool = dec_pos[0];
  dec_pos[0] = 0.0;
  redistribute(bos_pool, src_tok, dec_pos, std::min<Eigen::Index>(step_t, dec_len));

  if (!rule_.include_source_specials && rule_.special_id_limit > 0) {
    double pool = 0.0;
    ArrayXd keep_mask = ArrayXd::Ones(src_len);
    for (Eigen::Index i = 0; i < src_len; ++i) {
      if (trace_.src_ids[static_cast<std::size_t>(i)] < rule_.special_id_limit) {
        pool += src_tok[i];
        src_tok[i] = 0.0;
        keep_mask[i] = 0.0;
      }
    }
    const double total = (src_tok * keep_mask).abs().sum();
    if (total > 0.0)
      src_tok += pool * (src_tok.abs() * keep_mask) / total;
    else if (keep_mask.sum() > 0.0)
      src_tok += pool * keep_mask / keep_mask.sum();
    else
      src_tok[0] = pool;  // nothing left to carry it; keep conservation
  }

  map.source_tokens = src_tok;
  // target token y_j lives at decoder position j; y_{dec_len} is never
  // part of any prefix
  map.target_tokens = ArrayXd::Zero(dec_len);
  for (Eigen::Index j = 1; j < dec_len; ++j) map.target_tokens[j - 1] = dec_pos[j];
  map.source_total = map.source_tokens.sum();
  map.target_total = map.target_tokens.sum();
  return map;
}

}  // namespace

void LrpRule::validate() const {
  if (epsilon <= 0.0) throw ConfigError("lrp: epsilon must be positive");
  if (std::abs(alpha - beta - 1.0) > 1e-12)
    throw ConfigError("lrp: alpha - beta must equal 1");
}

Eigen::MatrixXd linear_relevance(const Eigen::MatrixXd& r_out,
                                 const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                                 const ArrayXd& b, const LrpRule& rule) {
  const Eigen::Index cols = x.cols();
  const double inv_j = 1.0 / static_cast<double>(cols);
  if (rule.kind == LrpRuleKind::kEpsilon) {
    MatrixXd z = (x * w).rowwise() + b.matrix().transpose();
    ArrayXXd s = sign_pos(z);
    ArrayXXd f = r_out.array() / (z.array() + rule.epsilon * s);
    // bias and stabilizer shares fold uniformly back into the inputs
    ArrayXXd c = rule.epsilon * s;
    c.rowwise() += b.transpose();
    ArrayXd fold = (c * f).rowwise().sum() * inv_j;
    ArrayXXd r_in = x.array() * (f.matrix() * w.transpose()).array();
    r_in.colwise() += fold;
    return r_in;
  }
  MatrixXd xp = x.cwiseMax(0.0), xn = x.cwiseMin(0.0);
  MatrixXd wp = w.cwiseMax(0.0), wn = w.cwiseMin(0.0);
  ArrayXd bp = b.max(0.0), bn = b.min(0.0);
  MatrixXd zp = ((xp * wp + xn * wn).rowwise() + bp.matrix().transpose());
  MatrixXd zn = ((xp * wn + xn * wp).rowwise() + bn.matrix().transpose());
  ArrayXXd fp = rule.alpha * r_out.array() / (zp.array() + rule.epsilon);
  ArrayXXd fn = rule.beta * r_out.array() / (zn.array() - rule.epsilon);
  ArrayXXd cp = ArrayXXd::Constant(zp.rows(), zp.cols(), rule.epsilon);
  cp.rowwise() += bp.transpose();
  ArrayXXd cn = ArrayXXd::Constant(zn.rows(), zn.cols(), -rule.epsilon);
  cn.rowwise() += bn.transpose();
  ArrayXXd r_in = xp.array() * (fp.matrix() * wp.transpose()).array() +
                  xn.array() * (fp.matrix() * wn.transpose()).array() -
                  xp.array() * (fn.matrix() * wn.transpose()).array() -
                  xn.array() * (fn.matrix() * wp.transpose()).array();
  ArrayXd fold = ((cp * fp).rowwise().sum() - (cn * fn).rowwise().sum()) * inv_j;
  r_in.colwise() += fold;
  return r_in;
}

RelevanceMap propagate(const ForwardTrace& trace, int step_t, const LrpRule& rule) {
  rule.validate();
  if (!trace.model || !trace.logits.defined() || trace.dec_ids.empty())
    throw ContractError("propagate: trace is missing records");
  if (trace.decoder.size() != trace.model->decoder.size() ||
      trace.encoder.size() != trace.model->encoder.size())
    throw ContractError("propagate: trace does not match the model layer stack");
  Propagator p(trace, rule);
  return p.run(step_t);
}

std::vector<RelevanceMap> propagate_steps(const ForwardTrace& trace,
                                          const std::vector<int>& steps,
                                          const LrpRule& rule) {
  rule.validate();
  if (!trace.model || !trace.logits.defined() || trace.dec_ids.empty())
    throw ContractError("propagate_steps: trace is missing records");
  Propagator p(trace, rule);
  std::vector<RelevanceMap> maps;
  maps.reserve(steps.size());
  for (int t : steps) maps.push_back(p.run(t));
  return maps;
}

std::pair<double, double> aggregate(const RelevanceMap& map) {
  return {map.source_tokens.sum(), map.target_tokens.sum()};
}

RelevanceMap normalize_relevance(const RelevanceMap& map) {
  RelevanceMap out = map;
  double mx = 0.0;
  if (map.source_tokens.size() > 0) mx = map.source_tokens.abs().maxCoeff();
  if (map.target_tokens.size() > 0)
    mx = std::max(mx, map.target_tokens.abs().maxCoeff());
  if (mx <= 0.0) {
    out.normalized_source = ArrayXd::Zero(map.source_tokens.size());
    out.normalized_target = ArrayXd::Zero(map.target_tokens.size());
    return out;
  }
  out.normalized_source = map.source_tokens / mx;
  out.normalized_target = map.target_tokens / mx;
  return out;
}

RowMat heatmap(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids,
               const std::vector<RelevanceMap>& maps) {
  const Eigen::Index steps = static_cast<Eigen::Index>(tgt_ids.size());
  const Eigen::Index src_len = static_cast<Eigen::Index>(src_ids.size());
  if (static_cast<Eigen::Index>(maps.size()) != steps)
    throw ContractError("heatmap: need one map per step, got " +
                        std::to_string(maps.size()) + " for " +
                        std::to_string(steps) + " steps");
  RowMat out = RowMat::Zero(steps, src_len + steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    const RelevanceMap& m = maps[static_cast<std::size_t>(t)];
    if (m.step != static_cast<int>(t) + 1)
      throw ContractError("heatmap: step gap at row " + std::to_string(t + 1) +
                          " (map for step " + std::to_string(m.step) + ")");
    if (m.source_tokens.size() != src_len ||
        m.target_tokens.size() != steps)
      throw ContractError("heatmap: map shape does not match token lists");
    out.row(t).head(src_len) = m.source_tokens.matrix().transpose();
    out.row(t).tail(steps) = m.target_tokens.matrix().transpose();
  }
  return out;
}

namespace {

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

void write_heatmap_csv(const std::string& path,
                       const std::vector<std::string>& src_tokens,
                       const std::vector<std::string>& tgt_tokens,
                       const RowMat& matrix) {
  if (static_cast<Eigen::Index>(src_tokens.size() + tgt_tokens.size()) !=
      matrix.cols())
    throw ContractError("write_heatmap_csv: header does not match matrix width");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("write_heatmap_csv: cannot open '" + path + "'");
  std::vector<std::string> header;
  for (const auto& t : src_tokens) header.push_back(csv_quote(t));
  for (const auto& t : tgt_tokens) header.push_back(csv_quote(t));
  os << join(header, ",") << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", matrix(i, j));
      os << (j ? "," : "") << buf;
    }
    os << '\n';
  }
}

std::pair<std::vector<std::string>, RowMat> read_heatmap_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("read_heatmap_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line)) throw InputError("read_heatmap_csv: empty file");
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] != '"') throw InputError("read_heatmap_csv: malformed header");
    std::string tok;
    ++i;
    while (i < line.size()) {
      if (line[i] == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        tok.push_back('"');
        i += 2;
      } else if (line[i] == '"') {
        ++i;
        break;
      } else {
        tok.push_back(line[i++]);
      }
    }
    tokens.push_back(tok);
    if (i < line.size() && line[i] == ',') ++i;
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (strip(line).empty()) continue;
    std::vector<double> row;
    for (const auto& cell : split_on(line, ',')) row.push_back(std::stod(cell));
    if (row.size() != tokens.size())
      throw InputError("read_heatmap_csv: ragged row");
    rows.push_back(std::move(row));
  }
  RowMat m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(tokens.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return {tokens, m};
}

}  // namespace relnmt
