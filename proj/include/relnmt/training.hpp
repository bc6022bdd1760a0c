#pragma once

#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "relnmt/bpe.hpp"
#include "relnmt/data.hpp"
#include "relnmt/lrp.hpp"
#include "relnmt/model.hpp"

namespace relnmt {

// (xi, lambda) pair of the relevance-guided loss
//   L' = xi * L(y,p) + lambda * L(y,p_lrp)
struct LossWeights {
  double xi = 1.0;
  double lambda = 0.0;
  std::string preset;  // "v1" | "v2" | "v3" | "regular" | ""

  // presets bind exactly: v1=(1,0.5), v2=(0,1), v3=(1,1), regular=(1,0)
  static LossWeights from_preset(const std::string& name);
  void validate() const;
};

enum class ObjectiveKind { kMlm, kAe, kBt, kMt, kBtAeMt };
ObjectiveKind objective_from_string(const std::string& s);
std::string to_string(ObjectiveKind k);

struct NoiseSpec {
  double word_drop = 0.1;
  int shuffle_window = 3;  // each token moves at most window-1 positions
};

struct Objective {
  ObjectiveKind kind = ObjectiveKind::kMt;
  double mask_rate = 0.15;
  NoiseSpec noise;
  // cap on mono sentences consumed per epoch by AE/BT (0 = batch-matched)
  int mono_per_epoch = 0;
};

struct LrpTrainConfig {
  bool enabled = true;
  LrpRule rule;
  int frequency = 1;  // recompute relevance every k encounters of a pair
  enum class Aggregate { kMean, kFinalStep };
  Aggregate aggregate = Aggregate::kMean;
  bool reweight_target = true;   // also reweight target-prefix tokens
  bool embeddings_only = false;  // restrict reweighting to the embeddings
};

// A tokenized pair without framing; framing and direction tokens are
// applied at use.
struct SentencePair {
  std::vector<int> src;
  std::vector<int> tgt;
};

struct MtDiagnostics {
  double loss = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double r_source = std::numeric_limits<double>::quiet_NaN();
  int lrp_sentences = 0;
};

// Cached per-pair reweights for the LRP frequency knob.
struct RelevanceCache {
  int frequency = 1;
  struct Entry {
    Reweight reweight;
    double r_source = 0.0;
    int remaining = 0;
  };
  std::unordered_map<long long, Entry> entries;
};

// Masked-LM loss over a monolingual batch; nullopt when no position was
// selected (the skip path).
std::optional<Tensor> mlm_step(const TransformerModel& model, const BpeModel& bpe,
                               const std::vector<std::vector<int>>& mono_batch,
                               double mask_rate, Rng& rng);

// Denoising auto-encoding: encode the noised sentence, decode the
// original. `lang_id` is the direction token for the batch's language.
Tensor ae_step(const TransformerModel& model, const BpeModel& bpe,
               const std::vector<std::vector<int>>& mono_batch, const NoiseSpec& noise,
               int lang_id, Rng& rng);

// Applies word drops and a local shuffle; never empties the sentence.
std::vector<int> apply_noise(const std::vector<int>& tokens, const NoiseSpec& noise,
                             Rng& rng);

// Back-translation: greedy-decode the batch into the other language
// under no-grad, then train on (synthetic, original). Pairs whose
// decode comes back empty are dropped and counted. nullopt when every
// pair was dropped.
std::optional<Tensor> bt_step(const TransformerModel& model, const BpeModel& bpe,
                              const std::vector<std::vector<int>>& mono_batch,
                              int mono_lang_id, int other_lang_id, Rng& rng,
                              int* dropped = nullptr);

// Per-step relevance aggregated across generation steps, normalized to
// [-1, 1]. The returned map's step field is 0 (aggregate).
RelevanceMap lrp_relevance_for_training(const ForwardTrace& trace, int tgt_len,
                                        LrpTrainConfig::Aggregate granularity,
                                        const LrpRule& rule);

Reweight reweight_from_map(const RelevanceMap& normalized, const LrpTrainConfig& cfg);

// The relevance-guided MT loss L' = xi*L1 + lambda*L2 over a batch.
// Relevance values are constants: gradients flow through both forward
// passes but not through the propagation itself.
Tensor mt_step(const TransformerModel& model, const BpeModel& bpe, int tgt_lang_id,
               const std::vector<SentencePair>& batch, const LossWeights& weights,
               const LrpTrainConfig& lrp_cfg, Rng& rng, MtDiagnostics& diag,
               RelevanceCache* cache = nullptr,
               const std::vector<long long>* pair_ids = nullptr);

struct TrainOptions {
  ModelConfig model;
  Objective objective;
  LossWeights weights;
  LrpTrainConfig lrp;
  double lr = 1e-4;
  int warmup_steps = 500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int max_epochs = 50;
  int patience = 10;  // stop after this many stagnant validation epochs
  std::uint64_t seed = 1;
  std::string out_dir;  // existing directory for checkpoints + metrics
  int decode_max_steps = 0;  // 0 -> derived from max_len
  bool freeze_params = false;
};

struct MetricRecord {
  int epoch = 0;
  long long step = 0;
  double ppl = std::numeric_limits<double>::quiet_NaN();
  double bleu = std::numeric_limits<double>::quiet_NaN();
  double loss = std::numeric_limits<double>::quiet_NaN();
  double l1 = std::numeric_limits<double>::quiet_NaN();
  double l2 = std::numeric_limits<double>::quiet_NaN();
  double r_source = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  std::string best_checkpoint;
  std::string last_checkpoint;
  std::vector<MetricRecord> history;
  std::string stop_reason;  // "early-stopping" | "max-epochs" | "nan-abort"
  double best_metric = std::numeric_limits<double>::quiet_NaN();
};

struct TrainData {
  ParallelCorpus train;
  ParallelCorpus valid;
  ParallelCorpus test;  // may be empty
};

// Adam with inverse-sqrt warmup, per-epoch validation (BLEU for NMT
// objectives, perplexity for MLM), best-checkpoint retention, early
// stopping after `patience` stagnant epochs. Deterministic for a fixed
// seed and configuration.
TrainResult train(const TrainOptions& opts, const BpeModel& bpe,
                  const TrainData& data);

// Greedy translation of raw sentences (used by validation, the test
// table, and the CLI).
std::vector<std::string> translate_sentences(const TransformerModel& model,
                                             const BpeModel& bpe,
                                             const std::vector<std::string>& sentences,
                                             int tgt_lang_id, int max_steps = 0);

std::string lang_token(const std::string& lang);
int lang_token_id(const BpeModel& bpe, const std::string& lang);

}  // namespace relnmt
