#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "relnmt/tensor.hpp"

namespace relnmt {

// Where relevance reweighting multiplies the stream for layers above the
// first (the first layer always weighs the word embedding only).
enum class ReweightPosition { kBlockInput, kPostResidual };

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 2;
  int d_model = 64;
  int d_ff = 256;  // 4 * d_model
  double dropout = 0.1;
  double attn_dropout = 0.1;
  int max_len = 64;
  int vocab_size = 0;
  bool tie_embeddings = true;
  ReweightPosition reweight_position = ReweightPosition::kBlockInput;

  void validate() const;
};

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct LayerParams {
  Tensor ln1_g, ln1_b;  // before self-attention
  AttentionParams self_attn;
  Tensor ln_cross_g, ln_cross_b;  // decoder only
  AttentionParams cross_attn;     // decoder only
  Tensor ln2_g, ln2_b;  // before feed-forward
  Tensor w1, b1, w2, b2;
};

// Pre-norm encoder-decoder transformer with learned positional
// embeddings and a per-language BOS token supplying the direction signal.
struct TransformerModel {
  ModelConfig cfg;
  Tensor tok_emb;  // [vocab, d]
  Tensor pos_emb;  // [max_len, d]
  std::vector<LayerParams> encoder;
  std::vector<LayerParams> decoder;
  Tensor enc_ln_g, enc_ln_b;  // final encoder norm
  Tensor dec_ln_g, dec_ln_b;  // final decoder norm
  Tensor out_w;  // [d, vocab]; undefined when tie_embeddings
  Tensor out_b;  // [vocab]
};

TransformerModel build_model(const ModelConfig& cfg, Rng& rng);
// Deterministically ordered (name, tensor) view over all trainable
// parameters; the order defines checkpoint and optimizer layout.
std::vector<std::pair<std::string, Tensor>> named_params(const TransformerModel& m);
long long count_params(const TransformerModel& m);

// Per-token multipliers for the relevance-reweighted forward pass.
// `src` aligns with src_ids, `tgt` with the decoder input positions.
struct Reweight {
  ArrayXd src;
  ArrayXd tgt;
  bool embeddings_only = false;
};

// Saved activations of one attention sublayer, sufficient to route
// relevance through the value path with attention weights as constants.
struct AttnTrace {
  Tensor block_in;                // residual stream entering the sublayer
  Tensor normed;                  // LN(block_in)
  Tensor values;                  // V = memory*wv + bv, all heads [k, d]
  std::vector<RowMat> attn;       // per head, softmax (+attn dropout) [q, k]
  std::vector<ArrayXd> attn_mask; // per head dropout pattern; empty if none
  Tensor concat;                  // heads concatenated [q, d]
  Tensor branch;                  // dropout(concat*wo + bo), the added value
  ArrayXd resid_mask;             // empty when no dropout
  Tensor out;                     // block_in + branch
  bool is_cross = false;
};

struct FfnTrace {
  Tensor block_in;
  Tensor normed;
  Tensor hidden;  // relu(normed*w1 + b1)
  Tensor branch;  // dropout(hidden*w2 + b2)
  ArrayXd resid_mask;
  Tensor out;
};

struct LayerTrace {
  Tensor layer_in;  // stream entering the layer (after any reweight)
  AttnTrace self_attn;
  std::optional<AttnTrace> cross_attn;
  FfnTrace ffn;
};

// Every intermediate token representation consumed by relevance
// propagation and by the reweighted pass.
struct ForwardTrace {
  const TransformerModel* model = nullptr;  // owner of the traced pass
  std::vector<int> src_ids;
  std::vector<int> dec_ids;  // decoder input (direction token + prefix)
  bool reweighted = false;
  Tensor src_emb;  // token (+reweight) + positional, encoder layer-1 input
  Tensor dec_emb;
  std::vector<LayerTrace> encoder;
  std::vector<LayerTrace> decoder;
  Tensor enc_out;  // final-normed encoder output (cross-attention memory)
  Tensor dec_out;  // final-normed decoder output
  Tensor logits;   // [dec_len, vocab]
};

struct ForwardOptions {
  bool train_mode = false;  // dropout active (requires rng or replay)
  Rng* rng = nullptr;
  const Reweight* reweight = nullptr;
  // Reuse the dropout masks recorded in a previous trace; the reweighted
  // pass replays the masks of the pass it reweights.
  const ForwardTrace* replay = nullptr;
};

std::pair<Tensor, ForwardTrace> forward(const TransformerModel& m,
                                        const std::vector<int>& src_ids,
                                        const std::vector<int>& dec_input_ids,
                                        const ForwardOptions& opts = {});

// Encoder-only forward + output projection, used by the MLM objective
// and perplexity scoring.
Tensor mlm_logits(const TransformerModel& m, const std::vector<int>& ids,
                  const ForwardOptions& opts = {});

// Iterative argmax decoding from `start_id` until `eos_id` or max_steps
// generated tokens; ties break toward the lowest token id. The returned
// sequence includes the start token and the EOS when produced.
std::vector<int> greedy_decode(const TransformerModel& m,
                               const std::vector<int>& src_ids, int max_steps,
                               int start_id, int eos_id);

}  // namespace relnmt
