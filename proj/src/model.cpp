#include "relnmt/model.hpp"

#include <cmath>

namespace relnmt {

namespace {

constexpr double kMaskNegInf = -1e9;

std::vector<int> iota_ids(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

ArrayXd draw_dropout_mask(Index n, double p, Rng& rng) {
  ArrayXd m(n);
  const double scale = 1.0 / (1.0 - p);
  for (Index i = 0; i < n; ++i) m[i] = rng.bernoulli(1.0 - p) ? scale : 0.0;
  return m;
}

ArrayXd causal_mask(Index q, Index k) {
  ArrayXd m = ArrayXd::Zero(q * k);
  for (Index i = 0; i < q; ++i)
    for (Index j = i + 1; j < k; ++j) m[i * k + j] = kMaskNegInf;
  return m;
}

struct PassContext {
  const TransformerModel& m;
  const ForwardOptions& opts;
};

Tensor maybe_dropout(const PassContext& ctx, const Tensor& x, double p,
                     const ArrayXd* replay_mask, ArrayXd& mask_out) {
  if (ctx.opts.replay) {
    if (replay_mask && replay_mask->size() > 0) {
      mask_out = *replay_mask;
      return apply_mask(x, mask_out);
    }
    return x;
  }
  if (!ctx.opts.train_mode || p <= 0.0) return x;
  if (!ctx.opts.rng) throw ContractError("forward: train mode requires an rng");
  mask_out = draw_dropout_mask(x.size(), p, *ctx.opts.rng);
  return apply_mask(x, mask_out);
}

AttnTrace attention_block(const PassContext& ctx, const AttentionParams& p,
                          const Tensor& ln_g, const Tensor& ln_b, const Tensor& stream,
                          const Tensor* memory, bool causal,
                          const AttnTrace* replay) {
  const auto& cfg = ctx.m.cfg;
  AttnTrace tr;
  tr.is_cross = memory != nullptr;
  tr.block_in = stream;
  tr.normed = layer_norm(stream, ln_g, ln_b);
  const Tensor& mem = memory ? *memory : tr.normed;

  Tensor q = add_rowwise(matmul(tr.normed, p.wq), p.bq);
  Tensor k = add_rowwise(matmul(mem, p.wk), p.bk);
  Tensor v = add_rowwise(matmul(mem, p.wv), p.bv);
  tr.values = v;

  const int heads = cfg.n_heads;
  const Index dh = cfg.d_model / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const Index qlen = stream.rows();
  const Index klen = mem.rows();
  ArrayXd cmask;
  if (causal) cmask = causal_mask(qlen, klen);

  std::vector<Tensor> head_outs;
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, dh);
    Tensor kh = slice_cols(k, h * dh, dh);
    Tensor vh = slice_cols(v, h * dh, dh);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt_dh);
    if (causal) scores = add_const(scores, cmask);
    Tensor a = softmax(scores, -1);
    ArrayXd amask;
    const ArrayXd* ram =
        replay && h < static_cast<int>(replay->attn_mask.size())
            ? &replay->attn_mask[static_cast<std::size_t>(h)]
            : nullptr;
    a = maybe_dropout(ctx, a, cfg.attn_dropout, ram, amask);
    tr.attn_mask.push_back(amask);
    tr.attn.emplace_back(Eigen::Map<const RowMat>(a.value().data(), qlen, klen));
    head_outs.push_back(matmul(a, vh));
  }
  tr.concat = concat_cols(head_outs);
  Tensor proj = add_rowwise(matmul(tr.concat, p.wo), p.bo);
  tr.branch = maybe_dropout(ctx, proj, cfg.dropout,
                            replay ? &replay->resid_mask : nullptr, tr.resid_mask);
  tr.out = add(stream, tr.branch);
  return tr;
}

FfnTrace ffn_block(const PassContext& ctx, const LayerParams& lp, const Tensor& stream,
                   const FfnTrace* replay) {
  FfnTrace tr;
  tr.block_in = stream;
  tr.normed = layer_norm(stream, lp.ln2_g, lp.ln2_b);
  tr.hidden = relu(add_rowwise(matmul(tr.normed, lp.w1), lp.b1));
  Tensor out = add_rowwise(matmul(tr.hidden, lp.w2), lp.b2);
  tr.branch = maybe_dropout(ctx, out, ctx.m.cfg.dropout,
                            replay ? &replay->resid_mask : nullptr, tr.resid_mask);
  tr.out = add(stream, tr.branch);
  return tr;
}

Tensor project_logits(const TransformerModel& m, const Tensor& h) {
  Tensor logits = m.cfg.tie_embeddings ? matmul_nt(h, m.tok_emb) : matmul(h, m.out_w);
  return add_rowwise(logits, m.out_b);
}

// Runs an encoder or decoder stack; memory non-null selects decoder mode.
Tensor run_stack(const PassContext& ctx, const std::vector<LayerParams>& layers,
                 const Tensor& emb, const Tensor* memory, bool causal,
                 const ArrayXd* rw_weights, bool rw_embeddings_only,
                 const std::vector<LayerTrace>* replay,
                 std::vector<LayerTrace>& trace_out) {
  const auto& cfg = ctx.m.cfg;
  Tensor x = emb;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (l > 0 && rw_weights && !rw_embeddings_only &&
        cfg.reweight_position == ReweightPosition::kBlockInput)
      x = scale_rows(x, *rw_weights);
    LayerTrace lt;
    lt.layer_in = x;
    const LayerTrace* rl = replay ? &(*replay)[l] : nullptr;
    lt.self_attn = attention_block(ctx, layers[l].self_attn, layers[l].ln1_g,
                                   layers[l].ln1_b, x, nullptr, causal,
                                   rl ? &rl->self_attn : nullptr);
    Tensor y = lt.self_attn.out;
    if (memory) {
      AttnTrace cross = attention_block(
          ctx, layers[l].cross_attn, layers[l].ln_cross_g, layers[l].ln_cross_b, y,
          memory, false, rl && rl->cross_attn ? &*rl->cross_attn : nullptr);
      y = cross.out;
      lt.cross_attn = std::move(cross);
    }
    lt.ffn = ffn_block(ctx, layers[l], y, rl ? &rl->ffn : nullptr);
    x = lt.ffn.out;
    if (rw_weights && !rw_embeddings_only &&
        cfg.reweight_position == ReweightPosition::kPostResidual)
      x = scale_rows(x, *rw_weights);
    trace_out.push_back(std::move(lt));
  }
  return x;
}

Tensor embed_sequence(const PassContext& ctx, const std::vector<int>& ids,
                      const ArrayXd* rw_weights) {
  Tensor tok = embedding(ctx.m.tok_emb, ids);
  // first layer: only the word embedding is weighted
  if (rw_weights) tok = scale_rows(tok, *rw_weights);
  Tensor pos = embedding(ctx.m.pos_emb, iota_ids(static_cast<int>(ids.size())));
  return add(tok, pos);
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
  if (n_heads < 1) throw ConfigError("model: n_heads must be >= 1");
  if (d_model % n_heads != 0)
    throw ConfigError("model: d_model (" + std::to_string(d_model) +
                      ") not divisible by n_heads (" + std::to_string(n_heads) + ")");
  if (d_ff < 1) throw ConfigError("model: d_ff must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0 || attn_dropout < 0.0 || attn_dropout >= 1.0)
    throw ConfigError("model: dropout values must lie in [0,1)");
  if (max_len < 2) throw ConfigError("model: max_len must be >= 2");
  if (vocab_size < 1) throw ConfigError("model: vocab_size must be set");
}

TransformerModel build_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  TransformerModel m;
  m.cfg = cfg;
  const Index d = cfg.d_model, dff = cfg.d_ff, v = cfg.vocab_size;

  auto xavier = [&rng](Index in, Index out) {
    return Tensor::randn({in, out}, rng,
                         std::sqrt(2.0 / static_cast<double>(in + out)), true);
  };
  auto zeros = [](Index n) { return Tensor::zeros({n}, true); };
  auto ones = [](Index n) { return Tensor::full({n}, 1.0, true); };

  m.tok_emb = Tensor::randn({v, d}, rng, 0.02, true);
  m.pos_emb = Tensor::randn({cfg.max_len, d}, rng, 0.02, true);

  auto make_attn = [&] {
    AttentionParams p;
    p.wq = xavier(d, d);
    p.bq = zeros(d);
    p.wk = xavier(d, d);
    p.bk = zeros(d);
    p.wv = xavier(d, d);
    p.bv = zeros(d);
    p.wo = xavier(d, d);
    p.bo = zeros(d);
    return p;
  };
  auto make_layer = [&](bool with_cross) {
    LayerParams lp;
    lp.ln1_g = ones(d);
    lp.ln1_b = zeros(d);
    lp.self_attn = make_attn();
    if (with_cross) {
      lp.ln_cross_g = ones(d);
      lp.ln_cross_b = zeros(d);
      lp.cross_attn = make_attn();
    }
    lp.ln2_g = ones(d);
    lp.ln2_b = zeros(d);
    lp.w1 = xavier(d, dff);
    lp.b1 = zeros(dff);
    lp.w2 = xavier(dff, d);
    lp.b2 = zeros(d);
    return lp;
  };
  for (int l = 0; l < cfg.n_layers; ++l) m.encoder.push_back(make_layer(false));
  m.enc_ln_g = ones(d);
  m.enc_ln_b = zeros(d);
  for (int l = 0; l < cfg.n_layers; ++l) m.decoder.push_back(make_layer(true));
  m.dec_ln_g = ones(d);
  m.dec_ln_b = zeros(d);
  if (!cfg.tie_embeddings) m.out_w = xavier(d, v);
  m.out_b = zeros(v);
  return m;
}

std::vector<std::pair<std::string, Tensor>> named_params(const TransformerModel& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("emb.tok", m.tok_emb);
  out.emplace_back("emb.pos", m.pos_emb);
  auto add_attn = [&out](const std::string& prefix, const AttentionParams& p) {
    out.emplace_back(prefix + ".wq", p.wq);
    out.emplace_back(prefix + ".bq", p.bq);
    out.emplace_back(prefix + ".wk", p.wk);
    out.emplace_back(prefix + ".bk", p.bk);
    out.emplace_back(prefix + ".wv", p.wv);
    out.emplace_back(prefix + ".bv", p.bv);
    out.emplace_back(prefix + ".wo", p.wo);
    out.emplace_back(prefix + ".bo", p.bo);
  };
  auto add_layer = [&](const std::string& prefix, const LayerParams& lp,
                       bool with_cross) {
    out.emplace_back(prefix + ".ln1.g", lp.ln1_g);
    out.emplace_back(prefix + ".ln1.b", lp.ln1_b);
    add_attn(prefix + ".self", lp.self_attn);
    if (with_cross) {
      out.emplace_back(prefix + ".lnc.g", lp.ln_cross_g);
      out.emplace_back(prefix + ".lnc.b", lp.ln_cross_b);
      add_attn(prefix + ".cross", lp.cross_attn);
    }
    out.emplace_back(prefix + ".ln2.g", lp.ln2_g);
    out.emplace_back(prefix + ".ln2.b", lp.ln2_b);
    out.emplace_back(prefix + ".w1", lp.w1);
    out.emplace_back(prefix + ".b1", lp.b1);
    out.emplace_back(prefix + ".w2", lp.w2);
    out.emplace_back(prefix + ".b2", lp.b2);
  };
  for (std::size_t l = 0; l < m.encoder.size(); ++l)
    add_layer("enc." + std::to_string(l), m.encoder[l], false);
  out.emplace_back("enc.ln.g", m.enc_ln_g);
  out.emplace_back("enc.ln.b", m.enc_ln_b);
  for (std::size_t l = 0; l < m.decoder.size(); ++l)
    add_layer("dec." + std::to_string(l), m.decoder[l], true);
  out.emplace_back("dec.ln.g", m.dec_ln_g);
  out.emplace_back("dec.ln.b", m.dec_ln_b);
  if (!m.cfg.tie_embeddings) out.emplace_back("out.w", m.out_w);
  out.emplace_back("out.b", m.out_b);
  return out;
}

long long count_params(const TransformerModel& m) {
  long long n = 0;
  for (const auto& [name, t] : named_params(m)) n += t.size();
  return n;
}

std::pair<Tensor, ForwardTrace> forward(const TransformerModel& m,
                                        const std::vector<int>& src_ids,
                                        const std::vector<int>& dec_input_ids,
                                        const ForwardOptions& opts) {
  if (src_ids.empty() || dec_input_ids.empty())
    throw InputError("forward: empty sequence");
  if (static_cast<int>(src_ids.size()) > m.cfg.max_len ||
      static_cast<int>(dec_input_ids.size()) > m.cfg.max_len)
    throw InputError("forward: sequence exceeds max_len=" +
                     std::to_string(m.cfg.max_len));
  const Reweight* rw = opts.reweight;
  if (rw) {
    if (rw->src.size() != static_cast<Index>(src_ids.size()) ||
        rw->tgt.size() != static_cast<Index>(dec_input_ids.size()))
      throw ContractError("forward: reweight does not cover the traced tokens (src " +
                          std::to_string(rw->src.size()) + "/" +
                          std::to_string(src_ids.size()) + ", tgt " +
                          std::to_string(rw->tgt.size()) + "/" +
                          std::to_string(dec_input_ids.size()) + ")");
  }

  PassContext ctx{m, opts};
  ForwardTrace tr;
  tr.model = &m;
  tr.src_ids = src_ids;
  tr.dec_ids = dec_input_ids;
  tr.reweighted = rw != nullptr;

  tr.src_emb = embed_sequence(ctx, src_ids, rw ? &rw->src : nullptr);
  Tensor enc_last = run_stack(ctx, m.encoder, tr.src_emb, nullptr, false,
                              rw ? &rw->src : nullptr, rw && rw->embeddings_only,
                              opts.replay ? &opts.replay->encoder : nullptr,
                              tr.encoder);
  tr.enc_out = layer_norm(enc_last, m.enc_ln_g, m.enc_ln_b);

  tr.dec_emb = embed_sequence(ctx, dec_input_ids, rw ? &rw->tgt : nullptr);
  Tensor dec_last = run_stack(ctx, m.decoder, tr.dec_emb, &tr.enc_out, true,
                              rw ? &rw->tgt : nullptr, rw && rw->embeddings_only,
                              opts.replay ? &opts.replay->decoder : nullptr,
                              tr.decoder);
  tr.dec_out = layer_norm(dec_last, m.dec_ln_g, m.dec_ln_b);
  tr.logits = project_logits(m, tr.dec_out);
  return {tr.logits, std::move(tr)};
}

Tensor mlm_logits(const TransformerModel& m, const std::vector<int>& ids,
                  const ForwardOptions& opts) {
  if (ids.empty()) throw InputError("mlm_logits: empty sequence");
  if (static_cast<int>(ids.size()) > m.cfg.max_len)
    throw InputError("mlm_logits: sequence exceeds max_len=" +
                     std::to_string(m.cfg.max_len));
  PassContext ctx{m, opts};
  Tensor emb = embed_sequence(ctx, ids, nullptr);
  std::vector<LayerTrace> scratch;
  Tensor last = run_stack(ctx, m.encoder, emb, nullptr, false, nullptr, false,
                          nullptr, scratch);
  Tensor normed = layer_norm(last, m.enc_ln_g, m.enc_ln_b);
  return project_logits(m, normed);
}

std::vector<int> greedy_decode(const TransformerModel& m,
                               const std::vector<int>& src_ids, int max_steps,
                               int start_id, int eos_id) {
  NoGradGuard guard;
  std::vector<int> out{start_id};
  for (int step = 0; step < max_steps; ++step) {
    if (static_cast<int>(out.size()) >= m.cfg.max_len) break;
    auto [logits, tr] = forward(m, src_ids, out);
    const Index vlen = logits.cols();
    const Index row = logits.rows() - 1;
    const ArrayXd& vals = logits.value();
    int best = 0;
    double best_v = vals[row * vlen];
    for (Index j = 1; j < vlen; ++j) {
      const double x = vals[row * vlen + j];
      if (x > best_v) {  // strict: ties keep the lowest id
        best_v = x;
        best = static_cast<int>(j);
      }
    }
    out.push_back(best);
    if (best == eos_id) break;
  }
  return out;
}

}  // namespace relnmt
