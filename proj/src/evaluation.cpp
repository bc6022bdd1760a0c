#include "relnmt/evaluation.hpp"

#include <cmath>
#include <map>

namespace relnmt {

namespace {

using NgramCounts = std::map<std::vector<std::string>, long long>;

NgramCounts count_ngrams(const std::vector<std::string>& toks, int n) {
  NgramCounts out;
  if (static_cast<int>(toks.size()) < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i)
    ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

BleuReport bleu(const std::vector<std::string>& hypotheses,
                const std::vector<std::string>& references) {
  if (hypotheses.empty()) throw InputError("bleu: empty corpus");
  if (hypotheses.size() != references.size())
    throw InputError("bleu: " + std::to_string(hypotheses.size()) +
                     " hypotheses vs " + std::to_string(references.size()) +
                     " references");
  long long match[4] = {0, 0, 0, 0};
  long long total[4] = {0, 0, 0, 0};
  BleuReport rep;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    auto hyp = split_ws(hypotheses[i]);
    auto ref = split_ws(references[i]);
    rep.hyp_len += static_cast<long long>(hyp.size());
    rep.ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
      auto hc = count_ngrams(hyp, n);
      auto rc = count_ngrams(ref, n);
      for (const auto& [gram, c] : hc) {
        total[n - 1] += c;
        auto it = rc.find(gram);
        if (it != rc.end()) match[n - 1] += std::min(c, it->second);  // clipped
      }
    }
  }
  // any empty unsmoothed count basis -> 0
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0) return rep;
    rep.precisions[n] =
        n == 0 ? static_cast<double>(match[0]) / static_cast<double>(total[0])
               : static_cast<double>(match[n] + 1) / static_cast<double>(total[n] + 1);
  }
  rep.brevity_penalty =
      rep.hyp_len >= rep.ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(rep.ref_len) /
                               static_cast<double>(rep.hyp_len));
  if (rep.precisions[0] == 0.0) return rep;  // no unigram overlap
  double log_sum = 0.0;
  for (double p : rep.precisions) log_sum += std::log(p);
  rep.bleu = 100.0 * rep.brevity_penalty * std::exp(log_sum / 4.0);
  return rep;
}

double perplexity(const TransformerModel& model, const BpeModel& bpe,
                  const std::vector<std::string>& corpus, std::uint64_t mask_seed,
                  double mask_rate) {
  if (corpus.empty()) throw InputError("perplexity: empty corpus");
  NoGradGuard guard;
  double total_nll = 0.0;
  long long total_masked = 0;
  for (std::size_t si = 0; si < corpus.size(); ++si) {
    std::vector<int> ids = encode(bpe, corpus[si], true, model.cfg.max_len);
    // content positions only (skip framing)
    std::vector<int> positions;
    for (std::size_t p = 1; p + 1 < ids.size(); ++p)
      positions.push_back(static_cast<int>(p));
    if (positions.empty()) continue;
    Rng rng(mask_seed ^ (si * 0x9e3779b97f4a7c15ULL + 1));
    rng.shuffle(positions);
    std::size_t n_mask = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::llround(mask_rate * static_cast<double>(positions.size()))));
    n_mask = std::min(n_mask, positions.size());
    std::vector<int> masked = ids;
    for (std::size_t k = 0; k < n_mask; ++k)
      masked[static_cast<std::size_t>(positions[k])] = bpe.specials.mask;
    Tensor logits = mlm_logits(model, masked);
    const Index vlen = logits.cols();
    auto lm = logits.mat();
    for (std::size_t k = 0; k < n_mask; ++k) {
      const Index row = positions[k];
      const double mx = lm.row(row).maxCoeff();
      const double lse = mx + std::log((lm.row(row).array() - mx).exp().sum());
      total_nll += lse - lm(row, ids[static_cast<std::size_t>(row)]);
      ++total_masked;
    }
    (void)vlen;
  }
  if (total_masked == 0) throw InputError("perplexity: no maskable tokens in corpus");
  return std::exp(total_nll / static_cast<double>(total_masked));
}

}  // namespace relnmt
