#pragma once

#include <string>
#include <vector>

#include "relnmt/bpe.hpp"
#include "relnmt/model.hpp"

namespace relnmt {

struct BleuReport {
  double bleu = 0.0;  // in [0, 100]
  double precisions[4] = {0, 0, 0, 0};
  double brevity_penalty = 0.0;
  long long hyp_len = 0;
  long long ref_len = 0;
};

// Corpus-level 4-gram BLEU over whitespace-tokenized detokenized text,
// add-1 smoothing on p_n for n >= 2. Zero when any unsmoothed n-gram
// basis is empty.
BleuReport bleu(const std::vector<std::string>& hypotheses,
                const std::vector<std::string>& references);

// exp(mean token NLL) under MLM scoring with a fixed-seed mask schedule.
double perplexity(const TransformerModel& model, const BpeModel& bpe,
                  const std::vector<std::string>& corpus, std::uint64_t mask_seed,
                  double mask_rate = 0.15);

}  // namespace relnmt
