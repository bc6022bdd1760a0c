#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relnmt/common.hpp"

namespace relnmt {

struct ParallelCorpus {
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string src_lang = "src";
  std::string tgt_lang = "tgt";
  std::string split = "train";

  std::size_t size() const { return pairs.size(); }
  std::vector<std::string> source_side() const;
  std::vector<std::string> target_side() const;
};

struct CorpusFilters {
  int max_chars = 200;      // per side, pre-BPE
  double max_ratio = 1.5;   // whitespace-token length ratio
};

struct LoadStats {
  std::size_t read = 0;
  std::size_t dropped_empty = 0;
  std::size_t dropped_long = 0;
  std::size_t dropped_ratio = 0;
};

// One sentence per line, UTF-8, aligned files.
ParallelCorpus load_parallel(const std::string& path_src, const std::string& path_tgt,
                             const CorpusFilters& filters = {},
                             LoadStats* stats = nullptr);

enum class TaskKind { kCopy, kReverse, kVocabMap, kLengthSort };
TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind k);

struct SyntheticTaskSpec {
  TaskKind kind = TaskKind::kVocabMap;
  int vocab = 200;
  int len_min = 3;
  int len_max = 12;
  int train = 2000;
  int valid = 200;
  int test = 200;
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  ParallelCorpus train;
  ParallelCorpus valid;
  ParallelCorpus test;
};

// Deterministic desk-scale stand-in for parallel data; splits are
// disjoint at the sentence level.
SyntheticTask gen_synthetic(const SyntheticTaskSpec& spec);

// Uniform without replacement, order-stable.
ParallelCorpus subsample(const ParallelCorpus& corpus, std::size_t n,
                         std::uint64_t seed);

// Serialized corpus: header "count<TAB>src<TAB>tgt<TAB>split", then one
// tab-separated pair per line.
void save_corpus(const ParallelCorpus& corpus, const std::string& path);
ParallelCorpus load_corpus(const std::string& path);

}  // namespace relnmt
