#include "relnmt/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace relnmt {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Deterministic vocabulary of short pronounceable-ish words.
std::vector<std::string> synthetic_vocab(int n, Rng& rng) {
  std::set<std::string> seen;
  std::vector<std::string> out;
  const std::string alpha = "abcdefghijklmnopqrstuvwxyz";
  while (static_cast<int>(out.size()) < n) {
    int len = 3 + static_cast<int>(rng.uniform_int(3));
    std::string w;
    for (int i = 0; i < len; ++i) w.push_back(alpha[rng.uniform_int(alpha.size())]);
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

}  // namespace

std::vector<std::string> ParallelCorpus::source_side() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.first);
  return out;
}

std::vector<std::string> ParallelCorpus::target_side() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.second);
  return out;
}

ParallelCorpus load_parallel(const std::string& path_src, const std::string& path_tgt,
                             const CorpusFilters& filters, LoadStats* stats) {
  auto src = read_lines(path_src);
  auto tgt = read_lines(path_tgt);
  if (src.size() != tgt.size())
    throw InputError("load_parallel: line counts differ, " +
                     std::to_string(src.size()) + " in '" + path_src + "' vs " +
                     std::to_string(tgt.size()) + " in '" + path_tgt + "'");
  ParallelCorpus out;
  LoadStats local;
  local.read = src.size();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const std::string s = strip(src[i]);
    const std::string t = strip(tgt[i]);
    if (s.empty() || t.empty()) {
      ++local.dropped_empty;
      continue;
    }
    if (static_cast<int>(s.size()) > filters.max_chars ||
        static_cast<int>(t.size()) > filters.max_chars) {
      ++local.dropped_long;
      continue;
    }
    const double ls = static_cast<double>(split_ws(s).size());
    const double lt = static_cast<double>(split_ws(t).size());
    if (std::max(ls, lt) / std::min(ls, lt) > filters.max_ratio) {
      ++local.dropped_ratio;
      continue;
    }
    out.pairs.emplace_back(s, t);
  }
  if (stats) *stats = local;
  return out;
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::kCopy;
  if (s == "reverse") return TaskKind::kReverse;
  if (s == "vocab-map") return TaskKind::kVocabMap;
  if (s == "length-sort") return TaskKind::kLengthSort;
  throw ConfigError("unknown synthetic task '" + s +
                    "' (expected copy|reverse|vocab-map|length-sort)");
}

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::kCopy:
      return "copy";
    case TaskKind::kReverse:
      return "reverse";
    case TaskKind::kVocabMap:
      return "vocab-map";
    case TaskKind::kLengthSort:
      return "length-sort";
  }
  return "?";
}

SyntheticTask gen_synthetic(const SyntheticTaskSpec& spec) {
  if (spec.vocab < 2 || spec.len_min < 1 || spec.len_max < spec.len_min)
    throw InputError("gen_synthetic: invalid spec");
  Rng rng(spec.seed);
  auto vocab = synthetic_vocab(spec.vocab, rng);

  // fixed random bijection over the vocabulary for vocab-map
  std::vector<int> perm(vocab.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  rng.shuffle(perm);

  auto make_target = [&](const std::vector<int>& toks) {
    std::vector<std::string> words;
    switch (spec.kind) {
      case TaskKind::kCopy:
        for (int t : toks) words.push_back(vocab[t]);
        break;
      case TaskKind::kReverse:
        for (auto it = toks.rbegin(); it != toks.rend(); ++it)
          words.push_back(vocab[*it]);
        break;
      case TaskKind::kVocabMap:
        for (int t : toks) words.push_back(vocab[perm[t]]);
        break;
      case TaskKind::kLengthSort: {
        for (int t : toks) words.push_back(vocab[t]);
        std::stable_sort(words.begin(), words.end(),
                         [](const std::string& a, const std::string& b) {
                           return a.size() != b.size() ? a.size() < b.size() : a < b;
                         });
        break;
      }
    }
    return join(words, " ");
  };

  std::set<std::string> used;
  auto gen_split = [&](int count, const std::string& name) {
    ParallelCorpus c;
    c.split = name;
    int guard = 0;
    while (static_cast<int>(c.pairs.size()) < count) {
      if (++guard > count * 1000)
        throw InputError("gen_synthetic: cannot generate enough distinct sentences");
      int len = spec.len_min +
                static_cast<int>(rng.uniform_int(spec.len_max - spec.len_min + 1));
      std::vector<int> toks;
      for (int i = 0; i < len; ++i)
        toks.push_back(static_cast<int>(rng.uniform_int(vocab.size())));
      std::vector<std::string> words;
      for (int t : toks) words.push_back(vocab[t]);
      std::string src = join(words, " ");
      if (!used.insert(src).second) continue;  // keep splits disjoint
      c.pairs.emplace_back(src, make_target(toks));
    }
    return c;
  };

  SyntheticTask task;
  task.train = gen_split(spec.train, "train");
  task.valid = gen_split(spec.valid, "valid");
  task.test = gen_split(spec.test, "test");
  return task;
}

ParallelCorpus subsample(const ParallelCorpus& corpus, std::size_t n,
                         std::uint64_t seed) {
  if (n > corpus.size())
    throw InputError("subsample: n=" + std::to_string(n) + " exceeds corpus size " +
                     std::to_string(corpus.size()));
  std::vector<std::size_t> idx(corpus.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());  // order-stable
  ParallelCorpus out;
  out.src_lang = corpus.src_lang;
  out.tgt_lang = corpus.tgt_lang;
  out.split = corpus.split;
  for (std::size_t i : idx) out.pairs.push_back(corpus.pairs[i]);
  return out;
}

void save_corpus(const ParallelCorpus& corpus, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("save_corpus: cannot open '" + path + "'");
  os << corpus.size() << '\t' << corpus.src_lang << '\t' << corpus.tgt_lang << '\t'
     << corpus.split << '\n';
  for (const auto& [s, t] : corpus.pairs) os << s << '\t' << t << '\n';
}

ParallelCorpus load_corpus(const std::string& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw InputError("load_corpus: empty file '" + path + "'");
  auto head = split_on(lines[0], '\t');
  if (head.size() != 4) throw InputError("load_corpus: malformed header in '" + path + "'");
  ParallelCorpus out;
  out.src_lang = head[1];
  out.tgt_lang = head[2];
  out.split = head[3];
  const std::size_t count = std::stoul(head[0]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto parts = split_on(lines[i], '\t');
    if (parts.size() != 2)
      throw InputError("load_corpus: malformed pair at line " + std::to_string(i + 1));
    out.pairs.emplace_back(parts[0], parts[1]);
  }
  if (out.size() != count)
    throw InputError("load_corpus: header count " + std::to_string(count) +
                     " != actual " + std::to_string(out.size()));
  return out;
}

}  // namespace relnmt
