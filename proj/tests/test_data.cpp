#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "relnmt/data.hpp"

using namespace relnmt;

namespace {

std::string tmp_file(const std::string& name, const std::string& content) {
  std::string path = "/tmp/relnmt_test_" + name;
  std::ofstream os(path, std::ios::binary);
  os << content;
  return path;
}

}  // namespace

TEST_CASE("load_parallel: identical aligned files") {
  auto s = tmp_file("lp_src.txt", "one two\nthree four\nfive six\n");
  auto t = tmp_file("lp_tgt.txt", "one two\nthree four\nfive six\n");
  auto c = load_parallel(s, t);
  CHECK(c.size() == 3);
}

TEST_CASE("load_parallel: line count mismatch names both counts") {
  auto s = tmp_file("lp2_src.txt", "a\nb\n");
  auto t = tmp_file("lp2_tgt.txt", "a\n");
  CHECK_THROWS_WITH_AS(load_parallel(s, t), doctest::Contains("2"), InputError);
}

TEST_CASE("load_parallel: empty side dropped and counted") {
  auto s = tmp_file("lp3_src.txt", "keep me\n\nalso keep\n");
  auto t = tmp_file("lp3_tgt.txt", "keep me\nlost\nalso keep\n");
  LoadStats stats;
  auto c = load_parallel(s, t, {}, &stats);
  CHECK(c.size() == 2);
  CHECK(stats.dropped_empty == 1);
  CHECK(stats.read == 3);
}

TEST_CASE("load_parallel: ratio filter keeps the oracle subset") {
  // 10 crafted pairs; token-length ratio must be <= 1.5
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"a b c", "x y z"},          // 3:3 keep
      {"a b c d", "x y"},          // 4:2 drop
      {"a b c", "x y"},            // 3:2 keep
      {"a", "x y"},                // 1:2 drop
      {"a b c d e f", "x y z w"},  // 6:4 keep
      {"a b", "x y z"},            // 2:3 keep
      {"a b", "x y z w"},          // 2:4 drop
      {"a", "x"},                  // keep
      {"a b c d e", "x y z"},      // 5:3 drop
      {"a b c", "x y z w"},        // 3:4 keep
  };
  std::string src, tgt;
  for (auto& [s, t] : pairs) {
    src += s + "\n";
    tgt += t + "\n";
  }
  auto sp = tmp_file("lp4_src.txt", src);
  auto tp = tmp_file("lp4_tgt.txt", tgt);
  LoadStats stats;
  auto c = load_parallel(sp, tp, {}, &stats);
  CHECK(c.size() == 6);
  CHECK(stats.dropped_ratio == 4);
  // oracle recomputation
  std::size_t expect = 0;
  for (auto& [s, t] : pairs) {
    double a = split_ws(s).size(), b = split_ws(t).size();
    if (std::max(a, b) / std::min(a, b) <= 1.5) ++expect;
  }
  CHECK(c.size() == expect);
}

TEST_CASE("load_parallel: over-long side dropped") {
  std::string long_line(250, 'x');
  auto s = tmp_file("lp5_src.txt", "ok\n" + long_line + "\n");
  auto t = tmp_file("lp5_tgt.txt", "ok\nok\n");
  LoadStats stats;
  auto c = load_parallel(s, t, {}, &stats);
  CHECK(c.size() == 1);
  CHECK(stats.dropped_long == 1);
}

TEST_CASE("gen_synthetic: copy and reverse") {
  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kCopy;
  spec.vocab = 20;
  spec.train = 5;
  spec.valid = 2;
  spec.test = 2;
  auto t = gen_synthetic(spec);
  for (const auto& [s, tg] : t.train.pairs) CHECK(s == tg);

  spec.kind = TaskKind::kReverse;
  auto r = gen_synthetic(spec);
  for (const auto& [s, tg] : r.train.pairs) {
    auto sw = split_ws(s);
    auto tw = split_ws(tg);
    REQUIRE(sw.size() == tw.size());
    for (std::size_t i = 0; i < sw.size(); ++i) CHECK(sw[i] == tw[tw.size() - 1 - i]);
  }
}

TEST_CASE("gen_synthetic: vocab-map is a bijection recoverable from data") {
  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kVocabMap;
  spec.vocab = 30;
  spec.train = 200;
  spec.valid = 10;
  spec.test = 10;
  spec.seed = 42;
  auto t = gen_synthetic(spec);
  // learn the forward map from the data, then invert it and recover
  // every source sentence from its target
  std::map<std::string, std::string> fwd, inv;
  for (const auto& [s, tg] : t.train.pairs) {
    auto sw = split_ws(s);
    auto tw = split_ws(tg);
    REQUIRE(sw.size() == tw.size());
    for (std::size_t i = 0; i < sw.size(); ++i) {
      auto it = fwd.find(sw[i]);
      if (it != fwd.end())
        CHECK(it->second == tw[i]);
      else
        fwd[sw[i]] = tw[i];
      auto jt = inv.find(tw[i]);
      if (jt != inv.end())
        CHECK(jt->second == sw[i]);  // injective
      else
        inv[tw[i]] = sw[i];
    }
  }
  for (const auto& [s, tg] : t.train.pairs) {
    auto tw = split_ws(tg);
    std::vector<std::string> rec;
    for (const auto& w : tw) rec.push_back(inv.at(w));
    CHECK(join(rec, " ") == s);
  }
}

TEST_CASE("gen_synthetic: splits disjoint, reproducible") {
  SyntheticTaskSpec spec;
  spec.vocab = 25;
  spec.train = 100;
  spec.valid = 30;
  spec.test = 30;
  spec.seed = 7;
  auto a = gen_synthetic(spec);
  auto b = gen_synthetic(spec);
  CHECK(a.train.pairs == b.train.pairs);
  CHECK(a.valid.pairs == b.valid.pairs);
  CHECK(a.test.pairs == b.test.pairs);
  std::set<std::string> train_src, valid_src;
  for (auto& [s, t] : a.train.pairs) train_src.insert(s);
  for (auto& [s, t] : a.valid.pairs) {
    CHECK(train_src.count(s) == 0);
    valid_src.insert(s);
  }
  for (auto& [s, t] : a.test.pairs) {
    CHECK(train_src.count(s) == 0);
    CHECK(valid_src.count(s) == 0);
  }
}

TEST_CASE("subsample: identity, empty, determinism, bounds") {
  ParallelCorpus c;
  for (int i = 0; i < 20; ++i)
    c.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  auto full = subsample(c, 20, 3);
  CHECK(full.pairs == c.pairs);  // order-stable
  CHECK(subsample(c, 0, 3).size() == 0);
  auto a = subsample(c, 7, 11);
  auto b = subsample(c, 7, 11);
  CHECK(a.pairs == b.pairs);
  // order stability: subsequence of the original order
  std::size_t at = 0;
  for (const auto& p : a.pairs) {
    while (at < c.pairs.size() && c.pairs[at] != p) ++at;
    CHECK(at < c.pairs.size());
  }
  CHECK_THROWS_AS(subsample(c, 21, 3), InputError);
}

TEST_CASE("corpus serialization is byte-stable and round-trips") {
  SyntheticTaskSpec spec;
  spec.vocab = 12;
  spec.train = 15;
  spec.valid = 2;
  spec.test = 2;
  auto t = gen_synthetic(spec);
  std::string p1 = "/tmp/relnmt_test_corpus1.tsv";
  std::string p2 = "/tmp/relnmt_test_corpus2.tsv";
  save_corpus(t.train, p1);
  auto r = load_corpus(p1);
  CHECK(r.pairs == t.train.pairs);
  CHECK(r.split == "train");
  save_corpus(r, p2);
  std::ifstream f1(p1), f2(p2);
  std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(c1 == c2);
}
