#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "relnmt/common.hpp"

namespace relnmt {

// Ids of the named special tokens; always the lowest ids in the vocab.
struct Specials {
  int pad = 0;
  int bos = 1;
  int eos = 2;
  int unk = 3;
  int mask = 4;
  static constexpr int count = 5;
};

// Learned byte-pair-encoding model: ordered merge table plus a
// token<->id bijection. Immutable after training.
struct BpeModel {
  std::vector<std::pair<std::string, std::string>> merges;
  std::map<std::string, int> token_to_id;
  std::vector<std::string> id_to_token;
  Specials specials;
  // Reserved tokens (e.g. language markers) occupy ids right after the
  // specials; they are never produced by merges.
  int num_reserved = 0;
  std::map<std::pair<std::string, std::string>, int> merge_rank;

  int vocab_size() const { return static_cast<int>(id_to_token.size()); }
  bool has_token(const std::string& tok) const { return token_to_id.count(tok) > 0; }
  int token_id(const std::string& tok) const;
  const std::string& id_token(int id) const;
  bool is_special_or_reserved(int id) const {
    return id >= 0 && id < Specials::count + num_reserved;
  }
};

// End-of-word sentinel appended to each word before merging (U+00B7).
// Input text must not itself contain this code point.
inline constexpr const char* kEndOfWord = "\xC2\xB7";

// Greedy highest-frequency pair merging, ties broken lexicographically.
BpeModel train_bpe(const std::vector<std::string>& corpus, int num_merges,
                   const std::vector<std::string>& reserved = {});

// Deterministic encoding; unknown symbols map to UNK. With framing the
// output is BOS ... EOS; max_len > 0 truncates (framing preserved).
std::vector<int> encode(const BpeModel& model, const std::string& text,
                        bool framing = false, int max_len = 0);

// Inverse of encode over the training alphabet; specials and reserved
// tokens are stripped.
std::string decode(const BpeModel& model, const std::vector<int>& ids);

// Text persistence: one merge per line "left right", then a vocab block
// "token<TAB>id". UTF-8 throughout.
std::string bpe_to_text(const BpeModel& model);
BpeModel bpe_from_text(const std::string& text);
void save_bpe(const BpeModel& model, const std::string& path);
BpeModel load_bpe(const std::string& path);

// FNV-1a of the serialized model; used for checkpoint/vocab compatibility.
std::uint64_t vocab_hash(const BpeModel& model);

// Splits a UTF-8 string into code points (as strings).
std::vector<std::string> utf8_chars(const std::string& s);

}  // namespace relnmt
