#include "relnmt/bpe.hpp"

#include <algorithm>
#include <fstream>

namespace relnmt {

namespace {

const char* kSpecialNames[Specials::count] = {"<pad>", "<s>", "</s>", "<unk>",
                                              "<mask>"};

using SymbolSeq = std::vector<std::string>;

SymbolSeq word_symbols(const std::string& word) {
  SymbolSeq s = utf8_chars(word);
  s.push_back(kEndOfWord);
  return s;
}

void apply_merge(SymbolSeq& s, const std::pair<std::string, std::string>& m) {
  SymbolSeq out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    if (i + 1 < s.size() && s[i] == m.first && s[i + 1] == m.second) {
      out.push_back(m.first + m.second);
      i += 2;
    } else {
      out.push_back(s[i]);
      ++i;
    }
  }
  s = std::move(out);
}

}  // namespace

std::vector<std::string> utf8_chars(const std::string& s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if ((c & 0x80u) == 0)
      len = 1;
    else if ((c & 0xE0u) == 0xC0u)
      len = 2;
    else if ((c & 0xF0u) == 0xE0u)
      len = 3;
    else if ((c & 0xF8u) == 0xF0u)
      len = 4;
    len = std::min(len, s.size() - i);
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

int BpeModel::token_id(const std::string& tok) const {
  auto it = token_to_id.find(tok);
  if (it == token_to_id.end()) throw InputError("bpe: unknown token '" + tok + "'");
  return it->second;
}

const std::string& BpeModel::id_token(int id) const {
  if (id < 0 || id >= vocab_size())
    throw InputError("bpe: id " + std::to_string(id) + " out of range [0," +
                     std::to_string(vocab_size()) + ")");
  return id_to_token[static_cast<std::size_t>(id)];
}

BpeModel train_bpe(const std::vector<std::string>& corpus, int num_merges,
                   const std::vector<std::string>& reserved) {
  if (num_merges < 0) throw InputError("train_bpe: num_merges must be >= 0");
  std::map<std::string, long long> word_freq;
  for (const auto& line : corpus)
    for (const auto& w : split_ws(line)) ++word_freq[w];
  if (word_freq.empty()) throw InputError("train_bpe: empty corpus");

  std::vector<std::pair<SymbolSeq, long long>> words;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) words.emplace_back(word_symbols(w), f);

  BpeModel model;
  for (int iter = 0; iter < num_merges; ++iter) {
    std::map<std::pair<std::string, std::string>, long long> pair_count;
    for (const auto& [syms, f] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pair_count[{syms[i], syms[i + 1]}] += f;
    if (pair_count.empty()) break;
    // highest count wins; the ordered map gives the lexicographically
    // smallest pair on ties
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it)
      if (it->second > best->second) best = it;
    model.merges.push_back(best->first);
    for (auto& [syms, f] : words) apply_merge(syms, best->first);
  }

  // Vocabulary: specials, reserved tokens, then every reachable symbol
  // (single characters and merge products) in lexicographic order.
  std::map<std::string, bool> symbols;
  for (const auto& [w, f] : word_freq)
    for (const auto& c : word_symbols(w)) symbols[c] = true;
  for (const auto& m : model.merges) symbols[m.first + m.second] = true;

  auto add_token = [&model](const std::string& tok) {
    if (model.token_to_id.count(tok))
      throw InputError("train_bpe: duplicate token '" + tok + "'");
    model.token_to_id[tok] = model.vocab_size();
    model.id_to_token.push_back(tok);
  };
  for (const char* s : kSpecialNames) add_token(s);
  for (const auto& r : reserved) add_token(r);
  model.num_reserved = static_cast<int>(reserved.size());
  for (const auto& [sym, _] : symbols)
    if (!model.token_to_id.count(sym)) add_token(sym);

  for (std::size_t i = 0; i < model.merges.size(); ++i)
    model.merge_rank[model.merges[i]] = static_cast<int>(i);
  return model;
}

std::vector<int> encode(const BpeModel& model, const std::string& text, bool framing,
                        int max_len) {
  std::vector<int> ids;
  if (framing) ids.push_back(model.specials.bos);
  for (const auto& word : split_ws(text)) {
    SymbolSeq syms = word_symbols(word);
    // apply merges in learned priority order
    while (syms.size() > 1) {
      int best_rank = -1;
      std::size_t best_at = 0;
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
        auto it = model.merge_rank.find({syms[i], syms[i + 1]});
        if (it != model.merge_rank.end() &&
            (best_rank < 0 || it->second < best_rank)) {
          best_rank = it->second;
          best_at = i;
        }
      }
      if (best_rank < 0) break;
      syms[best_at] = syms[best_at] + syms[best_at + 1];
      syms.erase(syms.begin() + static_cast<std::ptrdiff_t>(best_at) + 1);
    }
    for (const auto& s : syms) {
      auto it = model.token_to_id.find(s);
      ids.push_back(it == model.token_to_id.end() ? model.specials.unk : it->second);
    }
  }
  if (framing) ids.push_back(model.specials.eos);
  if (max_len > 0 && static_cast<int>(ids.size()) > max_len) {
    if (framing) {
      ids.resize(static_cast<std::size_t>(max_len) - 1);
      ids.push_back(model.specials.eos);
    } else {
      ids.resize(static_cast<std::size_t>(max_len));
    }
  }
  return ids;
}

std::string decode(const BpeModel& model, const std::vector<int>& ids) {
  std::string joined;
  for (int id : ids) {
    const std::string& tok = model.id_token(id);  // validates range
    if (model.is_special_or_reserved(id)) continue;
    joined += tok;
  }
  // end-of-word sentinels become spaces
  std::string out;
  std::size_t i = 0;
  const std::string eow = kEndOfWord;
  while (i < joined.size()) {
    if (joined.compare(i, eow.size(), eow) == 0) {
      out.push_back(' ');
      i += eow.size();
    } else {
      out.push_back(joined[i]);
      ++i;
    }
  }
  return strip(out);
}

std::string bpe_to_text(const BpeModel& model) {
  std::ostringstream os;
  for (const auto& m : model.merges) os << m.first << ' ' << m.second << '\n';
  for (int id = 0; id < model.vocab_size(); ++id)
    os << model.id_to_token[static_cast<std::size_t>(id)] << '\t' << id << '\n';
  return os.str();
}

BpeModel bpe_from_text(const std::string& text) {
  BpeModel model;
  std::istringstream is(text);
  std::string line;
  std::vector<std::pair<std::string, int>> vocab_entries;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      auto sp = line.find(' ');
      if (sp == std::string::npos)
        throw InputError("bpe_from_text: malformed merge line '" + line + "'");
      model.merges.emplace_back(line.substr(0, sp), line.substr(sp + 1));
    } else {
      vocab_entries.emplace_back(line.substr(0, tab),
                                 std::stoi(line.substr(tab + 1)));
    }
  }
  if (vocab_entries.empty()) throw InputError("bpe_from_text: missing vocab block");
  std::sort(vocab_entries.begin(), vocab_entries.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  for (const auto& [tok, id] : vocab_entries) {
    if (id != model.vocab_size())
      throw InputError("bpe_from_text: non-contiguous vocab ids");
    model.token_to_id[tok] = id;
    model.id_to_token.push_back(tok);
  }
  for (int i = 0; i < Specials::count; ++i)
    if (model.id_to_token[static_cast<std::size_t>(i)] != kSpecialNames[i])
      throw InputError("bpe_from_text: special token block corrupt");
  // reserved tokens sit between the specials and the first alphabet
  // symbol; they are exactly the non-special tokens shaped like <...>
  // occupying a contiguous run from id 5
  int nr = 0;
  for (int id = Specials::count; id < model.vocab_size(); ++id) {
    const std::string& t = model.id_to_token[static_cast<std::size_t>(id)];
    if (t.size() >= 2 && t.front() == '<' && t.back() == '>')
      ++nr;
    else
      break;
  }
  model.num_reserved = nr;
  for (std::size_t i = 0; i < model.merges.size(); ++i)
    model.merge_rank[model.merges[i]] = static_cast<int>(i);
  return model;
}

void save_bpe(const BpeModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("save_bpe: cannot open '" + path + "'");
  os << bpe_to_text(model);
}

BpeModel load_bpe(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("load_bpe: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return bpe_from_text(ss.str());
}

std::uint64_t vocab_hash(const BpeModel& model) {
  const std::string text = bpe_to_text(model);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace relnmt
