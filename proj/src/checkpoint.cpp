#include "relnmt/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace relnmt {

namespace {

constexpr const char* kMagic = "RELNMT-CKPT v1";

// Parameter payloads are raw little-endian float64; this codebase
// assumes a little-endian host (checked at load).
bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  return b == 1;
}

}  // namespace

std::map<std::string, std::string> model_config_to_meta(const ModelConfig& cfg) {
  std::map<std::string, std::string> m;
  m["model.n_layers"] = std::to_string(cfg.n_layers);
  m["model.n_heads"] = std::to_string(cfg.n_heads);
  m["model.d_model"] = std::to_string(cfg.d_model);
  m["model.d_ff"] = std::to_string(cfg.d_ff);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", cfg.dropout);
  m["model.dropout"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", cfg.attn_dropout);
  m["model.attn_dropout"] = buf;
  m["model.max_len"] = std::to_string(cfg.max_len);
  m["model.vocab_size"] = std::to_string(cfg.vocab_size);
  m["model.tie_embeddings"] = cfg.tie_embeddings ? "true" : "false";
  m["model.reweight_position"] =
      cfg.reweight_position == ReweightPosition::kBlockInput ? "block-input"
                                                             : "post-residual";
  return m;
}

ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta) {
  ModelConfig cfg;
  auto get = [&meta](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end())
      throw InputError("checkpoint: missing config key '" + key + "'");
    return it->second;
  };
  cfg.n_layers = std::stoi(get("model.n_layers"));
  cfg.n_heads = std::stoi(get("model.n_heads"));
  cfg.d_model = std::stoi(get("model.d_model"));
  cfg.d_ff = std::stoi(get("model.d_ff"));
  cfg.dropout = std::stod(get("model.dropout"));
  cfg.attn_dropout = std::stod(get("model.attn_dropout"));
  cfg.max_len = std::stoi(get("model.max_len"));
  cfg.vocab_size = std::stoi(get("model.vocab_size"));
  cfg.tie_embeddings = get("model.tie_embeddings") == "true";
  cfg.reweight_position = get("model.reweight_position") == "post-residual"
                              ? ReweightPosition::kPostResidual
                              : ReweightPosition::kBlockInput;
  return cfg;
}

void save_checkpoint(const std::string& path, const TransformerModel& model,
                     const BpeModel& bpe,
                     const std::map<std::string, std::string>& extra_meta) {
  if (!host_is_little_endian())
    throw NumericError("checkpoint: big-endian hosts are not supported");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("save_checkpoint: cannot open '" + path + "'");
  os << kMagic << '\n';

  std::map<std::string, std::string> meta = model_config_to_meta(model.cfg);
  for (const auto& [k, v] : extra_meta) meta[k] = v;
  meta["vocab_hash"] = std::to_string(vocab_hash(bpe));
  std::string meta_text;
  for (const auto& [k, v] : meta) meta_text += k + "=" + v + "\n";
  os << "meta " << meta_text.size() << '\n' << meta_text;

  const std::string bpe_text = bpe_to_text(bpe);
  os << "tokenizer " << bpe_text.size() << '\n' << bpe_text;

  for (const auto& [name, t] : named_params(model)) {
    os << "param " << name << ' ' << t.shape().size();
    for (Index d : t.shape()) os << ' ' << d;
    const std::size_t nbytes = static_cast<std::size_t>(t.size()) * sizeof(double);
    os << ' ' << nbytes << '\n';
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(nbytes));
  }
  os << "end\n";
  if (!os) throw InputError("save_checkpoint: write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  if (!host_is_little_endian())
    throw NumericError("checkpoint: big-endian hosts are not supported");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("load_checkpoint: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(is, line) || line != kMagic)
    throw InputError("load_checkpoint: '" + path + "' is not a " + kMagic +
                     " container");

  Checkpoint out;
  std::map<std::string, ArrayXd> params;
  std::map<std::string, std::vector<Index>> shapes;
  while (std::getline(is, line)) {
    if (line == "end") break;
    std::istringstream hs(line);
    std::string kind;
    hs >> kind;
    if (kind == "meta" || kind == "tokenizer") {
      std::size_t n = 0;
      hs >> n;
      std::string body(n, '\0');
      is.read(body.data(), static_cast<std::streamsize>(n));
      if (!is) throw InputError("load_checkpoint: truncated " + kind + " section");
      if (kind == "tokenizer") {
        out.bpe = bpe_from_text(body);
      } else {
        std::istringstream ms(body);
        std::string ml;
        while (std::getline(ms, ml)) {
          auto eq = ml.find('=');
          if (eq != std::string::npos) out.meta[ml.substr(0, eq)] = ml.substr(eq + 1);
        }
      }
    } else if (kind == "param") {
      std::string name;
      int ndim = 0;
      hs >> name >> ndim;
      std::vector<Index> shape(static_cast<std::size_t>(ndim));
      for (auto& d : shape) hs >> d;
      std::size_t nbytes = 0;
      hs >> nbytes;
      ArrayXd data(static_cast<Index>(nbytes / sizeof(double)));
      is.read(reinterpret_cast<char*>(data.data()),
              static_cast<std::streamsize>(nbytes));
      if (!is) throw InputError("load_checkpoint: truncated param '" + name + "'");
      params[name] = std::move(data);
      shapes[name] = std::move(shape);
    } else {
      throw InputError("load_checkpoint: unknown section '" + kind + "'");
    }
  }

  ModelConfig cfg = model_config_from_meta(out.meta);
  Rng scratch(0);
  out.model = build_model(cfg, scratch);
  for (auto& [name, t] : named_params(out.model)) {
    auto it = params.find(name);
    if (it == params.end())
      throw InputError("load_checkpoint: missing parameter '" + name + "'");
    if (shapes[name] != t.shape() || it->second.size() != t.size())
      throw InputError("load_checkpoint: shape mismatch for '" + name + "'");
    t.value() = it->second;
    params.erase(it);
  }
  if (!params.empty())
    throw InputError("load_checkpoint: unexpected parameter '" +
                     params.begin()->first + "'");
  return out;
}

}  // namespace relnmt
