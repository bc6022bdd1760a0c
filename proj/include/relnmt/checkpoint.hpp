#pragma once

#include <map>
#include <string>

#include "relnmt/bpe.hpp"
#include "relnmt/model.hpp"

namespace relnmt {

// Self-describing checkpoint container: a version line, the model
// config and metadata as key=value text, the serialized tokenizer, and
// named parameter blobs (row-major float64, little-endian). Round-trips
// bit-exactly.
struct Checkpoint {
  TransformerModel model;
  BpeModel bpe;
  std::map<std::string, std::string> meta;
};

void save_checkpoint(const std::string& path, const TransformerModel& model,
                     const BpeModel& bpe,
                     const std::map<std::string, std::string>& extra_meta = {});

Checkpoint load_checkpoint(const std::string& path);

std::map<std::string, std::string> model_config_to_meta(const ModelConfig& cfg);
ModelConfig model_config_from_meta(const std::map<std::string, std::string>& meta);

}  // namespace relnmt
