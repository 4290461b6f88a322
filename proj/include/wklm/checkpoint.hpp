#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "wklm/nn.hpp"
#include "wklm/vocab.hpp"

namespace wklm {

struct Model {
  ModelConfig config;
  ModelParams params;
  Vocabulary vocab;
};

nlohmann::json config_to_json(const ModelConfig& config);
// Missing keys keep their defaults; vocab may be absent (filled from data).
ModelConfig config_from_json(const nlohmann::json& j);

// Layout: 8-byte magic "WKLMCKPT", u64 little-endian header length, a JSON
// header {"format", "config", "vocab", "meta", "tensors": [{"name", "shape",
// "offset"}]}, then each tensor as row-major little-endian float64.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& meta = nlohmann::json::object());
// Validates every tensor name and shape against the stored config.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace wklm
