#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "dptbench/encoder.hpp"
#include "dptbench/text.hpp"

namespace dptbench {

// Self-contained model container: encoder config, vocabulary, optional heads,
// and free-form metadata (task, classes, score mode, threshold). Tensor data
// is stored as raw little-endian doubles, so save/load round-trips bitwise.
struct Checkpoint {
  nn::ModelParams model;
  text::Vocab vocab;
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace dptbench
