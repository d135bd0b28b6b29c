#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "steprl/nn/model.hpp"
#include "steprl/nn/optim.hpp"

namespace steprl::nn {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File layout: 8-byte magic, uint64 header length, JSON header (format
// version, model config, tensor names and shapes, optimizer scalars, user
// metadata), then raw little-endian doubles for parameters followed by the
// optimizer moments when present.
struct Checkpoint {
  ModelParams params;
  std::optional<OptimizerState> optimizer;
  nlohmann::json meta = nlohmann::json::object();  // tag, rng state, stage info
};

// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
// Throws CheckpointError on a malformed or truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace steprl::nn
