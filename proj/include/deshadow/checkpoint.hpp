#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include <json.hpp>
#include <torch/torch.h>

#include "deshadow/models.hpp"

namespace deshadow {

constexpr std::int64_t kCheckpointVersion = 1;

/// Adam optimizers for the three networks; the critic and the generators
/// are always stepped separately.
struct OptimizerSet {
  std::unique_ptr<torch::optim::Adam> param;
  std::unique_ptr<torch::optim::Adam> matte;
  std::unique_ptr<torch::optim::Adam> critic;
};

struct CheckpointInfo {
  std::int64_t version = kCheckpointVersion;
  nlohmann::json model_config;
  nlohmann::json train_config;  // null when never trained
  std::int64_t step = 0;
  std::int64_t epoch = 0;
};

/// One archive holding the three networks, optionally their optimizer state,
/// and the configuration as embedded JSON. Written to a temporary file and
/// renamed into place.
void save_checkpoint(const std::filesystem::path& path, ModelBundle& models,
                     const OptimizerSet* optimizers, const CheckpointInfo& info);

/// Throws IoError for a missing file and FormatError for a foreign archive.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

/// Rebuilds the networks from the embedded config and loads their weights.
ModelBundle load_models(const std::filesystem::path& path);

/// Restores optimizer state when the archive carries it; returns false otherwise.
bool load_optimizers(const std::filesystem::path& path, OptimizerSet& optimizers);

}  // namespace deshadow
