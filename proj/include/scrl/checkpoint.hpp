#pragma once

#include "scrl/model.hpp"
#include "scrl/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace scrl {

// Flat binary container:
//   magic "SCRL1"
//   u64    header length, then that many bytes of JSON (train config
//          plus dataset dimensions and version)
//   u32    parameter count
//   per parameter: u32 name length, name bytes, u64 rows, u64 cols,
//          rows*cols little-endian IEEE-754 doubles, row-major
struct CheckpointHeader {
  TrainConfig config;
  int num_nodes = 0;
  int num_features = 0;
  int num_classes = 0;
  std::string version;

  nlohmann::json to_json() const;
  static CheckpointHeader from_json(const nlohmann::json& j);
};

void save_checkpoint(const std::filesystem::path& file, const CheckpointHeader& header,
                     const std::vector<Parameter*>& params);

struct LoadedCheckpoint {
  CheckpointHeader header;
  std::vector<std::pair<std::string, Matrix>> params;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& file);

/// Rebuilds a model from a checkpoint; throws ValidationError on any
/// name or shape mismatch.
ScrlModel model_from_checkpoint(const LoadedCheckpoint& ckpt);

}  // namespace scrl
