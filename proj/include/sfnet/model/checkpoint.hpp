#pragma once

// Checkpoint directory layout:
//   manifest.json  {"format", "version", "dtype", "config", "meta",
//                   "tensors": [{name, shape, dtype, offset, numel, trainable}]}
//   weights.bin    concatenated little-endian tensor buffers, offsets in bytes

#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

#include "sfnet/model/sfnet.hpp"

namespace sfnet::model {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::string dtype;
  std::uint64_t offset = 0;
  std::uint64_t numel = 0;
  bool trainable = true;
};

struct CheckpointManifest {
  std::string dtype;
  SFNetConfig config;
  nlohmann::json meta;
  std::vector<ManifestEntry> tensors;
};

template <typename T>
void save_checkpoint(SFNet<T>& model, const std::filesystem::path& dir,
                     const nlohmann::json& meta = nlohmann::json::object());

CheckpointManifest read_manifest(const std::filesystem::path& dir);

/// Rebuilds the network from the stored config and restores every tensor.
template <typename T>
std::unique_ptr<SFNet<T>> load_checkpoint(const std::filesystem::path& dir);

/// Restores tensors into an existing network whose layout must match.
template <typename T>
void load_into(SFNet<T>& model, const std::filesystem::path& dir);

/// Sum of element counts of trainable tensors listed in the manifest.
std::uint64_t manifest_trainable_count(const CheckpointManifest& manifest);

}  // namespace sfnet::model
