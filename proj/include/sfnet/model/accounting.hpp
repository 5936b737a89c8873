#pragma once

// Closed-form parameter and FLOP accounting for an SFNetConfig. Nothing is
// allocated; the counts follow from the configuration alone.
//
// FLOP convention: a multiply-accumulate is 2 ops; conv = 2*Cin*Cout*k^3 per
// output voxel; linear = 2*Din*Dout per token; a 3-D FFT over V points costs
// 5*V*log2(V) per channel; the complex filter product costs 6 per stored bin.
// Normalization, activations, pooling and elementwise products are not counted.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfnet/model/config.hpp"

namespace sfnet::model {

struct ModuleCount {
  std::string name;  // stem, blocks.{b}.layers.{l}, transitions.{b}, patch_embed, freq.{i}, head
  std::uint64_t count = 0;
};

struct CountReport {
  std::vector<ModuleCount> modules;
  std::uint64_t total = 0;

  std::string table(const std::string& unit) const;
  nlohmann::json to_json() const;
};

std::uint64_t conv3d_params(std::size_t cin, std::size_t cout, std::size_t k);
std::uint64_t attention_params(std::size_t channels, std::size_t branch_channels);
std::uint64_t dense_layer_params(const SFNetConfig& cfg, std::size_t in_channels);

/// Trainable parameter counts (batch-norm running statistics excluded).
CountReport count_params(const SFNetConfig& cfg);

/// Per-sample FLOPs for the given input extent.
CountReport count_flops(const SFNetConfig& cfg, const std::array<std::size_t, 3>& input_extent);
CountReport count_flops(const SFNetConfig& cfg);

}  // namespace sfnet::model
