#pragma once

// Central-difference verification of tape gradients (64-bit).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sfnet/autodiff.hpp"

namespace sfnet {

struct GradCheckOptions {
  double step = 1e-5;
  std::size_t coords_per_tensor = 32;  // tensors with fewer elements are checked exhaustively
  double tolerance = 1e-5;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
  std::uint64_t seed = 0;
  /// Coordinates whose +-step evaluations take different relu / max-pool
  /// branches are not differentiable over the step; they are replaced by
  /// fresh draws, at most this many times per tensor.
  std::size_t max_kink_skips = 64;
};

struct GradCheckEntry {
  std::string name;
  std::size_t coords = 0;
  std::size_t kink_skips = 0;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  std::size_t kink_skips = 0;
  double tolerance = 0;
  bool passed = true;

  std::string table() const;
  nlohmann::json to_json() const;
};

using LossFn = std::function<Var<double>(Tape<double>&)>;

double relative_error(double analytic, double numeric, double floor);

/// Runs loss_fn once with gradients to obtain the analytic values, then
/// perturbs sampled coordinates of every trainable parameter by +-step.
/// loss_fn must build a fresh graph from the current parameter values.
GradCheckReport grad_check(const std::vector<Parameter<double>*>& params, const LossFn& loss_fn,
                           const GradCheckOptions& options = {});

}  // namespace sfnet
