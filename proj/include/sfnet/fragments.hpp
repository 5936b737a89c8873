#pragma once

// Small named graphs (64-bit) for gradient checking: single ops, single
// layers, a composite conv->bn->relu->pool->linear stack and the tiny network.

#include <any>
#include <memory>
#include <string>
#include <vector>

#include "sfnet/gradcheck.hpp"

namespace sfnet {

struct Fragment {
  std::string name;
  std::vector<Parameter<double>*> params;  // includes the input tensor(s)
  LossFn loss;
  std::vector<std::shared_ptr<void>> storage;
};

/// Every fragment name accepted by make_fragment, in a fixed order.
const std::vector<std::string>& fragment_names();

/// The ops and layers each checked in isolation (everything except the tiny network).
std::vector<std::string> layer_fragment_names();

/// Builds a fragment with random parameters and inputs drawn from `seed`.
Fragment make_fragment(const std::string& name, std::uint64_t seed);

GradCheckReport check_fragment(const std::string& name, std::uint64_t seed,
                               const GradCheckOptions& options = {});

}  // namespace sfnet
