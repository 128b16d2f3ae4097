// Copyright 2026 The IFAL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "ifal/nn/param_store.hpp"

namespace ifal::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

// One decoupled-weight-decay Adam update over every unfrozen parameter, then
// clears all gradients. Throws UsageError if a trainable parameter has no
// gradient slot (i.e. neither backward nor zero_grad ran since the last step).
void adamw_step(ParamStore& store, AdamWState& state);

}  // namespace ifal::nn
