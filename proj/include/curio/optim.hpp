// Copyright 2026 The Curio Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Adam and global gradient-norm clipping over a ParameterSet.

#pragma once

#include <cstdint>
#include <vector>

#include "curio/nn.hpp"

namespace curio {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  /// One update from the current gradients. Moments are created lazily to
  /// match the parameter set on first use.
  void step(ParameterSet& params);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::int64_t steps() const { return t_; }

  // Moment access for checkpointing, in parameter order.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  AdamConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

/// Scales every gradient so the global L2 norm is at most max_norm. Returns
/// the norm before clipping; throws DivergenceError when it is not finite.
double clip_grad_norm(ParameterSet& params, double max_norm);

}  // namespace curio
