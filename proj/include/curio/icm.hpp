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

// Intrinsic curiosity module: inverse and forward dynamics heads over the
// learned embedding phi, the prediction-error reward, the pixel-space
// ablation and random reward sources.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "curio/nn.hpp"
#include "curio/tensor.hpp"

namespace curio {

/// Action logits [B,A] from concat[phi_t, phi_t1].
Tensor inverse_predict(Graph& graph, ParameterSet& params, const Tensor& phi_t,
                       const Tensor& phi_t1);

/// Mean negative log-likelihood of `actions` under softmax(logits).
/// Throws ContractError for an action outside [0,A).
Tensor inverse_loss(const Tensor& action_logits, std::span<const int> actions);

/// phi_hat_t1 [B,F] from concat[phi_t, one_hot(actions)].
Tensor forward_predict(Graph& graph, ParameterSet& params, const Tensor& phi_t,
                       std::span<const int> actions);

/// Mean over the batch of 0.5 * ||phi_hat - phi_t1||^2. The target is
/// detached.
Tensor forward_loss(const Tensor& phi_hat_t1, const Tensor& phi_t1);

/// Per-row eta/2 * ||phi_hat - phi||^2 over [B,F] host arrays. Throws
/// ConfigError for eta <= 0.
std::vector<float> intrinsic_reward(std::span<const float> phi_hat_t1,
                                    std::span<const float> phi_t1, int rows, double eta);

struct IcmOutput {
  Tensor phi_t;
  Tensor phi_t1;
  Tensor action_logits;
  Tensor phi_hat_t1;
  std::vector<float> r_intrinsic;
};

/// Full ICM pass over a transition batch. When `detach_forward_input` is set
/// the forward head sees phi_t through a stop-gradient, so L_F cannot shape
/// the encoder.
IcmOutput icm_forward(Graph& graph, ParameterSet& params, const Tensor& obs_t,
                      const Tensor& obs_t1, std::span<const int> actions, double eta,
                      bool detach_forward_input = true);

/// ICM-pixels: predicts the newest frame of s_{t+1}, [B,1,42,42].
Tensor pixels_forward(Graph& graph, ParameterSet& params, const Tensor& obs_t,
                      std::span<const int> actions);

/// Mean over pixels of the squared error, per row: [B,1,H,W] vs target
/// [B,1,H,W] -> [B].
Tensor pixel_error(const Tensor& predicted, const Tensor& target);

/// Per-row eta/2 * mean squared pixel error on host arrays.
std::vector<float> pixel_intrinsic_reward(std::span<const float> predicted,
                                          std::span<const float> target, int rows,
                                          double eta);

/// Newest frame of each observation in a [B,C,H,W] batch, as [B,1,H,W].
std::vector<float> newest_frames(std::span<const float> obs, int batch, int channels,
                                 int height, int width);

enum class NoiseKind { kUniform, kGaussian, kLaplacian };

NoiseKind parse_noise_kind(std::string_view name);
std::string_view noise_kind_name(NoiseKind kind);

/// uniform: U[loc, loc+scale]; gaussian: N(loc, scale^2); laplacian:
/// location loc, diversity scale.
struct RandomRewardSpec {
  NoiseKind kind = NoiseKind::kUniform;
  double loc = 0.0;
  double scale = 1.0;
};

double random_reward(std::mt19937_64& rng, const RandomRewardSpec& spec);

}  // namespace curio
