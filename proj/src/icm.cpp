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

#include "curio/icm.hpp"

#include <cmath>

#include "curio/errors.hpp"

namespace curio {

namespace {

void require_features(std::string_view op, const Tensor& t, int feat) {
  if (t.rank() != 2 || (feat > 0 && t.dim(1) != feat)) {
    throw ShapeError(std::string(op) + ": expected [B," + std::to_string(feat) +
                     "] features, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor inverse_predict(Graph& graph, ParameterSet& params, const Tensor& phi_t,
                       const Tensor& phi_t1) {
  const int feat = params.at("icm/inverse/fc/w").shape[0] / 2;
  require_features("inverse_predict", phi_t, feat);
  require_features("inverse_predict", phi_t1, feat);
  if (phi_t.dim(0) != phi_t1.dim(0)) {
    throw ShapeError("inverse_predict: batch mismatch " + shape_str(phi_t.shape()) + " vs " +
                     shape_str(phi_t1.shape()));
  }
  Tensor h = elu(dense(graph, params, "icm/inverse/fc/", concat({phi_t, phi_t1}, 1)));
  return dense(graph, params, "icm/inverse/out/", h);
}

Tensor inverse_loss(const Tensor& action_logits, std::span<const int> actions) {
  if (action_logits.rank() != 2 || action_logits.dim(0) != static_cast<int>(actions.size())) {
    throw ShapeError("inverse_loss: logits " + shape_str(action_logits.shape()) + " for " +
                     std::to_string(actions.size()) + " actions");
  }
  Graph& g = *action_logits.graph();
  Tensor picked = mul(log_softmax(action_logits), one_hot(g, actions, action_logits.dim(1)));
  return scale(sum(picked), -1.0f / static_cast<float>(actions.size()));
}

Tensor forward_predict(Graph& graph, ParameterSet& params, const Tensor& phi_t,
                       std::span<const int> actions) {
  const int actions_n = params.at("icm/forward/fc/w").shape[0] -
                        params.at("icm/forward/out/w").shape[1];
  require_features("forward_predict", phi_t, params.at("icm/forward/out/w").shape[1]);
  if (phi_t.dim(0) != static_cast<int>(actions.size())) {
    throw ShapeError("forward_predict: " + std::to_string(actions.size()) + " actions for " +
                     shape_str(phi_t.shape()));
  }
  Tensor x = concat({phi_t, one_hot(graph, actions, actions_n)}, 1);
  Tensor h = elu(dense(graph, params, "icm/forward/fc/", x));
  return dense(graph, params, "icm/forward/out/", h);
}

Tensor forward_loss(const Tensor& phi_hat_t1, const Tensor& phi_t1) {
  if (phi_hat_t1.shape() != phi_t1.shape() || phi_t1.rank() != 2) {
    throw ShapeError("forward_loss: shape mismatch " + shape_str(phi_hat_t1.shape()) + " vs " +
                     shape_str(phi_t1.shape()));
  }
  Tensor diff = sub(phi_hat_t1, stop_gradient(phi_t1));
  return scale(squared_l2(diff), 0.5f / static_cast<float>(phi_t1.dim(0)));
}

std::vector<float> intrinsic_reward(std::span<const float> phi_hat_t1,
                                    std::span<const float> phi_t1, int rows, double eta) {
  if (!(eta > 0.0)) throw ConfigError("intrinsic_reward: eta must be positive");
  if (phi_hat_t1.size() != phi_t1.size() || rows <= 0 || phi_t1.size() % rows != 0) {
    throw ShapeError("intrinsic_reward: mismatched feature arrays");
  }
  const std::size_t feat = phi_t1.size() / rows;
  std::vector<float> out(rows);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < feat; ++j) {
      const double d = static_cast<double>(phi_hat_t1[r * feat + j]) - phi_t1[r * feat + j];
      acc += d * d;
    }
    out[r] = static_cast<float>(0.5 * eta * acc);
  }
  return out;
}

IcmOutput icm_forward(Graph& graph, ParameterSet& params, const Tensor& obs_t,
                      const Tensor& obs_t1, std::span<const int> actions, double eta,
                      bool detach_forward_input) {
  if (obs_t.shape() != obs_t1.shape()) {
    throw ShapeError("icm_forward: observation shapes differ " + shape_str(obs_t.shape()) +
                     " vs " + shape_str(obs_t1.shape()));
  }
  // One encoder pass over both halves.
  const int b = obs_t.dim(0);
  Tensor phi = encoder_forward(graph, params, concat({obs_t, obs_t1}, 0));
  IcmOutput out;
  out.phi_t = slice(phi, 0, 0, b);
  out.phi_t1 = slice(phi, 0, b, b);
  out.action_logits = inverse_predict(graph, params, out.phi_t, out.phi_t1);
  const Tensor fwd_in = detach_forward_input ? stop_gradient(out.phi_t) : out.phi_t;
  out.phi_hat_t1 = forward_predict(graph, params, fwd_in, actions);
  out.r_intrinsic = intrinsic_reward(out.phi_hat_t1.values(), out.phi_t1.values(), b, eta);
  return out;
}

Tensor pixels_forward(Graph& graph, ParameterSet& params, const Tensor& obs_t,
                      std::span<const int> actions) {
  const int b = obs_t.dim(0);
  Tensor phi = encoder_forward(graph, params, obs_t);
  const int actions_n = params.at("icm/forward/fc/w").shape[0] - phi.dim(1);
  if (b != static_cast<int>(actions.size())) {
    throw ShapeError("pixels_forward: " + std::to_string(actions.size()) + " actions for " +
                     shape_str(obs_t.shape()));
  }
  Tensor h = elu(dense(graph, params, "icm/forward/fc/", concat({phi, one_hot(graph, actions, actions_n)}, 1)));
  h = elu(dense(graph, params, "icm/forward/fc2/", h));
  // Back to the spatial grid of the last encoder layer, then mirror it.
  const ConvStackSpec conv;
  const std::vector<Extent2d> ext = conv.extents();
  h = reshape(h, {b, ext.back().height, ext.back().width, conv.filters});
  for (int l = 0; l < conv.layers; ++l) {
    const std::string base = "icm/forward/deconv" + std::to_string(l) + "/";
    const Extent2d in = ext[ext.size() - 1 - l];
    const Extent2d want = ext[ext.size() - 2 - l];
    const int plain = (in.height - 1) * conv.stride - 2 * conv.pad + conv.kernel;
    h = conv_transpose2d(h, graph.bind(params.at(base + "w")), graph.bind(params.at(base + "b")),
                         conv.stride, conv.pad, want.height - plain);
    if (l + 1 < conv.layers) h = elu(h);
  }
  // [B,H,W,1] and [B,1,H,W] share a layout.
  return reshape(h, {b, 1, conv.height, conv.width});
}

Tensor pixel_error(const Tensor& predicted, const Tensor& target) {
  if (predicted.shape() != target.shape() || predicted.rank() != 4) {
    throw ShapeError("pixel_error: shape mismatch " + shape_str(predicted.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  const int b = predicted.dim(0);
  const int n = static_cast<int>(predicted.size() / b);
  Tensor d = sub(predicted, stop_gradient(target));
  return scale(row_sum(reshape(mul(d, d), {b, n})), 1.0f / static_cast<float>(n));
}

std::vector<float> pixel_intrinsic_reward(std::span<const float> predicted,
                                          std::span<const float> target, int rows,
                                          double eta) {
  if (!(eta > 0.0)) throw ConfigError("pixel_intrinsic_reward: eta must be positive");
  if (predicted.size() != target.size() || rows <= 0 || target.size() % rows != 0) {
    throw ShapeError("pixel_intrinsic_reward: mismatched pixel arrays");
  }
  const std::size_t n = target.size() / rows;
  std::vector<float> out(rows);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(predicted[r * n + j]) - target[r * n + j];
      acc += d * d;
    }
    out[r] = static_cast<float>(0.5 * eta * acc / static_cast<double>(n));
  }
  return out;
}

std::vector<float> newest_frames(std::span<const float> obs, int batch, int channels,
                                 int height, int width) {
  const std::size_t frame = static_cast<std::size_t>(height) * width;
  if (obs.size() != frame * channels * batch) throw ShapeError("newest_frames: size mismatch");
  std::vector<float> out(frame * batch);
  for (int b = 0; b < batch; ++b) {
    const float* src = obs.data() + (static_cast<std::size_t>(b) * channels + channels - 1) * frame;
    std::copy_n(src, frame, out.data() + b * frame);
  }
  return out;
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "uniform") return NoiseKind::kUniform;
  if (name == "gaussian") return NoiseKind::kGaussian;
  if (name == "laplacian") return NoiseKind::kLaplacian;
  throw ConfigError("unknown noise distribution '" + std::string(name) + "'");
}

std::string_view noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kUniform: return "uniform";
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kLaplacian: return "laplacian";
  }
  return "?";
}

double random_reward(std::mt19937_64& rng, const RandomRewardSpec& spec) {
  if (!(spec.scale > 0.0)) throw ConfigError("random reward scale must be positive");
  switch (spec.kind) {
    case NoiseKind::kUniform:
      return std::uniform_real_distribution<double>(spec.loc, spec.loc + spec.scale)(rng);
    case NoiseKind::kGaussian:
      return std::normal_distribution<double>(spec.loc, spec.scale)(rng);
    case NoiseKind::kLaplacian: {
      // Exponential magnitude with a fair random sign.
      const double mag = std::exponential_distribution<double>(1.0 / spec.scale)(rng);
      return spec.loc + ((rng() & 1u) != 0 ? mag : -mag);
    }
  }
  throw ConfigError("unknown noise distribution");
}

}  // namespace curio
