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

// Parameter containers and the network builders: the four-layer conv
// encoder, the actor-critic trunk and heads, and initialization.

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "curio/tensor.hpp"

namespace curio {

/// Observations are kFrameStack stacked kFrameSize x kFrameSize frames.
inline constexpr int kFrameSize = 42;
inline constexpr int kFrameStack = 4;

inline constexpr std::string_view kPolicyPrefix = "policy/";
inline constexpr std::string_view kEncoderPrefix = "icm/encoder/";
inline constexpr std::string_view kInversePrefix = "icm/inverse/";
inline constexpr std::string_view kForwardPrefix = "icm/forward/";
inline constexpr std::string_view kIcmPrefix = "icm/";

/// Named parameters in insertion order. References returned by add() stay
/// valid for the lifetime of the set.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  /// Throws ContractError on a duplicate name.
  Parameter& add(std::string name, Shape shape);
  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<Parameter*> with_prefix(std::string_view prefix);
  std::vector<std::string> names() const;
  void zero_grad();
  /// L2 norm over the gradients of parameters whose name starts with prefix.
  double grad_norm(std::string_view prefix = "") const;

 private:
  void reindex();

  std::deque<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Shape of the shared convolutional stack.
struct ConvStackSpec {
  int in_channels = kFrameStack;
  int height = kFrameSize;
  int width = kFrameSize;
  int layers = 4;
  int filters = 32;
  int kernel = 3;
  int stride = 2;
  int pad = 1;

  /// Spatial extent after each layer, starting with the input.
  std::vector<Extent2d> extents() const;
  int feature_dim() const;
};

enum class IcmKind { kNone, kFeatures, kPixels };

struct ModelSpec {
  ConvStackSpec conv;
  int actions = 4;
  int hidden = 256;
  IcmKind icm = IcmKind::kFeatures;
};

/// Glorot-uniform weights, zero biases; deterministic given seed. Builds
/// policy/ always and the icm/ groups requested by spec.icm.
ParameterSet init_parameters(const ModelSpec& spec, std::uint64_t seed);

/// Applies the conv stack named by prefix to obs [B,C,H,W] and flattens to
/// [B,feature_dim]. Throws ShapeError on a wrong input shape.
Tensor conv_features(Graph& graph, ParameterSet& params, std::string_view prefix,
                     const Tensor& obs);

/// phi(s): the curiosity encoder.
Tensor encoder_forward(Graph& graph, ParameterSet& params, const Tensor& obs);

struct PolicyOutput {
  Tensor logits;  // [B,A]
  Tensor value;   // [B]
};

PolicyOutput policy_forward(Graph& graph, ParameterSet& params, const Tensor& obs);

/// x [B,in] -> x W + b using params prefix+"w" / prefix+"b".
Tensor dense(Graph& graph, ParameterSet& params, const std::string& prefix,
             const Tensor& x);

/// Wraps a host observation batch [B,C,H,W] as a graph constant.
Tensor observation_tensor(Graph& graph, const std::vector<float>& obs, int batch,
                          const ConvStackSpec& conv);

}  // namespace curio
