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

#include "curio/nn.hpp"

#include <cmath>
#include <random>

#include "curio/errors.hpp"

namespace curio {

ParameterSet::ParameterSet(const ParameterSet& other) : params_(other.params_) {
  reindex();
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) {
    params_ = other.params_;
    reindex();
  }
  return *this;
}

void ParameterSet::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

Parameter& ParameterSet::add(std::string name, Shape shape) {
  if (index_.count(name) != 0) throw ContractError("duplicate parameter name " + name);
  index_[name] = params_.size();
  params_.emplace_back(std::move(name), std::move(shape));
  return params_.back();
}

Parameter& ParameterSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw ContractError("unknown parameter " + std::string(name));
  return params_[it->second];
}

const Parameter& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

bool ParameterSet::contains(std::string_view name) const {
  return index_.count(std::string(name)) != 0;
}

std::vector<Parameter*> ParameterSet::with_prefix(std::string_view prefix) {
  std::vector<Parameter*> out;
  for (Parameter& p : params_) {
    if (p.name.starts_with(prefix)) out.push_back(&p);
  }
  return out;
}

std::vector<std::string> ParameterSet::names() const {
  std::vector<std::string> out;
  for (const Parameter& p : params_) out.push_back(p.name);
  return out;
}

void ParameterSet::zero_grad() {
  for (Parameter& p : params_) p.zero_grad();
}

double ParameterSet::grad_norm(std::string_view prefix) const {
  double acc = 0.0;
  for (const Parameter& p : params_) {
    if (!p.name.starts_with(prefix)) continue;
    for (float g : p.grad) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

std::vector<Extent2d> ConvStackSpec::extents() const {
  std::vector<Extent2d> out = {{height, width}};
  for (int l = 0; l < layers; ++l) out.push_back(conv_output_shape(out.back(), kernel, stride, pad));
  return out;
}

int ConvStackSpec::feature_dim() const {
  const Extent2d last = extents().back();
  return last.height * last.width * filters;
}

namespace {

// Glorot-uniform fill for a weight with the given fan sizes.
void glorot(Parameter& p, double fan_in, double fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (float& v : p.value) v = static_cast<float>(u(rng));
}

void add_conv_stack(ParameterSet& set, std::string_view prefix, const ConvStackSpec& c,
                    std::mt19937_64& rng) {
  const int kk = c.kernel * c.kernel;
  int in = c.in_channels;
  for (int l = 0; l < c.layers; ++l) {
    const std::string base = std::string(prefix) + "conv" + std::to_string(l) + "/";
    glorot(set.add(base + "w", {c.kernel, c.kernel, in, c.filters}), kk * in, kk * c.filters, rng);
    set.add(base + "b", {c.filters});
    in = c.filters;
  }
}

void add_dense(ParameterSet& set, const std::string& prefix, int in, int out,
               std::mt19937_64& rng) {
  glorot(set.add(prefix + "w", {in, out}), in, out, rng);
  set.add(prefix + "b", {out});
}

}  // namespace

ParameterSet init_parameters(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParameterSet set;
  const int feat = spec.conv.feature_dim();
  add_conv_stack(set, kPolicyPrefix, spec.conv, rng);
  add_dense(set, "policy/fc/", feat, spec.hidden, rng);
  add_dense(set, "policy/logits/", spec.hidden, spec.actions, rng);
  add_dense(set, "policy/value/", spec.hidden, 1, rng);
  if (spec.icm != IcmKind::kNone) add_conv_stack(set, kEncoderPrefix, spec.conv, rng);
  if (spec.icm == IcmKind::kFeatures) {
    add_dense(set, "icm/inverse/fc/", 2 * feat, spec.hidden, rng);
    add_dense(set, "icm/inverse/out/", spec.hidden, spec.actions, rng);
    add_dense(set, "icm/forward/fc/", feat + spec.actions, spec.hidden, rng);
    add_dense(set, "icm/forward/out/", spec.hidden, feat, rng);
  } else if (spec.icm == IcmKind::kPixels) {
    add_dense(set, "icm/forward/fc/", feat + spec.actions, spec.hidden, rng);
    add_dense(set, "icm/forward/fc2/", spec.hidden, feat, rng);
    const ConvStackSpec& c = spec.conv;
    const int kk = c.kernel * c.kernel;
    for (int l = 0; l < c.layers; ++l) {
      const int out = l + 1 == c.layers ? 1 : c.filters;
      const std::string base = "icm/forward/deconv" + std::to_string(l) + "/";
      glorot(set.add(base + "w", {c.filters, c.kernel, c.kernel, out}), kk * c.filters, kk * out, rng);
      set.add(base + "b", {out});
    }
  }
  return set;
}

Tensor observation_tensor(Graph& graph, const std::vector<float>& obs, int batch,
                          const ConvStackSpec& conv) {
  const Shape shape = {batch, conv.in_channels, conv.height, conv.width};
  if (static_cast<std::int64_t>(obs.size()) != numel(shape)) {
    throw ShapeError("observation_tensor: " + std::to_string(obs.size()) +
                     " values for shape " + shape_str(shape));
  }
  return graph.constant(shape, obs);
}

Tensor conv_features(Graph& graph, ParameterSet& params, std::string_view prefix,
                     const Tensor& obs) {
  const Shape s = obs.shape();
  const Parameter& first = params.at(std::string(prefix) + "conv0/w");
  if (s.size() != 4 || s[1] != first.shape[2] || s[2] != kFrameSize ||
      s[3] != kFrameSize) {
    throw ShapeError(std::string(prefix) + "conv_features: expected [B," +
                     std::to_string(first.shape[2]) + "," +
                     std::to_string(kFrameSize) + "," + std::to_string(kFrameSize) + "] observation, got " + shape_str(s));
  }
  Tensor x = permute(obs, {0, 2, 3, 1});
  for (int l = 0;; ++l) {
    const std::string base = std::string(prefix) + "conv" + std::to_string(l) + "/";
    if (!params.contains(base + "w")) break;
    x = elu(conv2d(x, graph.bind(params.at(base + "w")), graph.bind(params.at(base + "b")), 2, 1));
  }
  return reshape(x, {s[0], x.dim(1) * x.dim(2) * x.dim(3)});
}

Tensor encoder_forward(Graph& graph, ParameterSet& params, const Tensor& obs) {
  return conv_features(graph, params, kEncoderPrefix, obs);
}

Tensor dense(Graph& graph, ParameterSet& params, const std::string& prefix, const Tensor& x) {
  return add_bias(matmul(x, graph.bind(params.at(prefix + "w"))), graph.bind(params.at(prefix + "b")));
}

PolicyOutput policy_forward(Graph& graph, ParameterSet& params, const Tensor& obs) {
  Tensor h = conv_features(graph, params, kPolicyPrefix, obs);
  h = elu(dense(graph, params, "policy/fc/", h));
  Tensor logits = dense(graph, params, "policy/logits/", h);
  Tensor value = dense(graph, params, "policy/value/", h);
  return {logits, reshape(value, {value.dim(0)})};
}

}  // namespace curio
