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

#include "curio/optim.hpp"

#include <cmath>

#include "curio/errors.hpp"

namespace curio {

Adam::Adam(AdamConfig config) : config_(config) {}

void Adam::step(ParameterSet& params) {
  if (m_.size() != params.size()) {
    m_.clear();
    v_.clear();
    for (const Parameter& p : params) {
      m_.emplace_back(p.value.size(), 0.0f);
      v_.emplace_back(p.value.size(), 0.0f);
    }
  }
  ++t_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const float step = static_cast<float>(config_.learning_rate / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(config_.epsilon);
  const float fb1 = static_cast<float>(b1);
  const float fb2 = static_cast<float>(b2);
  std::size_t k = 0;
  for (Parameter& p : params) {
    auto& m = m_[k];
    auto& v = v_[k];
    ++k;
    if (p.grad.size() != p.value.size()) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      m[i] = fb1 * m[i] + (1.0f - fb1) * g;
      v[i] = fb2 * v[i] + (1.0f - fb2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

double clip_grad_norm(ParameterSet& params, double max_norm) {
  const double norm = params.grad_norm();
  if (!std::isfinite(norm)) throw DivergenceError("non-finite gradient norm");
  if (norm > max_norm && norm > 0.0) {
    const float s = static_cast<float>(max_norm / norm);
    for (Parameter& p : params) {
      for (float& g : p.grad) g *= s;
    }
  }
  return norm;
}

}  // namespace curio
