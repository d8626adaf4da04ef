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

#include <algorithm>
#include <cmath>

#include "curio/envs.hpp"
#include "curio/errors.hpp"

namespace curio {

int noise_patch_start(double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("noise fraction must be in (0,1)");
  return kFramePixels - static_cast<int>(std::lround(fraction * kFramePixels));
}

int apply_noise_patch(std::span<float> frame, std::mt19937_64& rng, double fraction) {
  if (frame.size() != static_cast<std::size_t>(kFramePixels)) {
    throw ShapeError("apply_noise_patch: frame must hold 42x42 pixels");
  }
  const int start = noise_patch_start(fraction);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int i = start; i < kFramePixels; ++i) frame[i] = u(rng);
  return kFramePixels - start;
}

NoiseWrapper::NoiseWrapper(std::unique_ptr<Environment> inner, double fraction)
    : inner_(std::move(inner)), fraction_(fraction), frame_(kFramePixels, 0.0f) {
  noise_patch_start(fraction_);
}

void NoiseWrapper::refresh() {
  const auto f = inner_->frame();
  std::copy(f.begin(), f.end(), frame_.begin());
  apply_noise_patch(frame_, rng_, fraction_);
}

void NoiseWrapper::reset(std::uint64_t seed) {
  inner_->reset(seed);
  rng_.seed(mix_seed(seed, 0x6e6f697365));
  refresh();
}

StepResult NoiseWrapper::step(int action) {
  const StepResult r = inner_->step(action);
  refresh();
  return r;
}

std::unique_ptr<Environment> NoiseWrapper::clone() const {
  auto out = std::make_unique<NoiseWrapper>(inner_->clone(), fraction_);
  out->rng_ = rng_;
  out->frame_ = frame_;
  return out;
}

ActionRepeat::ActionRepeat(std::unique_ptr<Environment> inner, int k)
    : inner_(std::move(inner)), k_(k) {
  if (k_ < 1) throw ConfigError("action repeat must be >= 1");
}

StepResult ActionRepeat::step(int action) {
  StepResult total;
  for (int i = 0; i < k_; ++i) {
    const StepResult r = inner_->step(action);
    total.reward += r.reward;
    total.done = r.done;
    if (r.done) break;
  }
  return total;
}

std::unique_ptr<Environment> ActionRepeat::clone() const {
  return std::make_unique<ActionRepeat>(inner_->clone(), k_);
}

void FrameStack::reset(std::span<const float> frame) {
  std::fill(obs_.begin(), obs_.end(), 0.0f);
  push(frame);
}

void FrameStack::push(std::span<const float> frame) {
  if (frame.size() != static_cast<std::size_t>(kFramePixels)) {
    throw ShapeError("FrameStack: frame must hold 42x42 pixels");
  }
  std::copy(obs_.begin() + kFramePixels, obs_.end(), obs_.begin());
  std::copy(frame.begin(), frame.end(), obs_.end() - kFramePixels);
}

}  // namespace curio
