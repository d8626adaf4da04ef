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

// Naive double-precision reference kernels used as test oracles. Written
// as direct loops with no shared code with the library so that agreement
// means something.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "curio/tensor.hpp"

namespace curio::oracle {

using Vec = std::vector<double>;

inline Vec to_double(std::span<const float> v) { return Vec(v.begin(), v.end()); }

inline std::vector<float> random_floats(std::mt19937_64& rng, std::size_t n,
                                        float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> out(n);
  for (float& v : out) v = u(rng);
  return out;
}

// Pass when |a-b| <= rel*max(|a|,|b|) or |a-b| <= abs_floor.
inline bool close(double a, double b, double rel, double abs_floor) {
  const double diff = std::fabs(a - b);
  return diff <= abs_floor || diff <= rel * std::max(std::fabs(a), std::fabs(b));
}

// [M,K] x [K,N].
inline Vec matmul(const Vec& a, const Vec& b, int m, int k, int n) {
  Vec y(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      y[i * n + j] = acc;
    }
  return y;
}

// x [B,H,W,C], w [k,k,C,O], bias [O]; NHWC direct convolution.
inline Vec conv2d(const Vec& x, const Vec& w, const Vec& bias, int B, int H, int W,
                  int C, int k, int O, int stride, int pad, int* out_h = nullptr,
                  int* out_w = nullptr) {
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (out_h) *out_h = Ho;
  if (out_w) *out_w = Wo;
  Vec y(static_cast<std::size_t>(B) * Ho * Wo * O, 0.0);
  for (int b = 0; b < B; ++b)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox)
        for (int o = 0; o < O; ++o) {
          double acc = bias[o];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              for (int c = 0; c < C; ++c) {
                acc += x[((b * H + iy) * W + ix) * C + c] *
                       w[((ky * k + kx) * C + c) * O + o];
              }
            }
          y[((b * Ho + oy) * Wo + ox) * O + o] = acc;
        }
  return y;
}

// Transposed convolution: x [B,H,W,C], w [C,k,k,O], bias [O]. Every input
// pixel scatters a weighted k x k stamp into the output.
inline Vec conv_transpose2d(const Vec& x, const Vec& w, const Vec& bias, int B, int H,
                            int W, int C, int k, int O, int stride, int pad,
                            int output_padding) {
  const int Ho = (H - 1) * stride - 2 * pad + k + output_padding;
  const int Wo = (W - 1) * stride - 2 * pad + k + output_padding;
  Vec y(static_cast<std::size_t>(B) * Ho * Wo * O, 0.0);
  for (int b = 0; b < B; ++b)
    for (int q = 0; q < Ho * Wo; ++q)
      for (int o = 0; o < O; ++o) y[(b * Ho * Wo + q) * O + o] = bias[o];
  for (int b = 0; b < B; ++b)
    for (int iy = 0; iy < H; ++iy)
      for (int ix = 0; ix < W; ++ix)
        for (int c = 0; c < C; ++c) {
          const double v = x[((b * H + iy) * W + ix) * C + c];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int oy = iy * stride - pad + ky;
              const int ox = ix * stride - pad + kx;
              if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
              for (int o = 0; o < O; ++o) {
                y[((b * Ho + oy) * Wo + ox) * O + o] +=
                    v * w[((c * k + ky) * k + kx) * O + o];
              }
            }
        }
  return y;
}

inline double elu(double v) { return v > 0.0 ? v : std::exp(v) - 1.0; }

inline Vec elu(const Vec& x) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = elu(x[i]);
  return y;
}

inline Vec softmax_rows(const Vec& x, int n, bool log_space) {
  Vec y(x.size());
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    double z = 0.0;
    for (int j = 0; j < n; ++j) z += std::exp(x[r * n + j]);
    for (int j = 0; j < n; ++j) {
      y[r * n + j] = log_space ? x[r * n + j] - std::log(z) : std::exp(x[r * n + j]) / z;
    }
  }
  return y;
}

inline Vec add_bias(const Vec& x, const Vec& bias) {
  Vec y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + bias[i % bias.size()];
  return y;
}

inline double dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace curio::oracle
