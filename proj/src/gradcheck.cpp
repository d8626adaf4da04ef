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

// Finite-difference checks of the library's analytic gradients. The
// reference losses are re-evaluated in double precision with plain loops so
// the central differences are not swamped by float rounding.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "curio/harness.hpp"
#include "curio/icm.hpp"

namespace curio {

namespace {

using Doubles = std::map<std::string, std::vector<double>>;

constexpr int kBatch = 3;
constexpr int kA = kMazeActions;

std::vector<double> dense_ref(const std::vector<double>& x, int rows, int in, const std::vector<double>& w,
                              const std::vector<double>& b, int out, bool elu) {
  std::vector<double> y(static_cast<std::size_t>(rows) * out);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < out; ++j) {
      double acc = b[j];
      for (int k = 0; k < in; ++k) acc += x[r * in + k] * w[k * out + j];
      y[r * out + j] = elu ? (acc > 0.0 ? acc : std::expm1(acc)) : acc;
    }
  return y;
}

std::vector<double> log_softmax_row(const double* x, int n) {
  const double m = *std::max_element(x, x + n);
  double z = 0.0;
  for (int j = 0; j < n; ++j) z += std::exp(x[j] - m);
  std::vector<double> out(n);
  for (int j = 0; j < n; ++j) out[j] = x[j] - m - std::log(z);
  return out;
}

// Mean NLL of the inverse head on concat[phi_t, phi_t1].
double inverse_ref(const Doubles& p, const std::vector<int>& actions, int feat) {
  std::vector<double> x;
  for (int b = 0; b < kBatch; ++b) {
    x.insert(x.end(), p.at("phi_t").begin() + b * feat, p.at("phi_t").begin() + (b + 1) * feat);
    x.insert(x.end(), p.at("phi_t1").begin() + b * feat, p.at("phi_t1").begin() + (b + 1) * feat);
  }
  const int hidden = static_cast<int>(p.at("icm/inverse/fc/b").size());
  auto h = dense_ref(x, kBatch, 2 * feat, p.at("icm/inverse/fc/w"), p.at("icm/inverse/fc/b"), hidden, true);
  auto y = dense_ref(h, kBatch, hidden, p.at("icm/inverse/out/w"), p.at("icm/inverse/out/b"), kA, false);
  double loss = 0.0;
  for (int b = 0; b < kBatch; ++b) loss -= log_softmax_row(&y[b * kA], kA)[actions[b]];
  return loss / kBatch;
}

double forward_ref(const Doubles& p, const std::vector<int>& actions, int feat) {
  std::vector<double> x;
  for (int b = 0; b < kBatch; ++b) {
    x.insert(x.end(), p.at("phi_t").begin() + b * feat, p.at("phi_t").begin() + (b + 1) * feat);
    for (int a = 0; a < kA; ++a) x.push_back(a == actions[b] ? 1.0 : 0.0);
  }
  const int hidden = static_cast<int>(p.at("icm/forward/fc/b").size());
  auto h = dense_ref(x, kBatch, feat + kA, p.at("icm/forward/fc/w"), p.at("icm/forward/fc/b"), hidden, true);
  auto y = dense_ref(h, kBatch, hidden, p.at("icm/forward/out/w"), p.at("icm/forward/out/b"), feat, false);
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) loss += 0.5 * std::pow(y[i] - p.at("phi_t1")[i], 2);
  return loss / kBatch;
}

struct A2cToy {
  std::vector<int> actions;
  std::vector<double> adv;
  std::vector<double> ret;
  double cv = 0.5;
  double ce = 0.01;
};

double a2c_ref(const Doubles& p, const A2cToy& t) {
  const auto& logits = p.at("logits");
  const auto& values = p.at("values");
  const int batch = static_cast<int>(values.size());
  double pg = 0.0, vl = 0.0, ent = 0.0;
  for (int b = 0; b < batch; ++b) {
    const auto lp = log_softmax_row(&logits[b * kA], kA);
    pg -= lp[t.actions[b]] * t.adv[b];
    vl += std::pow(values[b] - t.ret[b], 2);
    for (int a = 0; a < kA; ++a) ent -= std::exp(lp[a]) * lp[a];
  }
  return (pg + t.cv * vl - t.ce * ent) / batch;
}

Doubles to_doubles(ParameterSet& set, const std::vector<std::string>& names) {
  Doubles d;
  for (const std::string& n : names) d[n] = std::vector<double>(set.at(n).value.begin(), set.at(n).value.end());
  return d;
}

// Compares analytic gradients in `set` against central differences of `ref`
// at `samples` random coordinates of each named tensor (all when smaller).
template <typename Ref>
GradcheckResult compare(const std::string& name, std::uint64_t seed, ParameterSet& set,
                        const std::vector<std::string>& names, Ref ref, double rel_tol, double abs_floor,
                        int samples, std::mt19937_64& rng, const std::vector<std::string>& fixed = {}) {
  GradcheckResult res;
  res.name = name;
  res.seed = seed;
  res.passed = true;
  Doubles point = to_doubles(set, names);
  for (const std::string& n : fixed) point[n] = to_doubles(set, {n})[n];
  const double eps = 1e-6;
  for (const std::string& n : names) {
    const int size = static_cast<int>(point[n].size());
    std::vector<int> idx;
    if (size <= samples) {
      for (int i = 0; i < size; ++i) idx.push_back(i);
    } else {
      std::uniform_int_distribution<int> pick(0, size - 1);
      for (int i = 0; i < samples; ++i) idx.push_back(pick(rng));
    }
    for (int i : idx) {
      const double keep = point[n][i];
      point[n][i] = keep + eps;
      const double up = ref(point);
      point[n][i] = keep - eps;
      const double down = ref(point);
      point[n][i] = keep;
      const double fd = (up - down) / (2 * eps);
      const double an = set.at(n).grad[i];
      const double diff = std::fabs(an - fd);
      const double scale = std::max(std::fabs(an), std::fabs(fd));
      const double rel = scale > 0.0 ? diff / scale : 0.0;
      if (scale > abs_floor) res.max_rel_error = std::max(res.max_rel_error, rel);
      if (!(diff <= abs_floor || diff <= rel_tol * scale)) res.passed = false;
      ++res.checked;
    }
  }
  return res;
}

void fill(Parameter& p, std::mt19937_64& rng, float lo, float hi) {
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : p.value) v = u(rng);
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck(int seeds, double rel_tol, double abs_floor) {
  std::vector<GradcheckResult> out;
  ModelSpec spec;
  const int feat = spec.conv.feature_dim();
  for (int s = 0; s < seeds; ++s) {
    const std::uint64_t seed = static_cast<std::uint64_t>(s) + 1;
    std::mt19937_64 rng(mix_seed(seed, 0x6c4));
    ParameterSet set = init_parameters(spec, seed);
    // Non-zero biases so their gradients are exercised through the ELU kink.
    for (const char* b : {"icm/inverse/fc/b", "icm/inverse/out/b", "icm/forward/fc/b", "icm/forward/out/b"}) {
      fill(set.at(b), rng, -0.1f, 0.1f);
    }
    fill(set.add("phi_t", {kBatch, feat}), rng, 0.0f, 1.0f);
    fill(set.add("phi_t1", {kBatch, feat}), rng, 0.0f, 1.0f);
    std::uniform_int_distribution<int> act(0, kA - 1);
    std::vector<int> actions(kBatch);
    for (int& a : actions) a = act(rng);

    {
      set.zero_grad();
      Graph g;
      g.backward(inverse_loss(inverse_predict(g, set, g.bind(set.at("phi_t")), g.bind(set.at("phi_t1"))), actions));
      const std::vector<std::string> names = {"icm/inverse/fc/w", "icm/inverse/fc/b", "icm/inverse/out/w",
                                              "icm/inverse/out/b", "phi_t", "phi_t1"};
      out.push_back(compare("inverse_loss", seed, set, names,
                            [&](const Doubles& p) { return inverse_ref(p, actions, feat); }, rel_tol, abs_floor,
                            12, rng));
    }
    {
      set.zero_grad();
      Graph g;
      g.backward(forward_loss(forward_predict(g, set, g.bind(set.at("phi_t")), actions), g.bind(set.at("phi_t1"))));
      // phi_t1 is a detached target; its analytic gradient must be zero.
      const std::vector<std::string> names = {"icm/forward/fc/w", "icm/forward/fc/b", "icm/forward/out/w",
                                              "icm/forward/out/b", "phi_t"};
      GradcheckResult r = compare("forward_loss", seed, set, names,
                                  [&](const Doubles& p) { return forward_ref(p, actions, feat); }, rel_tol,
                                  abs_floor, 12, rng, {"phi_t1"});
      for (float gv : set.at("phi_t1").grad) r.passed = r.passed && gv == 0.0f;
      out.push_back(r);
    }
    {
      const int batch = 5;
      ParameterSet toy;
      fill(toy.add("logits", {batch, kA}), rng, -2.0f, 2.0f);
      fill(toy.add("values", {batch}), rng, -1.0f, 1.0f);
      A2cToy t;
      std::vector<float> adv(batch), ret(batch);
      std::uniform_real_distribution<float> u(-1.0f, 1.0f);
      for (int b = 0; b < batch; ++b) {
        t.actions.push_back(act(rng));
        adv[b] = u(rng);
        ret[b] = u(rng);
        t.adv.push_back(adv[b]);
        t.ret.push_back(ret[b]);
      }
      Graph g;
      A2cLoss l = a2c_loss(g.bind(toy.at("logits")), g.bind(toy.at("values")), t.actions, adv, ret, t.cv, t.ce);
      g.backward(l.total);
      out.push_back(compare("a2c_loss", seed, toy, {"logits", "values"},
                            [&](const Doubles& p) { return a2c_ref(p, t); }, rel_tol, abs_floor, 64, rng));
    }
  }
  return out;
}

}  // namespace curio
