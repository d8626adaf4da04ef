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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "curio/errors.hpp"
#include "curio/icm.hpp"
#include "oracle.hpp"

namespace curio {
namespace {

constexpr int kObs = kFrameStack * kFrameSize * kFrameSize;

ParameterSet features_model(std::uint64_t seed) {
  ModelSpec spec;
  spec.icm = IcmKind::kFeatures;
  return init_parameters(spec, seed);
}

void zero_prefix(ParameterSet& set, std::string_view prefix) {
  for (Parameter* p : set.with_prefix(prefix)) std::fill(p->value.begin(), p->value.end(), 0.0f);
}

std::vector<float> floats(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  return oracle::random_floats(rng, n, lo, hi);
}

// --- inverse model --------------------------------------------------------------

TEST(InversePredict, ShapeAndZeroParamsUniform) {
  ParameterSet set = features_model(1);
  zero_prefix(set, kInversePrefix);
  Graph g(GradMode::kDisabled);
  Tensor a = g.constant({3, 288}, floats(3 * 288, 1));
  Tensor b = g.constant({3, 288}, floats(3 * 288, 2));
  Tensor logits = inverse_predict(g, set, a, b);
  EXPECT_EQ(logits.shape(), (Shape{3, 4}));
  for (float p : softmax(logits).values()) EXPECT_FLOAT_EQ(p, 0.25f);
}

TEST(InversePredict, ArgumentOrderMatters) {
  int differ = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterSet set = features_model(seed);
    Graph g(GradMode::kDisabled);
    Tensor a = g.constant({1, 288}, floats(288, 100 + seed, 0.0f, 1.0f));
    Tensor b = g.constant({1, 288}, floats(288, 200 + seed, 0.0f, 1.0f));
    auto ab = inverse_predict(g, set, a, b).values();
    auto ba = inverse_predict(g, set, b, a).values();
    bool d = false;
    for (int i = 0; i < 4; ++i) d = d || ab[i] != ba[i];
    differ += d;
  }
  EXPECT_GE(differ, 9);
}

TEST(InversePredict, BadShapeIsShapeError) {
  ParameterSet set = features_model(1);
  Graph g;
  Tensor a = g.constant({2, 288}, std::vector<float>(576, 0.0f));
  Tensor b = g.constant({2, 100}, std::vector<float>(200, 0.0f));
  EXPECT_THROW(inverse_predict(g, set, a, b), ShapeError);
}

TEST(InverseLoss, UniformLogitsGiveLogA) {
  Graph g;
  Tensor logits = g.constant({2, 4}, std::vector<float>(8, 0.0f));
  const std::vector<int> acts = {0, 3};
  EXPECT_NEAR(inverse_loss(logits, acts).item(), std::log(4.0), 1e-6);
}

TEST(InverseLoss, ConfidentCorrectLogitIsNearZero) {
  Graph g;
  Tensor logits = g.constant({1, 4}, {0.0f, 0.0f, 20.0f, 0.0f});
  const std::vector<int> acts = {2};
  EXPECT_NEAR(inverse_loss(logits, acts).item(), 0.0, 1e-7);
}

TEST(InverseLoss, MixedBatchIsMeanOfRowNll) {
  const std::vector<float> raw = {1.0f, 2.0f, 0.5f, -1.0f, 0.3f, -0.7f, 2.5f, 0.0f};
  const std::vector<int> acts = {1, 3};
  const std::vector<double> lsm = oracle::softmax_rows(oracle::to_double(raw), 4, true);
  const double want = -(lsm[0 * 4 + 1] + lsm[1 * 4 + 3]) / 2.0;
  Graph g;
  EXPECT_NEAR(inverse_loss(g.constant({2, 4}, raw), acts).item(), want, 1e-6);
}

TEST(InverseLoss, OutOfRangeActionIsContractError) {
  Graph g;
  Tensor logits = g.constant({1, 4}, std::vector<float>(4, 0.0f));
  const std::vector<int> hi = {4}, lo = {-1};
  EXPECT_THROW(inverse_loss(logits, hi), ContractError);
  EXPECT_THROW(inverse_loss(logits, lo), ContractError);
}

// --- forward model ----------------------------------------------------------------

TEST(ForwardPredict, ShapeAndZeroParamsGiveZero) {
  ParameterSet set = features_model(1);
  zero_prefix(set, kForwardPrefix);
  Graph g(GradMode::kDisabled);
  const std::vector<int> acts = {0, 1, 2};
  Tensor out = forward_predict(g, set, g.constant({3, 288}, floats(864, 3)), acts);
  EXPECT_EQ(out.shape(), (Shape{3, 288}));
  for (float v : out.values()) EXPECT_EQ(v, 0.0f);
}

TEST(ForwardPredict, ActionChangesPrediction) {
  int differ = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterSet set = features_model(seed);
    Graph g(GradMode::kDisabled);
    std::vector<float> phi = floats(288, 50 + seed, 0.0f, 1.0f);
    phi.insert(phi.end(), phi.begin(), phi.end());
    const std::vector<int> acts = {0, 2};
    auto out = forward_predict(g, set, g.constant({2, 288}, phi), acts).values();
    bool d = false;
    for (int i = 0; i < 288; ++i) d = d || out[i] != out[288 + i];
    differ += d;
  }
  EXPECT_GE(differ, 9);
}

TEST(ForwardPredict, MatchesOracle) {
  ParameterSet set = features_model(7);
  const std::vector<float> phi = floats(2 * 288, 8, 0.0f, 1.0f);
  const std::vector<int> acts = {3, 1};
  Graph g(GradMode::kDisabled);
  auto out = forward_predict(g, set, g.constant({2, 288}, phi), acts).values();
  std::vector<double> x;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 288; ++i) x.push_back(phi[b * 288 + i]);
    for (int a = 0; a < 4; ++a) x.push_back(a == acts[b] ? 1.0 : 0.0);
  }
  auto w = [&](const char* n) { return oracle::to_double(set.at(n).value); };
  std::vector<double> h = oracle::elu(oracle::add_bias(oracle::matmul(x, w("icm/forward/fc/w"), 2, 292, 256), w("icm/forward/fc/b")));
  std::vector<double> y = oracle::add_bias(oracle::matmul(h, w("icm/forward/out/w"), 2, 256, 288), w("icm/forward/out/b"));
  for (std::size_t i = 0; i < y.size(); ++i) ASSERT_TRUE(oracle::close(out[i], y[i], 1e-4, 1e-6)) << i;
}

TEST(ForwardLoss, Examples) {
  Graph g;
  std::vector<float> z(288, 0.0f);
  std::vector<float> d = z;
  d[0] = 3.0f;
  d[1] = 4.0f;
  Tensor target = g.constant({1, 288}, z);
  EXPECT_EQ(forward_loss(g.constant({1, 288}, z), target).item(), 0.0f);
  EXPECT_NEAR(forward_loss(g.constant({1, 288}, d), target).item(), 12.5, 1e-6);
  std::vector<float> e = z;
  e[100] = 1.0f;
  EXPECT_NEAR(forward_loss(g.constant({1, 288}, e), target).item(), 0.5, 1e-7);
  // Batch mean: rows with 12.5 and 0.5.
  std::vector<float> both = d;
  both.insert(both.end(), e.begin(), e.end());
  std::vector<float> zz(576, 0.0f);
  EXPECT_NEAR(forward_loss(g.constant({2, 288}, both), g.constant({2, 288}, zz)).item(), 6.5, 1e-6);
}

TEST(ForwardLoss, TargetReceivesNoGradient) {
  Graph g;
  Tensor pred = g.variable({1, 3}, {1.0f, 2.0f, 3.0f});
  Tensor target = g.variable({1, 3}, {0.0f, 0.0f, 0.0f});
  g.backward(forward_loss(pred, target));
  EXPECT_TRUE(target.grad().empty() ||
              std::all_of(target.grad().begin(), target.grad().end(), [](float v) { return v == 0.0f; }));
  ASSERT_EQ(pred.grad().size(), 3u);
  EXPECT_NEAR(pred.grad()[2], 3.0f, 1e-6);
}

TEST(ForwardLoss, ShapeMismatchIsShapeError) {
  Graph g;
  EXPECT_THROW(forward_loss(g.constant({1, 3}, {0, 0, 0}), g.constant({1, 2}, {0, 0})), ShapeError);
}

// --- intrinsic reward ---------------------------------------------------------------

TEST(IntrinsicReward, Examples) {
  const std::vector<float> phi = {1.0f, 2.0f, 3.0f, 4.0f};
  EXPECT_EQ(intrinsic_reward(phi, phi, 2, 0.01), (std::vector<float>{0.0f, 0.0f}));
  // Squared difference norm 4 with eta 0.5 -> 1.
  const std::vector<float> hat = {3.0f, 2.0f, 3.0f, 4.0f};
  std::vector<float> r = intrinsic_reward(hat, phi, 2, 0.5);
  EXPECT_NEAR(r[0], 1.0f, 1e-7);
  EXPECT_EQ(r[1], 0.0f);
  std::vector<float> r2 = intrinsic_reward(hat, phi, 2, 1.0);
  EXPECT_FLOAT_EQ(r2[0], 2.0f * r[0]);
}

TEST(IntrinsicReward, NonPositiveEtaIsConfigError) {
  const std::vector<float> phi = {1.0f};
  EXPECT_THROW(intrinsic_reward(phi, phi, 1, 0.0), ConfigError);
  EXPECT_THROW(intrinsic_reward(phi, phi, 1, -1.0), ConfigError);
}

TEST(IcmForward, RewardMatchesDefinitionAndIsNonNegative) {
  ParameterSet set = features_model(4);
  Graph g(GradMode::kDisabled);
  const std::vector<int> acts = {0, 1, 2, 3};
  IcmOutput out = icm_forward(g, set, g.constant({4, 4, 42, 42}, floats(4 * kObs, 5, 0.0f, 1.0f)),
                              g.constant({4, 4, 42, 42}, floats(4 * kObs, 6, 0.0f, 1.0f)), acts, 0.01);
  EXPECT_EQ(out.phi_t.shape(), (Shape{4, 288}));
  EXPECT_EQ(out.phi_hat_t1.shape(), (Shape{4, 288}));
  EXPECT_EQ(out.action_logits.shape(), (Shape{4, 4}));
  auto hat = out.phi_hat_t1.values();
  auto phi = out.phi_t1.values();
  for (int b = 0; b < 4; ++b) {
    double s = 0.0;
    for (int i = 0; i < 288; ++i) s += std::pow(double(hat[b * 288 + i]) - phi[b * 288 + i], 2);
    EXPECT_GE(out.r_intrinsic[b], 0.0f);
    EXPECT_NEAR(out.r_intrinsic[b], 0.005 * s, 1e-6 + 1e-6 * s);
  }
}

// --- gradient routing --------------------------------------------------------------

struct RoutingFixture : ::testing::Test {
  ParameterSet set = features_model(9);
  std::vector<float> s0 = floats(3 * kObs, 10, 0.0f, 1.0f);
  std::vector<float> s1 = floats(3 * kObs, 11, 0.0f, 1.0f);
  std::vector<int> acts = {1, 0, 3};
};

TEST_F(RoutingFixture, ForwardLossLeavesEncoderUntouched) {
  Graph g;
  IcmOutput out = icm_forward(g, set, g.constant({3, 4, 42, 42}, s0), g.constant({3, 4, 42, 42}, s1), acts, 0.01);
  set.zero_grad();
  g.backward(forward_loss(out.phi_hat_t1, out.phi_t1));
  EXPECT_EQ(set.grad_norm(kEncoderPrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kInversePrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kPolicyPrefix), 0.0);
  EXPECT_GT(set.grad_norm(kForwardPrefix), 0.0);
}

TEST_F(RoutingFixture, InverseLossReachesEncoder) {
  Graph g;
  IcmOutput out = icm_forward(g, set, g.constant({3, 4, 42, 42}, s0), g.constant({3, 4, 42, 42}, s1), acts, 0.01);
  set.zero_grad();
  g.backward(inverse_loss(out.action_logits, acts));
  EXPECT_GT(set.grad_norm(kEncoderPrefix), 0.0);
  EXPECT_GT(set.grad_norm(kInversePrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kForwardPrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kPolicyPrefix), 0.0);
}

TEST_F(RoutingFixture, UndetachedForwardInputReachesEncoder) {
  Graph g;
  IcmOutput out = icm_forward(g, set, g.constant({3, 4, 42, 42}, s0), g.constant({3, 4, 42, 42}, s1), acts,
                              0.01, /*detach_forward_input=*/false);
  set.zero_grad();
  g.backward(forward_loss(out.phi_hat_t1, out.phi_t1));
  EXPECT_GT(set.grad_norm(kEncoderPrefix), 0.0);
}

// Head gradients against double finite differences on the head weights.
TEST_F(RoutingFixture, HeadGradientsMatchFiniteDifferences) {
  std::vector<float> phi_a = floats(2 * 288, 31, 0.0f, 1.0f);
  std::vector<float> phi_b = floats(2 * 288, 32, 0.0f, 1.0f);
  const std::vector<int> a2 = {2, 1};
  auto w = [&](const std::string& n) { return oracle::to_double(set.at(n).value); };
  auto mlp = [&](const std::vector<double>& x, const std::string& fc, const std::string& out,
                 int in, int outn, const std::string& perturbed, int idx, double delta) {
    std::vector<double> w1 = w(fc + "w"), w2 = w(out + "w");
    if (perturbed == fc + "w") w1[idx] += delta;
    if (perturbed == out + "w") w2[idx] += delta;
    std::vector<double> h = oracle::elu(oracle::add_bias(oracle::matmul(x, w1, 2, in, 256), w(fc + "b")));
    return oracle::add_bias(oracle::matmul(h, w2, 2, 256, outn), w(out + "b"));
  };
  std::vector<double> inv_in, fwd_in;
  for (int b = 0; b < 2; ++b) {
    for (int i = 0; i < 288; ++i) inv_in.push_back(phi_a[b * 288 + i]);
    for (int i = 0; i < 288; ++i) inv_in.push_back(phi_b[b * 288 + i]);
    for (int i = 0; i < 288; ++i) fwd_in.push_back(phi_a[b * 288 + i]);
    for (int k = 0; k < 4; ++k) fwd_in.push_back(k == a2[b] ? 1.0 : 0.0);
  }
  auto inv_loss = [&](const std::string& n, int idx, double d) {
    std::vector<double> lsm = oracle::softmax_rows(mlp(inv_in, "icm/inverse/fc/", "icm/inverse/out/", 576, 4, n, idx, d), 4, true);
    return -(lsm[a2[0]] + lsm[4 + a2[1]]) / 2.0;
  };
  auto fwd_loss = [&](const std::string& n, int idx, double d) {
    std::vector<double> y = mlp(fwd_in, "icm/forward/fc/", "icm/forward/out/", 292, 288, n, idx, d);
    double s = 0.0;
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < 288; ++i) s += 0.5 * std::pow(y[b * 288 + i] - phi_b[b * 288 + i], 2);
    return s / 2.0;
  };
  Graph g;
  Tensor ta = g.constant({2, 288}, phi_a);
  Tensor tb = g.constant({2, 288}, phi_b);
  Tensor li = inverse_loss(inverse_predict(g, set, ta, tb), a2);
  Tensor lf = forward_loss(forward_predict(g, set, ta, a2), tb);
  set.zero_grad();
  g.backward(add(li, lf));
  const double eps = 1e-5;
  for (const std::string n : {"icm/inverse/fc/w", "icm/inverse/out/w"})
    for (int idx : {0, 77, 301}) {
      const double fd = (inv_loss(n, idx, eps) - inv_loss(n, idx, -eps)) / (2 * eps);
      EXPECT_TRUE(oracle::close(set.at(n).grad[idx], fd, 1e-3, 1e-6)) << n << idx << " " << set.at(n).grad[idx] << " vs " << fd;
    }
  for (const std::string n : {"icm/forward/fc/w", "icm/forward/out/w"})
    for (int idx : {0, 77, 301}) {
      const double fd = (fwd_loss(n, idx, eps) - fwd_loss(n, idx, -eps)) / (2 * eps);
      EXPECT_TRUE(oracle::close(set.at(n).grad[idx], fd, 1e-3, 1e-6)) << n << idx << " " << set.at(n).grad[idx] << " vs " << fd;
    }
}

// --- pixels variant ----------------------------------------------------------------

TEST(PixelsForward, OutputShapeMatchesFrame) {
  ModelSpec spec;
  spec.icm = IcmKind::kPixels;
  ParameterSet set = init_parameters(spec, 1);
  EXPECT_FALSE(set.contains("icm/inverse/fc/w"));
  Graph g(GradMode::kDisabled);
  const std::vector<int> acts = {0, 3};
  Tensor pred = pixels_forward(g, set, g.constant({2, 4, 42, 42}, floats(2 * kObs, 2, 0.0f, 1.0f)), acts);
  EXPECT_EQ(pred.shape(), (Shape{2, 1, 42, 42}));
}

TEST(PixelsForward, ActionCountMismatchIsShapeError) {
  ModelSpec spec;
  spec.icm = IcmKind::kPixels;
  ParameterSet set = init_parameters(spec, 1);
  Graph g(GradMode::kDisabled);
  const std::vector<int> acts = {0};
  EXPECT_THROW(pixels_forward(g, set, g.constant({2, 4, 42, 42}, floats(2 * kObs, 2)), acts), ShapeError);
}

TEST(PixelReward, PerfectPredictionIsZeroAndMatchesDefinition) {
  const std::vector<float> t = floats(2 * 1764, 3, 0.0f, 1.0f);
  EXPECT_EQ(pixel_intrinsic_reward(t, t, 2, 1.0), (std::vector<float>{0.0f, 0.0f}));
  std::vector<float> p = t;
  for (int i = 0; i < 1764; ++i) p[i] += 0.1f;
  std::vector<float> r = pixel_intrinsic_reward(p, t, 2, 0.5);
  EXPECT_NEAR(r[0], 0.25 * 0.01, 1e-6);
  EXPECT_EQ(r[1], 0.0f);
}

TEST(PixelReward, NoiseTargetKeepsErrorNearOneTwelfth) {
  // Best constant predictor of U[0,1] is 0.5 with expected squared error 1/12.
  const std::vector<float> noise = floats(50 * 1764, 4, 0.0f, 1.0f);
  const std::vector<float> half(noise.size(), 0.5f);
  Graph g;
  Tensor err = pixel_error(g.constant({50, 1, 42, 42}, half), g.constant({50, 1, 42, 42}, noise));
  double m = 0.0;
  for (float v : err.values()) m += v;
  m /= 50.0;
  // Per-pixel variance of (u-1/2)^2 is 1/180; the mean of 88200 draws has
  // standard error below 3e-4.
  EXPECT_NEAR(m, 1.0 / 12.0, 3 * 2.6e-4);
}

TEST(NewestFrames, PicksLastChannel) {
  std::vector<float> obs(2 * kObs);
  std::iota(obs.begin(), obs.end(), 0.0f);
  std::vector<float> f = newest_frames(obs, 2, 4, 42, 42);
  ASSERT_EQ(f.size(), 2u * 1764);
  EXPECT_EQ(f[0], float(3 * 1764));
  EXPECT_EQ(f[1764], float(kObs + 3 * 1764));
}

// --- random rewards -----------------------------------------------------------------

TEST(RandomReward, UniformSamplesStayInRange) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double r = random_reward(rng, {NoiseKind::kUniform, 0.0, 1.0});
    ASSERT_GE(r, 0.0);
    ASSERT_LE(r, 1.0);
  }
}

TEST(RandomReward, SeedReproducesSequence) {
  for (NoiseKind k : {NoiseKind::kUniform, NoiseKind::kGaussian, NoiseKind::kLaplacian}) {
    std::mt19937_64 a(5), b(5);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(random_reward(a, {k, 0.1, 2.0}), random_reward(b, {k, 0.1, 2.0}));
  }
}

TEST(RandomReward, SampleMeanWithinThreeStandardErrors) {
  // (kind, loc, scale, mean, stddev)
  struct Case { NoiseKind kind; double loc, scale, mean, sd; };
  const Case cases[] = {
      {NoiseKind::kUniform, 0.0, 1.0, 0.5, 1.0 / std::sqrt(12.0)},
      {NoiseKind::kUniform, -1.0, 4.0, 1.0, 4.0 / std::sqrt(12.0)},
      {NoiseKind::kGaussian, 0.3, 2.0, 0.3, 2.0},
      {NoiseKind::kLaplacian, -0.2, 1.5, -0.2, 1.5 * std::sqrt(2.0)},
  };
  const int n = 100000;
  for (const Case& c : cases) {
    std::mt19937_64 rng(77);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += random_reward(rng, {c.kind, c.loc, c.scale});
    EXPECT_NEAR(s / n, c.mean, 3.0 * c.sd / std::sqrt(double(n))) << noise_kind_name(c.kind);
  }
}

TEST(RandomReward, UnknownKindIsConfigError) {
  EXPECT_THROW(parse_noise_kind("cauchy"), ConfigError);
  EXPECT_EQ(parse_noise_kind("laplacian"), NoiseKind::kLaplacian);
}

}  // namespace
}  // namespace curio
