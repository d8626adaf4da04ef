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

#include "curio/agent.hpp"
#include "curio/errors.hpp"
#include "oracle.hpp"

namespace curio {
namespace {

constexpr std::size_t kObs = std::size_t(kFrameStack) * kFramePixels;

// --- sampling -----------------------------------------------------------------------

TEST(SampleCategorical, UniformLogitsGiveEqualFrequencies) {
  const std::vector<float> logits(4, 0.0f);
  std::mt19937_64 rng(1);
  const int n = 100000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) counts[sample_categorical(logits, rng, nullptr)]++;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int c : counts) EXPECT_NEAR(c, n * 0.25, 3 * sigma);
}

TEST(SampleCategorical, DominantLogitAlmostAlwaysWins) {
  const std::vector<float> logits = {0.0f, 0.0f, 20.0f, 0.0f};
  std::mt19937_64 rng(2);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += sample_categorical(logits, rng, nullptr) == 2;
  EXPECT_GT(hits, 9990);
}

TEST(SampleCategorical, LogProbIsLogSoftmaxAtSample) {
  const std::vector<float> logits = {0.3f, -1.2f, 2.0f, 0.7f};
  const std::vector<double> lsm = oracle::softmax_rows(oracle::to_double(logits), 4, true);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    float lp = 0.0f;
    const int a = sample_categorical(logits, rng, &lp);
    EXPECT_NEAR(lp, lsm[a], 1e-6);
  }
}

TEST(SampleCategorical, NonFiniteLogitIsDivergence) {
  std::mt19937_64 rng(4);
  const std::vector<float> bad = {0.0f, NAN, 1.0f, 0.0f};
  EXPECT_THROW(sample_categorical(bad, rng, nullptr), DivergenceError);
  const std::vector<float> inf = {0.0f, INFINITY, 1.0f, 0.0f};
  EXPECT_THROW(sample_categorical(inf, rng, nullptr), DivergenceError);
}

TEST(SampleAction, DeterministicGivenRngState) {
  ParameterSet set = init_parameters({}, 1);
  std::mt19937_64 g(5);
  const std::vector<float> obs = oracle::random_floats(g, kObs, 0.0f, 1.0f);
  std::mt19937_64 a(9), b(9);
  for (int i = 0; i < 5; ++i) {
    const ActionSample x = sample_action(set, obs, a), y = sample_action(set, obs, b);
    EXPECT_EQ(x.action, y.action);
    EXPECT_EQ(x.log_prob, y.log_prob);
    EXPECT_EQ(x.value, y.value);
  }
}

// --- returns ------------------------------------------------------------------------

TEST(NStepReturns, HandRecursion) {
  const std::vector<float> r = {0, 0, 1}, v = {0, 0, 0}, boot = {0};
  const std::vector<std::uint8_t> d = {0, 0, 0};
  Returns out = n_step_returns(r, d, v, boot, 1, 3, 0.9);
  EXPECT_NEAR(out.returns[0], 0.81f, 1e-6);
  EXPECT_NEAR(out.returns[1], 0.9f, 1e-6);
  EXPECT_NEAR(out.returns[2], 1.0f, 1e-6);
}

TEST(NStepReturns, BootstrapAndValueBaseline) {
  const std::vector<float> r = {1, 0}, v = {0.5f, 0.25f}, boot = {2};
  const std::vector<std::uint8_t> d = {0, 0};
  Returns out = n_step_returns(r, d, v, boot, 1, 2, 0.5);
  EXPECT_NEAR(out.returns[1], 1.0f, 1e-6);   // 0 + 0.5*2
  EXPECT_NEAR(out.returns[0], 1.5f, 1e-6);   // 1 + 0.5*1
  EXPECT_NEAR(out.advantages[0], 1.0f, 1e-6);
  EXPECT_NEAR(out.advantages[1], 0.75f, 1e-6);
}

TEST(NStepReturns, ValuesEqualReturnsGiveZeroAdvantage) {
  const std::vector<float> r = {0.2f, 0.0f, 1.0f};
  const std::vector<std::uint8_t> d = {0, 1, 0};
  const std::vector<float> boot = {0.7f};
  Returns first = n_step_returns(r, d, std::vector<float>(3, 0.0f), boot, 1, 3, 0.99);
  Returns again = n_step_returns(r, d, first.returns, boot, 1, 3, 0.99);
  for (float a : again.advantages) EXPECT_EQ(a, 0.0f);
}

TEST(NStepReturns, DoneBlocksRewardFlow) {
  const std::vector<float> r = {0, 0, 1}, v = {0, 0, 0}, boot = {5};
  const std::vector<std::uint8_t> d = {0, 1, 0};
  Returns out = n_step_returns(r, d, v, boot, 1, 3, 0.9);
  EXPECT_EQ(out.returns[0], 0.0f);
  EXPECT_EQ(out.returns[1], 0.0f);
  EXPECT_NEAR(out.returns[2], 1.0 + 0.9 * 5, 1e-5);
}

TEST(NStepReturns, EnvsAreIndependent) {
  const std::vector<float> r = {1, 0, 0, 1}, v(4, 0.0f), boot = {0, 0};
  const std::vector<std::uint8_t> d(4, 0);
  Returns out = n_step_returns(r, d, v, boot, 2, 2, 0.5);
  EXPECT_NEAR(out.returns[0], 1.0f, 1e-6);
  EXPECT_NEAR(out.returns[1], 0.0f, 1e-6);
  EXPECT_NEAR(out.returns[2], 0.5f, 1e-6);
  EXPECT_NEAR(out.returns[3], 1.0f, 1e-6);
}

TEST(NStepReturns, MismatchedArraysAreShapeError) {
  const std::vector<float> r = {1, 0}, v = {0}, boot = {0};
  const std::vector<std::uint8_t> d = {0, 0};
  EXPECT_THROW(n_step_returns(r, d, v, boot, 1, 2, 0.9), ShapeError);
}

// --- actor-critic loss --------------------------------------------------------------

TEST(A2cLoss, ZeroAdvantageAndExactValueLeavesEntropyTerm) {
  Graph g;
  std::mt19937_64 rng(1);
  const std::vector<float> raw = oracle::random_floats(rng, 8);
  Tensor logits = g.variable({2, 4}, raw);
  Tensor values = g.variable({2}, {0.4f, -0.1f});
  const std::vector<int> acts = {1, 3};
  const std::vector<float> adv = {0.0f, 0.0f}, ret = {0.4f, -0.1f};
  A2cLoss l = a2c_loss(logits, values, acts, adv, ret, 0.5, 0.01);
  const std::vector<double> p = oracle::softmax_rows(oracle::to_double(raw), 4, false);
  double h = 0.0;
  for (int i = 0; i < 8; ++i) h -= p[i] * std::log(p[i]);
  h /= 2.0;
  EXPECT_NEAR(l.entropy.item(), h, 1e-6);
  EXPECT_NEAR(l.total.item(), -0.01 * h, 1e-7);
}

TEST(A2cLoss, UniformPolicyEntropyIsLogA) {
  Graph g;
  Tensor logits = g.variable({3, 4}, std::vector<float>(12, 0.5f));
  Tensor values = g.variable({3}, {0, 0, 0});
  const std::vector<int> acts = {0, 1, 2};
  const std::vector<float> z = {0, 0, 0};
  EXPECT_NEAR(a2c_loss(logits, values, acts, z, z, 0.5, 0.01).entropy.item(), std::log(4.0), 1e-6);
}

TEST(A2cLoss, EntropyNeverExceedsLogA) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Graph g;
    Tensor logits = g.variable({1, 4}, oracle::random_floats(rng, 4, -5.0f, 5.0f));
    Tensor values = g.variable({1}, {0});
    const std::vector<int> acts = {0};
    const std::vector<float> z = {0};
    EXPECT_LE(a2c_loss(logits, values, acts, z, z, 0.5, 0.01).entropy.item(), std::log(4.0) + 1e-6);
  }
}

TEST(A2cLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const std::vector<float> raw = oracle::random_floats(rng, 8, -2.0f, 2.0f);
  const std::vector<float> val = {0.3f, -0.6f};
  const std::vector<int> acts = {2, 0};
  const std::vector<float> adv = {0.8f, -1.3f}, ret = {1.1f, 0.2f};
  const double cv = 0.5, ce = 0.01;
  auto oracle_loss = [&](std::span<const double> x) {
    // x = 8 logits then 2 values.
    std::vector<double> lg(x.begin(), x.begin() + 8);
    const std::vector<double> lsm = oracle::softmax_rows(lg, 4, true);
    double pg = 0, vl = 0, h = 0;
    for (int b = 0; b < 2; ++b) {
      pg += -lsm[b * 4 + acts[b]] * adv[b];
      vl += std::pow(x[8 + b] - ret[b], 2);
      for (int a = 0; a < 4; ++a) h -= std::exp(lsm[b * 4 + a]) * lsm[b * 4 + a];
    }
    return pg / 2 + cv * vl / 2 - ce * h / 2;
  };
  std::vector<double> point(raw.begin(), raw.end());
  point.push_back(val[0]);
  point.push_back(val[1]);
  const std::vector<double> fd = finite_difference_gradient(oracle_loss, point, 1e-6);
  Graph g;
  Tensor logits = g.variable({2, 4}, raw);
  Tensor values = g.variable({2}, val);
  A2cLoss l = a2c_loss(logits, values, acts, adv, ret, cv, ce);
  EXPECT_NEAR(l.total.item(), oracle_loss(point), 1e-6);
  g.backward(l.total);
  for (int i = 0; i < 8; ++i) EXPECT_TRUE(oracle::close(logits.grad()[i], fd[i], 1e-3, 1e-6)) << i;
  for (int i = 0; i < 2; ++i) EXPECT_TRUE(oracle::close(values.grad()[i], fd[8 + i], 1e-3, 1e-6)) << i;
}

// --- rollouts -----------------------------------------------------------------------

MazeSpec small_maze(int cap) { return make_maze_spec(3, 3, 3, cap, 7); }

VecEnv make_vec(int n, int cap, SpawnMode mode = SpawnMode::kDense, std::uint64_t seed = 1) {
  std::vector<std::unique_ptr<Environment>> envs;
  for (int i = 0; i < n; ++i) envs.push_back(std::make_unique<MazeEnv>(small_maze(cap), mode));
  return VecEnv(std::move(envs), seed);
}

ParameterSet model(Variant v, std::uint64_t seed = 3) {
  ModelSpec spec;
  spec.icm = icm_kind_for(v);
  return init_parameters(spec, seed);
}

TEST(CollectRollout, ShapesAndTerminalFrames) {
  VecEnv envs = make_vec(3, 4);
  ParameterSet set = model(Variant::kIcm);
  std::mt19937_64 rng(1);
  RolloutBuffer buf;
  collect_rollout(envs, set, 6, rng, buf);
  EXPECT_EQ(buf.envs, 3);
  EXPECT_EQ(buf.steps, 6);
  for (std::size_t n : {buf.actions.size(), buf.log_probs.size(), buf.values.size(),
                        buf.r_e.size(), buf.r_i.size(), buf.dones.size(), buf.terminal_index.size()})
    EXPECT_EQ(n, 18u);
  EXPECT_EQ(buf.obs.size(), 3u * 7 * kObs);
  EXPECT_EQ(buf.bootstrap.size(), 3u);
  EXPECT_FALSE(buf.intrinsic_ready);
  // Cap 4: every env finishes at t=3 (unless it found the goal earlier).
  int done_steps = 0;
  for (int e = 0; e < 3; ++e)
    for (int t = 0; t < 6; ++t) {
      const int i = buf.index(e, t);
      if (!buf.dones[i]) {
        ASSERT_EQ(buf.terminal_index[i], -1);
        continue;
      }
      ++done_steps;
      // s_{t+1} is the terminal frame; slot t+1 holds the fresh episode.
      auto next = buf.next_observation(e, t);
      auto reset = buf.observation(e, t + 1);
      EXPECT_FALSE(std::equal(next.begin(), next.end(), reset.begin()));
      // A fresh stack is zero padded in its three oldest frames.
      EXPECT_TRUE(std::all_of(reset.begin(), reset.begin() + 3 * kFramePixels,
                              [](float v) { return v == 0.0f; }));
    }
  EXPECT_GE(done_steps, 3);
  EXPECT_EQ(envs.episodes().size(), std::size_t(done_steps));
}

TEST(CollectRollout, VanillaCombinedRewardIsExtrinsic) {
  VecEnv envs = make_vec(2, 50);
  ParameterSet set = model(Variant::kVanilla);
  std::mt19937_64 rng(2);
  RolloutBuffer buf;
  collect_rollout(envs, set, 5, rng, buf);
  TrainConfig c;
  c.variant = Variant::kVanilla;
  annotate_intrinsic(buf, set, c, rng);
  EXPECT_EQ(buf.combined_reward(), buf.r_e);
}

TEST(CollectRollout, PerfectForwardModelGivesZeroIntrinsic) {
  VecEnv envs = make_vec(2, 50);
  ParameterSet set = model(Variant::kIcm);
  for (Parameter* p : set.with_prefix(kEncoderPrefix)) std::fill(p->value.begin(), p->value.end(), 0.0f);
  for (Parameter* p : set.with_prefix(kForwardPrefix)) std::fill(p->value.begin(), p->value.end(), 0.0f);
  std::mt19937_64 rng(3);
  RolloutBuffer buf;
  collect_rollout(envs, set, 5, rng, buf);
  annotate_intrinsic(buf, set, TrainConfig{}, rng);
  for (float r : buf.r_i) EXPECT_EQ(r, 0.0f);
}

TEST(CollectRollout, IntrinsicRewardMatchesIcmDefinition) {
  VecEnv envs = make_vec(2, 3);
  ParameterSet set = model(Variant::kIcm);
  std::mt19937_64 rng(4);
  RolloutBuffer buf;
  collect_rollout(envs, set, 4, rng, buf);
  TrainConfig c;
  c.eta = 0.3;
  annotate_intrinsic(buf, set, c, rng);
  for (int e = 0; e < 2; ++e)
    for (int t = 0; t < 4; ++t) {
      Graph g(GradMode::kDisabled);
      auto s0 = buf.observation(e, t);
      auto s1 = buf.next_observation(e, t);
      const std::vector<int> act = {buf.actions[buf.index(e, t)]};
      IcmOutput out = icm_forward(g, set, g.constant({1, 4, 42, 42}, {s0.begin(), s0.end()}),
                                  g.constant({1, 4, 42, 42}, {s1.begin(), s1.end()}), act, 0.3);
      EXPECT_TRUE(oracle::close(buf.r_i[buf.index(e, t)], out.r_intrinsic[0], 1e-4, 1e-7));
    }
}

// --- joint update -------------------------------------------------------------------

struct JointFixture : ::testing::Test {
  void collect(Variant v, std::uint64_t seed = 5) {
    config.variant = v;
    set = model(v, seed);
    VecEnv envs = make_vec(2, 30, SpawnMode::kDense, seed);
    std::mt19937_64 rng(seed);
    collect_rollout(envs, set, 4, rng, buf);
  }
  JointLoss build(Graph& g) {
    std::mt19937_64 rng(1);
    return build_joint_loss(g, buf, set, config, rng);
  }
  TrainConfig config;
  ParameterSet set;
  RolloutBuffer buf;
};

TEST_F(JointFixture, TotalIsWeightedSumOfComponents) {
  collect(Variant::kIcm);
  Graph g;
  JointLoss jl = build(g);
  const double want = config.lambda * jl.policy.item() + (1 - config.beta) * jl.inverse.item() +
                      config.beta * jl.forward.item();
  EXPECT_NEAR(jl.total.item(), want, 1e-5);
}

TEST_F(JointFixture, CrossTermsReceiveNoGradient) {
  collect(Variant::kIcm);
  Graph g;
  JointLoss jl = build(g);
  set.zero_grad();
  g.backward(jl.policy);
  EXPECT_GT(set.grad_norm(kPolicyPrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kIcmPrefix), 0.0);
  set.zero_grad();
  g.backward(jl.inverse);
  EXPECT_EQ(set.grad_norm(kPolicyPrefix), 0.0);
  EXPECT_GT(set.grad_norm(kEncoderPrefix), 0.0);
  set.zero_grad();
  g.backward(jl.forward);
  EXPECT_EQ(set.grad_norm(kPolicyPrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kEncoderPrefix), 0.0);
  EXPECT_GT(set.grad_norm(kForwardPrefix), 0.0);
}

TEST_F(JointFixture, BetaZeroLeavesForwardHeadWithoutGradient) {
  collect(Variant::kIcm);
  config.beta = 0.0;
  Graph g;
  JointLoss jl = build(g);
  set.zero_grad();
  g.backward(jl.total);
  EXPECT_EQ(set.grad_norm(kForwardPrefix), 0.0);
  EXPECT_GT(set.grad_norm(kInversePrefix), 0.0);
}

TEST_F(JointFixture, BetaOneTrainsOnlyForwardHeadAmongIcm) {
  collect(Variant::kIcm);
  config.beta = 1.0;
  Graph g;
  JointLoss jl = build(g);
  set.zero_grad();
  g.backward(jl.total);
  EXPECT_EQ(set.grad_norm(kEncoderPrefix), 0.0);
  EXPECT_EQ(set.grad_norm(kInversePrefix), 0.0);
  EXPECT_GT(set.grad_norm(kForwardPrefix), 0.0);
}

TEST_F(JointFixture, LambdaZeroLeavesPolicyUnchanged) {
  collect(Variant::kIcm);
  config.lambda = 0.0;
  const ParameterSet before = set;
  Adam adam;
  std::mt19937_64 rng(1);
  joint_update(buf, set, adam, config, rng);
  for (const Parameter& p : set) {
    if (p.name.starts_with(kPolicyPrefix)) EXPECT_EQ(p.value, before.at(p.name).value) << p.name;
  }
  EXPECT_NE(set.at("icm/forward/out/w").value, before.at("icm/forward/out/w").value);
}

TEST_F(JointFixture, ZeroLearningRateChangesNothing) {
  collect(Variant::kIcm);
  const ParameterSet before = set;
  Adam adam(AdamConfig{0.0});
  std::mt19937_64 rng(1);
  UpdateStats s = joint_update(buf, set, adam, config, rng);
  EXPECT_GT(s.grad_norm, 0.0);
  for (const Parameter& p : set) EXPECT_EQ(p.value, before.at(p.name).value) << p.name;
}

TEST_F(JointFixture, UpdateFillsIntrinsicFromTheSameSnapshotAsAnnotation) {
  collect(Variant::kIcm);
  RolloutBuffer copy = buf;
  std::mt19937_64 rng(1);
  annotate_intrinsic(copy, set, config, rng);
  Adam adam;
  joint_update(buf, set, adam, config, rng);
  ASSERT_TRUE(buf.intrinsic_ready);
  for (std::size_t i = 0; i < buf.r_i.size(); ++i)
    EXPECT_TRUE(oracle::close(buf.r_i[i], copy.r_i[i], 1e-4, 1e-7)) << i;
}

TEST_F(JointFixture, PixelsVariantHasNoInverseLoss) {
  collect(Variant::kIcmPixels);
  Graph g;
  JointLoss jl = build(g);
  EXPECT_FALSE(jl.inverse.valid());
  ASSERT_TRUE(jl.forward.valid());
  EXPECT_NEAR(jl.total.item(), config.lambda * jl.policy.item() + config.beta * jl.forward.item(), 1e-5);
  for (float r : jl.r_intrinsic) EXPECT_GE(r, 0.0f);
}

TEST_F(JointFixture, RandomRewardVariantDrawsFromItsDistribution) {
  collect(Variant::kRandomReward);
  config.random_reward = {NoiseKind::kUniform, 2.0, 1.0};
  Graph g;
  JointLoss jl = build(g);
  for (float r : jl.r_intrinsic) {
    EXPECT_GE(r, 2.0f);
    EXPECT_LE(r, 3.0f);
  }
}

TEST(TrainConfig, ValidationRejectsOutOfDomainValues) {
  EXPECT_NO_THROW(validate_train_config(TrainConfig{}));
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(validate_train_config(c), ConfigError);
  };
  bad([](TrainConfig& c) { c.beta = 1.5; });
  bad([](TrainConfig& c) { c.beta = -0.1; });
  bad([](TrainConfig& c) { c.lambda = 0.0; });
  bad([](TrainConfig& c) { c.eta = 0.0; });
  bad([](TrainConfig& c) { c.rollout_length = 0; });
  bad([](TrainConfig& c) { c.num_envs = 0; });
  bad([](TrainConfig& c) { c.gamma = 1.5; });
  EXPECT_THROW(parse_variant("a3c"), ConfigError);
  for (Variant v : {Variant::kVanilla, Variant::kIcm, Variant::kIcmPixels, Variant::kRandomReward})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
}

TEST(Trainer, SeededRunsAreBitIdentical) {
  auto run = [] {
    TrainConfig c;
    c.num_envs = 2;
    c.rollout_length = 5;
    Trainer tr(c, [](int) { return std::make_unique<MazeEnv>(small_maze(20), SpawnMode::kDense); },
               model(Variant::kIcm, 8), 8);
    std::vector<double> stream;
    for (int u = 0; u < 3; ++u) {
      UpdateStats s = tr.update();
      stream.insert(stream.end(), {s.total_loss, s.policy_loss, s.inverse_loss, s.forward_loss,
                                   s.grad_norm, s.mean_intrinsic});
    }
    stream.push_back(tr.params().at("policy/fc/w").value[123]);
    return stream;
  };
  EXPECT_EQ(run(), run());
}

TEST(RunningStd, MatchesTwoPassEstimate) {
  std::mt19937_64 rng(3);
  const std::vector<float> xs = oracle::random_floats(rng, 1000, 0.0f, 5.0f);
  RunningStd rs;
  rs.update(std::span<const float>(xs).subspan(0, 400));
  rs.update(std::span<const float>(xs).subspan(400));
  double m = 0;
  for (float x : xs) m += x;
  m /= xs.size();
  double v = 0;
  for (float x : xs) v += (x - m) * (x - m);
  EXPECT_NEAR(rs.stddev(), std::sqrt(v / (xs.size() - 1)), 1e-9);
}

}  // namespace
}  // namespace curio
