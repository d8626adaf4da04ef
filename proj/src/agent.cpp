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

#include "curio/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "curio/errors.hpp"

namespace curio {

Variant parse_variant(const std::string& name) {
  if (name == "vanilla") return Variant::kVanilla;
  if (name == "icm") return Variant::kIcm;
  if (name == "icm-pixels") return Variant::kIcmPixels;
  if (name == "random-reward") return Variant::kRandomReward;
  throw ConfigError("unknown variant '" + name +
                    "' (expected vanilla, icm, icm-pixels or random-reward)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kVanilla: return "vanilla";
    case Variant::kIcm: return "icm";
    case Variant::kIcmPixels: return "icm-pixels";
    case Variant::kRandomReward: return "random-reward";
  }
  return "?";
}

IcmKind icm_kind_for(Variant v) {
  switch (v) {
    case Variant::kIcm: return IcmKind::kFeatures;
    case Variant::kIcmPixels: return IcmKind::kPixels;
    default: return IcmKind::kNone;
  }
}

void validate_train_config(const TrainConfig& c) {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(c.beta >= 0.0 && c.beta <= 1.0)) fail("beta must lie in [0,1], got " + std::to_string(c.beta));
  if (!(c.lambda > 0.0)) fail("lambda must be positive, got " + std::to_string(c.lambda));
  if (!(c.gamma > 0.0 && c.gamma <= 1.0)) fail("gamma must lie in (0,1], got " + std::to_string(c.gamma));
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(c.eta > 0.0)) fail("eta must be positive, got " + std::to_string(c.eta));
  if (!(c.eta_pixels > 0.0)) fail("eta_pixels must be positive");
  if (c.rollout_length < 1) fail("rollout_length must be >= 1");
  if (c.num_envs < 1) fail("num_envs must be >= 1");
  if (c.total_steps < 0) fail("total_steps must be >= 0");
  if (!(c.grad_clip > 0.0)) fail("grad_clip must be positive");
  if (c.entropy_coef < 0.0 || c.value_coef < 0.0) fail("loss coefficients must be >= 0");
  if (!(c.random_reward.scale >= 0.0)) fail("random reward scale must be >= 0");
}

// --- acting -----------------------------------------------------------------

int sample_categorical(std::span<const float> logits, std::mt19937_64& rng, float* log_prob) {
  float hi = -INFINITY;
  for (float l : logits) {
    if (!std::isfinite(l)) throw DivergenceError("non-finite policy logit");
    hi = std::max(hi, l);
  }
  std::vector<double> w(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (w[i] = std::exp(double(logits[i]) - hi));
  std::discrete_distribution<int> dist(w.begin(), w.end());
  const int a = dist(rng);
  if (log_prob) *log_prob = static_cast<float>(double(logits[a]) - hi - std::log(z));
  return a;
}

std::vector<ActionSample> sample_actions(ParameterSet& params, std::span<const float> obs,
                                         int batch, std::mt19937_64& rng) {
  Graph g(GradMode::kDisabled);
  Tensor x = g.constant({batch, kFrameStack, kFrameSize, kFrameSize},
                        std::vector<float>(obs.begin(), obs.end()));
  PolicyOutput out = policy_forward(g, params, x);
  const int a = out.logits.dim(1);
  std::vector<ActionSample> samples(batch);
  auto logits = out.logits.values();
  auto values = out.value.values();
  for (int b = 0; b < batch; ++b) {
    samples[b].action = sample_categorical(logits.subspan(std::size_t(b) * a, a), rng,
                                           &samples[b].log_prob);
    samples[b].value = values[b];
  }
  return samples;
}

ActionSample sample_action(ParameterSet& params, std::span<const float> obs,
                           std::mt19937_64& rng) {
  return sample_actions(params, obs, 1, rng).front();
}

// --- environments -------------------------------------------------------------

VecEnv::VecEnv(std::vector<std::unique_ptr<Environment>> envs, std::uint64_t seed)
    : envs_(std::move(envs)), seed_(seed) {
  if (envs_.empty()) throw ConfigError("VecEnv needs at least one environment");
  const int n = size();
  stacks_.resize(n);
  episode_counter_.assign(n, 0);
  current_.resize(n);
  rooms_seen_.resize(n);
  for (int e = 0; e < n; ++e) begin_episode(e);
}

void VecEnv::begin_episode(int e) {
  envs_[e]->reset(mix_seed(mix_seed(seed_, std::uint64_t(e)), std::uint64_t(episode_counter_[e]++)));
  stacks_[e].reset(envs_[e]->frame());
  current_[e] = EpisodeRecord{};
  rooms_seen_[e].clear();
  const EnvInfo info = envs_[e]->info();
  if (info.room >= 0) {
    rooms_seen_[e].resize(info.room + 1, false);
    rooms_seen_[e][info.room] = true;
  }
  current_[e].distance = info.distance;
}

VecEnv::Outcome VecEnv::step(int e, int action) {
  const StepResult r = envs_[e]->step(action);
  ++steps_;
  stacks_[e].push(envs_[e]->frame());
  EpisodeRecord& rec = current_[e];
  rec.extrinsic_return += r.reward;
  ++rec.length;
  const EnvInfo info = envs_[e]->info();
  if (info.room >= 0) {
    auto& seen = rooms_seen_[e];
    if (static_cast<int>(seen.size()) <= info.room) seen.resize(info.room + 1, false);
    seen[info.room] = true;
  }
  rec.distance = std::max(rec.distance, info.distance);
  Outcome out{r.reward, r.done, &stacks_[e].observation()};
  if (r.done) {
    rec.success = info.success;
    rec.rooms = static_cast<int>(std::count(rooms_seen_[e].begin(), rooms_seen_[e].end(), true));
    rec.end_step = steps_;
    episodes_.push_back(rec);
    terminal_ = stacks_[e].observation();
    out.final_observation = &terminal_;
    begin_episode(e);
  }
  return out;
}

// --- rollouts -----------------------------------------------------------------

namespace {
constexpr std::size_t kObsSize = std::size_t(kFrameStack) * kFramePixels;
}

void RolloutBuffer::resize(int e, int t) {
  envs = e;
  steps = t;
  const std::size_t n = std::size_t(e) * t;
  obs.assign(std::size_t(e) * (t + 1) * kObsSize, 0.0f);
  terminal_obs.clear();
  terminal_index.assign(n, -1);
  actions.assign(n, 0);
  log_probs.assign(n, 0.0f);
  values.assign(n, 0.0f);
  r_e.assign(n, 0.0f);
  r_i.assign(n, 0.0f);
  dones.assign(n, 0);
  bootstrap.assign(e, 0.0f);
  intrinsic_ready = false;
}

std::span<const float> RolloutBuffer::observation(int e, int t) const {
  return {obs.data() + (std::size_t(e) * (steps + 1) + t) * kObsSize, kObsSize};
}

std::span<const float> RolloutBuffer::next_observation(int e, int t) const {
  const int ti = terminal_index[index(e, t)];
  if (ti >= 0) return {terminal_obs.data() + std::size_t(ti) * kObsSize, kObsSize};
  return observation(e, t + 1);
}

std::vector<float> RolloutBuffer::combined_reward(bool use_extrinsic) const {
  std::vector<float> r(r_i);
  if (use_extrinsic)
    for (std::size_t i = 0; i < r.size(); ++i) r[i] += r_e[i];
  return r;
}

void collect_rollout(VecEnv& envs, ParameterSet& params, int steps, std::mt19937_64& rng,
                     RolloutBuffer& buffer) {
  const int n = envs.size();
  buffer.resize(n, steps);
  std::vector<float> batch(std::size_t(n) * kObsSize);
  auto slot = [&](int e, int t) {
    return buffer.obs.data() + (std::size_t(e) * (steps + 1) + t) * kObsSize;
  };
  for (int e = 0; e < n; ++e) std::memcpy(slot(e, 0), envs.observation(e).data(), kObsSize * sizeof(float));
  for (int t = 0; t < steps; ++t) {
    for (int e = 0; e < n; ++e)
      std::memcpy(batch.data() + e * kObsSize, slot(e, t), kObsSize * sizeof(float));
    const std::vector<ActionSample> acts = sample_actions(params, batch, n, rng);
    for (int e = 0; e < n; ++e) {
      const int i = buffer.index(e, t);
      buffer.actions[i] = acts[e].action;
      buffer.log_probs[i] = acts[e].log_prob;
      buffer.values[i] = acts[e].value;
      const VecEnv::Outcome o = envs.step(e, acts[e].action);
      buffer.r_e[i] = o.reward;
      buffer.dones[i] = o.done ? 1 : 0;
      if (o.done) {
        buffer.terminal_index[i] = static_cast<int>(buffer.terminal_obs.size() / kObsSize);
        buffer.terminal_obs.insert(buffer.terminal_obs.end(), o.final_observation->begin(),
                                   o.final_observation->end());
      }
      std::memcpy(slot(e, t + 1), envs.observation(e).data(), kObsSize * sizeof(float));
    }
  }
  // Critic estimate at the states after the last step.
  for (int e = 0; e < n; ++e)
    std::memcpy(batch.data() + e * kObsSize, slot(e, steps), kObsSize * sizeof(float));
  Graph g(GradMode::kDisabled);
  PolicyOutput out = policy_forward(
      g, params, g.constant({n, kFrameStack, kFrameSize, kFrameSize}, std::move(batch)));
  auto v = out.value.values();
  std::copy(v.begin(), v.end(), buffer.bootstrap.begin());
}

namespace {

// All distinct observations of a rollout: E*(T+1) regular slots followed by
// the terminal frames. Returns the row of s_t and s_{t+1} per transition.
struct UniqueObs {
  std::vector<int> rows_t;
  std::vector<int> rows_t1;
  int count = 0;
};

UniqueObs unique_rows(const RolloutBuffer& b) {
  UniqueObs u;
  const int regular = b.envs * (b.steps + 1);
  u.count = regular + static_cast<int>(b.terminal_obs.size() / kObsSize);
  for (int e = 0; e < b.envs; ++e) {
    for (int t = 0; t < b.steps; ++t) {
      const int i = b.index(e, t);
      u.rows_t.push_back(e * (b.steps + 1) + t);
      const int ti = b.terminal_index[i];
      u.rows_t1.push_back(ti >= 0 ? regular + ti : e * (b.steps + 1) + t + 1);
    }
  }
  return u;
}

Tensor all_observations(Graph& g, const RolloutBuffer& b, const UniqueObs& u) {
  std::vector<float> data(std::size_t(u.count) * kObsSize);
  std::memcpy(data.data(), b.obs.data(), b.obs.size() * sizeof(float));
  if (!b.terminal_obs.empty())
    std::memcpy(data.data() + b.obs.size(), b.terminal_obs.data(), b.terminal_obs.size() * sizeof(float));
  return g.constant({u.count, kFrameStack, kFrameSize, kFrameSize}, std::move(data));
}

Tensor policy_observations(Graph& g, const RolloutBuffer& b) {
  std::vector<float> data(std::size_t(b.envs) * b.steps * kObsSize);
  for (int e = 0; e < b.envs; ++e)
    std::memcpy(data.data() + std::size_t(e) * b.steps * kObsSize,
                b.obs.data() + std::size_t(e) * (b.steps + 1) * kObsSize,
                std::size_t(b.steps) * kObsSize * sizeof(float));
  return g.constant({b.envs * b.steps, kFrameStack, kFrameSize, kFrameSize}, std::move(data));
}

struct IntrinsicPass {
  Tensor inverse;
  Tensor forward;
  std::vector<float> reward;
};

IntrinsicPass intrinsic_pass(Graph& g, const RolloutBuffer& b, ParameterSet& params,
                             const TrainConfig& config, std::mt19937_64& rng) {
  IntrinsicPass p;
  const int n = b.envs * b.steps;
  switch (config.variant) {
    case Variant::kVanilla:
      p.reward.assign(n, 0.0f);
      break;
    case Variant::kRandomReward:
      p.reward.resize(n);
      for (float& r : p.reward) r = static_cast<float>(random_reward(rng, config.random_reward));
      break;
    case Variant::kIcm: {
      const UniqueObs u = unique_rows(b);
      Tensor phi = encoder_forward(g, params, all_observations(g, b, u));
      Tensor phi_t = take_rows(phi, u.rows_t);
      Tensor phi_t1 = take_rows(phi, u.rows_t1);
      p.inverse = inverse_loss(inverse_predict(g, params, phi_t, phi_t1), b.actions);
      const Tensor fwd_in = config.forward_loss_trains_encoder ? phi_t : stop_gradient(phi_t);
      Tensor phi_hat = forward_predict(g, params, fwd_in, b.actions);
      p.forward = forward_loss(phi_hat, phi_t1);
      p.reward = intrinsic_reward(phi_hat.values(), phi_t1.values(), n, config.eta);
      break;
    }
    case Variant::kIcmPixels: {
      std::vector<float> cur(std::size_t(n) * kObsSize);
      std::vector<float> next_all(std::size_t(n) * kObsSize);
      for (int e = 0; e < b.envs; ++e)
        for (int t = 0; t < b.steps; ++t) {
          const int i = b.index(e, t);
          auto s = b.observation(e, t);
          auto s1 = b.next_observation(e, t);
          std::copy(s.begin(), s.end(), cur.begin() + std::size_t(i) * kObsSize);
          std::copy(s1.begin(), s1.end(), next_all.begin() + std::size_t(i) * kObsSize);
        }
      std::vector<float> target = newest_frames(next_all, n, kFrameStack, kFrameSize, kFrameSize);
      Tensor pred = pixels_forward(g, params,
                                   g.constant({n, kFrameStack, kFrameSize, kFrameSize}, std::move(cur)),
                                   b.actions);
      p.reward = pixel_intrinsic_reward(pred.values(), target, n, config.eta_pixels);
      Tensor tgt = g.constant({n, 1, kFrameSize, kFrameSize}, std::move(target));
      p.forward = scale(mean(pixel_error(pred, tgt)), 0.5f);
      break;
    }
  }
  return p;
}

}  // namespace

void annotate_intrinsic(RolloutBuffer& buffer, ParameterSet& params, const TrainConfig& config,
                        std::mt19937_64& rng) {
  Graph g(GradMode::kDisabled);
  buffer.r_i = intrinsic_pass(g, buffer, params, config, rng).reward;
  buffer.intrinsic_ready = true;
}

Returns n_step_returns(std::span<const float> rewards, std::span<const std::uint8_t> dones,
                       std::span<const float> values, std::span<const float> bootstrap, int envs,
                       int steps, double gamma) {
  const std::size_t n = std::size_t(envs) * steps;
  if (rewards.size() != n || dones.size() != n || values.size() != n ||
      bootstrap.size() != std::size_t(envs)) {
    throw ShapeError("n_step_returns: inconsistent rollout arrays for E=" + std::to_string(envs) +
                     " T=" + std::to_string(steps));
  }
  Returns out;
  out.returns.resize(n);
  out.advantages.resize(n);
  for (int e = 0; e < envs; ++e) {
    double r = bootstrap[e];
    for (int t = steps - 1; t >= 0; --t) {
      const std::size_t i = std::size_t(e) * steps + t;
      r = rewards[i] + (dones[i] ? 0.0 : gamma * r);
      out.returns[i] = static_cast<float>(r);
      out.advantages[i] = out.returns[i] - values[i];
    }
  }
  return out;
}

Returns n_step_returns(const RolloutBuffer& buffer, double gamma) {
  const std::vector<float> r = buffer.combined_reward();
  return n_step_returns(r, buffer.dones, buffer.values, buffer.bootstrap, buffer.envs,
                        buffer.steps, gamma);
}

A2cLoss a2c_loss(const Tensor& logits, const Tensor& values, std::span<const int> actions,
                 std::span<const float> advantages, std::span<const float> returns,
                 double value_coef, double entropy_coef) {
  Graph& g = *logits.graph();
  const int b = logits.dim(0);
  const int a = logits.dim(1);
  if (static_cast<int>(actions.size()) != b || static_cast<int>(advantages.size()) != b ||
      static_cast<int>(returns.size()) != b || values.shape() != Shape{b}) {
    throw ShapeError("a2c_loss: batch mismatch for logits " + shape_str(logits.shape()));
  }
  Tensor logp = log_softmax(logits);
  Tensor logp_a = row_sum(mul(logp, one_hot(g, actions, a)));
  Tensor adv = g.constant({b}, std::vector<float>(advantages.begin(), advantages.end()));
  Tensor ret = g.constant({b}, std::vector<float>(returns.begin(), returns.end()));
  A2cLoss out;
  out.policy_gradient = scale(mean(mul(logp_a, adv)), -1.0f);
  Tensor d = sub(values, ret);
  out.value = mean(mul(d, d));
  out.entropy = scale(mean(row_sum(mul(softmax(logits), logp))), -1.0f);
  out.total = add(add(out.policy_gradient, scale(out.value, static_cast<float>(value_coef))),
                  scale(out.entropy, static_cast<float>(-entropy_coef)));
  return out;
}

void RunningStd::update(std::span<const float> xs) {
  for (float x : xs) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / double(n_);
    m2_ += d * (x - mean_);
  }
}

double RunningStd::stddev() const {
  return n_ > 1 ? std::sqrt(m2_ / double(n_ - 1)) : 0.0;
}

JointLoss build_joint_loss(Graph& graph, RolloutBuffer& buffer, ParameterSet& params,
                           const TrainConfig& config, std::mt19937_64& rng,
                           RunningStd* normalizer) {
  JointLoss out;
  IntrinsicPass ip = intrinsic_pass(graph, buffer, params, config, rng);
  if (!buffer.intrinsic_ready) {
    buffer.r_i = ip.reward;
    if (normalizer && config.variant != Variant::kVanilla) {
      normalizer->update(buffer.r_i);
      const double sd = normalizer->stddev();
      if (sd > 1e-8)
        for (float& r : buffer.r_i) r = static_cast<float>(r / sd);
    }
    buffer.intrinsic_ready = true;
  }
  out.r_intrinsic = buffer.r_i;

  const std::vector<float> rewards = buffer.combined_reward(config.use_extrinsic);
  const Returns ret = n_step_returns(rewards, buffer.dones, buffer.values, buffer.bootstrap,
                                     buffer.envs, buffer.steps, config.gamma);
  PolicyOutput po = policy_forward(graph, params, policy_observations(graph, buffer));
  out.a2c = a2c_loss(po.logits, po.value, buffer.actions, ret.advantages, ret.returns,
                     config.value_coef, config.entropy_coef);
  out.policy = out.a2c.total;
  out.inverse = ip.inverse;
  out.forward = ip.forward;

  Tensor total = scale(out.policy, static_cast<float>(config.lambda));
  if (out.inverse.valid()) total = add(total, scale(out.inverse, static_cast<float>(1.0 - config.beta)));
  if (out.forward.valid()) total = add(total, scale(out.forward, static_cast<float>(config.beta)));
  out.total = total;
  return out;
}

UpdateStats joint_update(RolloutBuffer& buffer, ParameterSet& params, Adam& optimizer,
                         const TrainConfig& config, std::mt19937_64& rng,
                         RunningStd* normalizer) {
  params.zero_grad();
  UpdateStats s;
  {
    Graph g;
    JointLoss jl = build_joint_loss(g, buffer, params, config, rng, normalizer);
    g.backward(jl.total);
    s.total_loss = jl.total.item();
    s.policy_loss = jl.policy.item();
    s.entropy = jl.a2c.entropy.item();
    if (jl.inverse.valid()) s.inverse_loss = jl.inverse.item();
    if (jl.forward.valid()) s.forward_loss = jl.forward.item();
  }
  const double norm = params.grad_norm();
  if (!std::isfinite(s.total_loss) || !std::isfinite(norm)) {
    std::ostringstream msg;
    msg << "joint update diverged: total=" << s.total_loss << " policy=" << s.policy_loss
        << " inverse=" << s.inverse_loss << " forward=" << s.forward_loss << " grad_norm{policy="
        << params.grad_norm(kPolicyPrefix) << " encoder=" << params.grad_norm(kEncoderPrefix)
        << " inverse=" << params.grad_norm(kInversePrefix)
        << " forward=" << params.grad_norm(kForwardPrefix) << "}";
    throw DivergenceError(msg.str());
  }
  s.grad_norm = clip_grad_norm(params, config.grad_clip);
  optimizer.step(params);
  double ri = 0.0, re = 0.0;
  for (float r : buffer.r_i) ri += r;
  for (float r : buffer.r_e) re += r;
  s.mean_intrinsic = ri / double(buffer.r_i.size());
  s.mean_extrinsic = re / double(buffer.r_e.size());
  return s;
}

// --- trainer ------------------------------------------------------------------

namespace {
std::vector<std::unique_ptr<Environment>> make_envs(const EnvFactory& f, int n) {
  std::vector<std::unique_ptr<Environment>> envs;
  for (int i = 0; i < n; ++i) envs.push_back(f(i));
  return envs;
}
}  // namespace

Trainer::Trainer(TrainConfig config, const EnvFactory& make_env, ParameterSet params,
                 std::uint64_t seed)
    : config_(std::move(config)),
      params_(std::move(params)),
      optimizer_(AdamConfig{config_.learning_rate}),
      rng_(mix_seed(seed, 0x5eedULL)),
      envs_(make_envs(make_env, config_.num_envs), seed) {
  validate_train_config(config_);
}

UpdateStats Trainer::update() {
  collect_rollout(envs_, params_, config_.rollout_length, rng_, buffer_);
  return joint_update(buffer_, params_, optimizer_, config_, rng_,
                      config_.normalize_intrinsic ? &intrinsic_std_ : nullptr);
}

}  // namespace curio
