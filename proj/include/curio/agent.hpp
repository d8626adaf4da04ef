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

// Synchronous advantage actor-critic driven by extrinsic plus intrinsic
// reward, with the composite policy / inverse / forward objective.

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "curio/envs.hpp"
#include "curio/icm.hpp"
#include "curio/nn.hpp"
#include "curio/optim.hpp"
#include "curio/tensor.hpp"

namespace curio {

enum class Variant { kVanilla, kIcm, kIcmPixels, kRandomReward };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);
IcmKind icm_kind_for(Variant v);

struct TrainConfig {
  Variant variant = Variant::kIcm;
  double gamma = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double lambda = 0.1;
  double beta = 0.2;
  double learning_rate = 1e-3;
  int rollout_length = 20;
  int num_envs = 16;
  std::int64_t total_steps = 200000;
  double grad_clip = 40.0;
  double eta = 0.01;
  /// Reward scale for the pixel-space ablation, whose error is a per-pixel
  /// mean rather than a 288-dim squared norm.
  double eta_pixels = 1.0;
  bool normalize_intrinsic = false;
  /// When set, L_F also trains the encoder through phi_t.
  bool forward_loss_trains_encoder = false;
  /// When cleared the agent optimizes intrinsic reward only.
  bool use_extrinsic = true;
  RandomRewardSpec random_reward;
};

/// Throws ConfigError on values outside their domain.
void validate_train_config(const TrainConfig& c);

// --- acting -----------------------------------------------------------------

struct ActionSample {
  int action = 0;
  float log_prob = 0.0f;
  float value = 0.0f;
};

/// Categorical draw from softmax(logits row). Throws DivergenceError on
/// non-finite logits.
int sample_categorical(std::span<const float> logits, std::mt19937_64& rng, float* log_prob);

/// Policy forward pass on a host observation batch [B,4,42,42] followed by
/// one draw per row.
std::vector<ActionSample> sample_actions(ParameterSet& params, std::span<const float> obs,
                                         int batch, std::mt19937_64& rng);

ActionSample sample_action(ParameterSet& params, std::span<const float> obs,
                           std::mt19937_64& rng);

// --- environments -------------------------------------------------------------

struct EpisodeRecord {
  double extrinsic_return = 0.0;
  bool success = false;
  int length = 0;
  int rooms = 0;
  int distance = 0;
  std::int64_t end_step = 0;
};

/// E environments stepped in lockstep, each with its own frame stack and a
/// deterministic per-episode seed stream. Finished episodes reset inline.
class VecEnv {
 public:
  VecEnv(std::vector<std::unique_ptr<Environment>> envs, std::uint64_t seed);

  int size() const { return static_cast<int>(envs_.size()); }
  int action_count() const { return envs_.front()->action_count(); }
  const std::vector<float>& observation(int e) const { return stacks_[e].observation(); }
  EnvInfo info(int e) const { return envs_[e]->info(); }

  struct Outcome {
    float reward = 0.0f;
    bool done = false;
    /// Observation after the step, before any reset.
    const std::vector<float>* final_observation = nullptr;
  };
  Outcome step(int e, int action);

  std::int64_t steps() const { return steps_; }
  const std::vector<EpisodeRecord>& episodes() const { return episodes_; }

 private:
  void begin_episode(int e);

  std::vector<std::unique_ptr<Environment>> envs_;
  std::vector<FrameStack> stacks_;
  std::vector<std::int64_t> episode_counter_;
  std::vector<EpisodeRecord> current_;
  std::vector<std::vector<bool>> rooms_seen_;
  std::vector<EpisodeRecord> episodes_;
  std::vector<float> terminal_;
  std::uint64_t seed_;
  std::int64_t steps_ = 0;
};

// --- rollouts -----------------------------------------------------------------

struct RolloutBuffer {
  int envs = 0;
  int steps = 0;
  /// [E, T+1, 4,42,42]; slot T holds the observation after the last step.
  std::vector<float> obs;
  /// Terminal observations of episodes that ended inside the rollout.
  std::vector<float> terminal_obs;
  /// [E*T]: index into terminal_obs for done steps, else -1.
  std::vector<int> terminal_index;
  std::vector<int> actions;
  std::vector<float> log_probs;
  std::vector<float> values;
  std::vector<float> r_e;
  std::vector<float> r_i;
  std::vector<std::uint8_t> dones;
  std::vector<float> bootstrap;  // [E]
  bool intrinsic_ready = false;

  void resize(int e, int t);
  int index(int e, int t) const { return e * steps + t; }
  std::span<const float> observation(int e, int t) const;
  /// s_{t+1} of transition (e,t): the terminal frame for done steps.
  std::span<const float> next_observation(int e, int t) const;
  /// r_e + r_i per transition; r_e is dropped when use_extrinsic is false.
  std::vector<float> combined_reward(bool use_extrinsic = true) const;
};

/// Steps every env T times with the current policy. Intrinsic rewards are
/// left for annotate_intrinsic (or joint_update) to fill.
void collect_rollout(VecEnv& envs, ParameterSet& params, int steps, std::mt19937_64& rng,
                     RolloutBuffer& buffer);

/// Fills buffer.r_i from the current parameter snapshot (no gradients).
void annotate_intrinsic(RolloutBuffer& buffer, ParameterSet& params, const TrainConfig& config,
                        std::mt19937_64& rng);

struct Returns {
  std::vector<float> returns;     // [E*T]
  std::vector<float> advantages;  // [E*T]
};

/// R_t = r_t + gamma R_{t+1} (zero after done), bootstrapped by the critic.
Returns n_step_returns(std::span<const float> rewards, std::span<const std::uint8_t> dones,
                       std::span<const float> values, std::span<const float> bootstrap, int envs,
                       int steps, double gamma);
Returns n_step_returns(const RolloutBuffer& buffer, double gamma);

struct A2cLoss {
  Tensor total;
  Tensor policy_gradient;
  Tensor value;
  Tensor entropy;  // mean entropy, positive
};

/// mean(-log pi(a|s) A) + c_v mean((V-R)^2) - c_e mean(H); advantages and
/// returns enter as constants.
A2cLoss a2c_loss(const Tensor& logits, const Tensor& values, std::span<const int> actions,
                 std::span<const float> advantages, std::span<const float> returns,
                 double value_coef, double entropy_coef);

/// Running standard deviation of intrinsic rewards (Welford).
class RunningStd {
 public:
  void update(std::span<const float> xs);
  double stddev() const;
  std::int64_t count() const { return n_; }

 private:
  std::int64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct JointLoss {
  Tensor total;
  Tensor policy;   // A2C loss, unweighted
  Tensor inverse;  // L_I, invalid for variants without it
  Tensor forward;  // L_F
  A2cLoss a2c;
  std::vector<float> r_intrinsic;
};

/// Builds lambda * L_pi + (1-beta) * L_I + beta * L_F on `graph`. Fills
/// buffer.r_i from the same forward pass when it is not ready yet, divided by
/// the running deviation when a normalizer is given.
JointLoss build_joint_loss(Graph& graph, RolloutBuffer& buffer, ParameterSet& params,
                           const TrainConfig& config, std::mt19937_64& rng,
                           RunningStd* normalizer = nullptr);

struct UpdateStats {
  double total_loss = 0.0;
  double policy_loss = 0.0;
  double inverse_loss = 0.0;
  double forward_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double mean_intrinsic = 0.0;
  double mean_extrinsic = 0.0;
};

/// One optimizer step on the composite loss with clipping and Adam.
UpdateStats joint_update(RolloutBuffer& buffer, ParameterSet& params, Adam& optimizer,
                         const TrainConfig& config, std::mt19937_64& rng,
                         RunningStd* normalizer = nullptr);

using EnvFactory = std::function<std::unique_ptr<Environment>(int index)>;

class Trainer {
 public:
  Trainer(TrainConfig config, const EnvFactory& make_env, ParameterSet params, std::uint64_t seed);

  /// Collect one rollout and apply one joint update.
  UpdateStats update();

  std::int64_t steps() const { return envs_.steps(); }
  ParameterSet& params() { return params_; }
  Adam& optimizer() { return optimizer_; }
  std::mt19937_64& rng() { return rng_; }
  const TrainConfig& config() const { return config_; }
  const VecEnv& envs() const { return envs_; }
  const RolloutBuffer& last_rollout() const { return buffer_; }

 private:
  TrainConfig config_;
  ParameterSet params_;
  Adam optimizer_;
  std::mt19937_64 rng_;
  VecEnv envs_;
  RolloutBuffer buffer_;
  RunningStd intrinsic_std_;
};

}  // namespace curio
