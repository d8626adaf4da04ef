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

#include <charconv>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include "curio/errors.hpp"
#include "curio/harness.hpp"
#include "curio/kvtext.hpp"

namespace curio {

ExperimentKind parse_experiment_kind(const std::string& name) {
  if (name == "sparse-suite") return ExperimentKind::kSparseSuite;
  if (name == "noise-robustness") return ExperimentKind::kNoiseRobustness;
  if (name == "no-reward-coverage") return ExperimentKind::kNoRewardCoverage;
  if (name == "transfer") return ExperimentKind::kTransfer;
  if (name == "scroller-noreward") return ExperimentKind::kScrollerNoReward;
  if (name == "gradcheck") return ExperimentKind::kGradcheck;
  throw ConfigError("unknown experiment kind '" + name + "'");
}

std::string experiment_kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::kSparseSuite: return "sparse-suite";
    case ExperimentKind::kNoiseRobustness: return "noise-robustness";
    case ExperimentKind::kNoRewardCoverage: return "no-reward-coverage";
    case ExperimentKind::kTransfer: return "transfer";
    case ExperimentKind::kScrollerNoReward: return "scroller-noreward";
    case ExperimentKind::kGradcheck: return "gradcheck";
  }
  return "?";
}

TransferMode parse_transfer_mode(const std::string& name) {
  if (name == "as-is") return TransferMode::kAsIs;
  if (name == "finetune-curiosity") return TransferMode::kFinetuneCuriosity;
  if (name == "finetune-extrinsic") return TransferMode::kFinetuneExtrinsic;
  throw ConfigError("unknown transfer mode '" + name + "'");
}

std::string transfer_mode_name(TransferMode mode) {
  switch (mode) {
    case TransferMode::kAsIs: return "as-is";
    case TransferMode::kFinetuneCuriosity: return "finetune-curiosity";
    case TransferMode::kFinetuneExtrinsic: return "finetune-extrinsic";
  }
  return "?";
}

namespace {

struct Field {
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <typename T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

using FieldMap = std::map<std::string, Field>;

// Registers the env keys under a prefix for one of the two env slots.
void add_env_fields(FieldMap& m, const std::string& prefix, EnvConfig ExperimentConfig::*slot) {
  auto env = [slot](ExperimentConfig& c) -> EnvConfig& { return c.*slot; };
  auto cenv = [slot](const ExperimentConfig& c) -> const EnvConfig& { return c.*slot; };
  m[prefix + "kind"] = {
      [env](ExperimentConfig& c, const std::string& k, const std::string& v) {
        if (v == "maze") env(c).kind = EnvKind::kMaze;
        else if (v == "scroller") env(c).kind = EnvKind::kScroller;
        else throw ConfigError("key '" + k + "': expected maze or scroller");
      },
      [cenv](const ExperimentConfig& c) {
        return std::string(cenv(c).kind == EnvKind::kMaze ? "maze" : "scroller");
      }};
#define CURIO_INT_FIELD(name)                                                          \
  m[prefix + #name] = {[env](ExperimentConfig& c, const std::string& k,                \
                             const std::string& v) { env(c).name = parse_int(k, v); }, \
                       [cenv](const ExperimentConfig& c) { return fmt_int(cenv(c).name); }};
  CURIO_INT_FIELD(room_rows)
  CURIO_INT_FIELD(room_cols)
  CURIO_INT_FIELD(room_size)
  CURIO_INT_FIELD(episode_cap)
  CURIO_INT_FIELD(level)
  CURIO_INT_FIELD(scroller_cap)
  CURIO_INT_FIELD(action_repeat)
#undef CURIO_INT_FIELD
  m[prefix + "texture_seed"] = {
      [env](ExperimentConfig& c, const std::string& k, const std::string& v) {
        env(c).texture_seed = parse_uint64(k, v);
      },
      [cenv](const ExperimentConfig& c) { return fmt_int(cenv(c).texture_seed); }};
  m[prefix + "map_file"] = {
      [env](ExperimentConfig& c, const std::string&, const std::string& v) { env(c).map_file = v; },
      [cenv](const ExperimentConfig& c) { return cenv(c).map_file; }};
  m[prefix + "spawn"] = {
      [env](ExperimentConfig& c, const std::string&, const std::string& v) {
        env(c).spawn = parse_spawn_mode(v);
      },
      [cenv](const ExperimentConfig& c) { return spawn_mode_name(cenv(c).spawn); }};
  m[prefix + "noise_fraction"] = {
      [env](ExperimentConfig& c, const std::string& k, const std::string& v) {
        env(c).noise_fraction = parse_double(k, v);
      },
      [cenv](const ExperimentConfig& c) { return fmt(cenv(c).noise_fraction); }};
  m[prefix + "rotate_view"] = {
      [env](ExperimentConfig& c, const std::string& k, const std::string& v) {
        env(c).rotate_view = parse_bool(k, v);
      },
      [cenv](const ExperimentConfig& c) { return fmt(cenv(c).rotate_view); }};
}

const FieldMap& fields() {
  static const FieldMap m = [] {
    FieldMap m;
    m["experiment"] = {
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.kind = parse_experiment_kind(v);
        },
        [](const ExperimentConfig& c) { return experiment_kind_name(c.kind); }};
    m["variant"] = {
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.train.variant = parse_variant(v);
        },
        [](const ExperimentConfig& c) { return variant_name(c.train.variant); }};
    m["seeds"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.seeds.clear();
          for (const std::string& w : split_words(v)) c.seeds.push_back(parse_uint64(k, w));
        },
        [](const ExperimentConfig& c) {
          std::string s;
          for (std::uint64_t seed : c.seeds) s += (s.empty() ? "" : " ") + std::to_string(seed);
          return s;
        }};
    m["out_dir"] = {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
                    [](const ExperimentConfig& c) { return c.out_dir; }};
    m["window"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                     c.window = parse_int(k, v);
                   },
                   [](const ExperimentConfig& c) { return fmt_int(c.window); }};
    m["eval_episodes"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                            c.eval_episodes = parse_int(k, v);
                          },
                          [](const ExperimentConfig& c) { return fmt_int(c.eval_episodes); }};
    m["finetune_steps"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                             c.finetune_steps = parse_int64(k, v);
                           },
                           [](const ExperimentConfig& c) { return fmt_int(c.finetune_steps); }};
    m["transfer_modes"] = {
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.transfer_modes.clear();
          for (const std::string& w : split_words(v)) c.transfer_modes.push_back(parse_transfer_mode(w));
        },
        [](const ExperimentConfig& c) {
          std::string s;
          for (TransferMode t : c.transfer_modes) s += (s.empty() ? "" : " ") + transfer_mode_name(t);
          return s;
        }};
    m["success_threshold"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                                c.success_threshold = parse_double(k, v);
                              },
                              [](const ExperimentConfig& c) { return fmt(c.success_threshold); }};
    m["gradcheck_seeds"] = {[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                              c.gradcheck_seeds = parse_int(k, v);
                            },
                            [](const ExperimentConfig& c) { return fmt_int(c.gradcheck_seeds); }};
    add_env_fields(m, "env.", &ExperimentConfig::env);
    add_env_fields(m, "target.", &ExperimentConfig::target_env);

#define CURIO_TRAIN_FIELD(name, parser, printer)                                      \
  m["train." #name] = {[](ExperimentConfig& c, const std::string& k,                  \
                          const std::string& v) { c.train.name = parser(k, v); },     \
                       [](const ExperimentConfig& c) { return printer(c.train.name); }};
    CURIO_TRAIN_FIELD(gamma, parse_double, fmt)
    CURIO_TRAIN_FIELD(entropy_coef, parse_double, fmt)
    CURIO_TRAIN_FIELD(value_coef, parse_double, fmt)
    CURIO_TRAIN_FIELD(lambda, parse_double, fmt)
    CURIO_TRAIN_FIELD(beta, parse_double, fmt)
    CURIO_TRAIN_FIELD(learning_rate, parse_double, fmt)
    CURIO_TRAIN_FIELD(rollout_length, parse_int, fmt_int)
    CURIO_TRAIN_FIELD(num_envs, parse_int, fmt_int)
    CURIO_TRAIN_FIELD(total_steps, parse_int64, fmt_int)
    CURIO_TRAIN_FIELD(grad_clip, parse_double, fmt)
    CURIO_TRAIN_FIELD(eta, parse_double, fmt)
    CURIO_TRAIN_FIELD(eta_pixels, parse_double, fmt)
    CURIO_TRAIN_FIELD(normalize_intrinsic, parse_bool, fmt)
    CURIO_TRAIN_FIELD(forward_loss_trains_encoder, parse_bool, fmt)
    CURIO_TRAIN_FIELD(use_extrinsic, parse_bool, fmt)
#undef CURIO_TRAIN_FIELD
    m["train.random_reward.kind"] = {
        [](ExperimentConfig& c, const std::string&, const std::string& v) {
          c.train.random_reward.kind = parse_noise_kind(v);
        },
        [](const ExperimentConfig& c) {
          return std::string(noise_kind_name(c.train.random_reward.kind));
        }};
    m["train.random_reward.loc"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.train.random_reward.loc = parse_double(k, v);
        },
        [](const ExperimentConfig& c) { return fmt(c.train.random_reward.loc); }};
    m["train.random_reward.scale"] = {
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.train.random_reward.scale = parse_double(k, v);
        },
        [](const ExperimentConfig& c) { return fmt(c.train.random_reward.scale); }};
    return m;
  }();
  return m;
}

void validate_env(const EnvConfig& e, const std::string& slot) {
  if (e.action_repeat < 1) throw ConfigError(slot + "action_repeat must be >= 1");
  if (e.noise_fraction < 0.0 || e.noise_fraction >= 1.0) {
    throw ConfigError(slot + "noise_fraction must be in [0,1)");
  }
  if (e.kind == EnvKind::kMaze) {
    if (!e.map_file.empty() && !std::filesystem::exists(e.map_file)) {
      throw ConfigError(slot + "map_file '" + e.map_file + "' does not exist");
    }
    validate_maze_spec(maze_spec_for(e));
  } else {
    scroller_level(e.level);
    if (e.scroller_cap < 1) throw ConfigError(slot + "scroller_cap must be >= 1");
  }
}

}  // namespace

void validate_experiment_config(const ExperimentConfig& c) {
  validate_train_config(c.train);
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.window < 1) throw ConfigError("window must be >= 1");
  if (c.eval_episodes < 0) throw ConfigError("eval_episodes must be >= 0");
  if (c.gradcheck_seeds < 1) throw ConfigError("gradcheck_seeds must be >= 1");
  if (c.kind == ExperimentKind::kGradcheck) return;
  validate_env(c.env, "env.");
  if (c.kind == ExperimentKind::kTransfer) {
    validate_env(c.target_env, "target.");
    if (env_action_count(c.env) != env_action_count(c.target_env)) {
      throw ConfigError("transfer: source and target action spaces differ");
    }
    if (c.finetune_steps < 0) throw ConfigError("finetune_steps must be >= 0");
    if (c.transfer_modes.empty()) throw ConfigError("transfer_modes must not be empty");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  ExperimentConfig c;
  for (const KeyValue& kv : parse_key_values(text)) {
    auto it = fields().find(kv.key);
    if (it == fields().end()) {
      throw ConfigError("unknown config key '" + kv.key + "' on line " + std::to_string(kv.line));
    }
    it->second.set(c, kv.key, kv.value);
  }
  validate_experiment_config(c);
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_text_file(path));
}

std::string experiment_config_to_text(const ExperimentConfig& c) {
  std::string out;
  for (const auto& [key, field] : fields()) out += key + " = " + field.get(c) + "\n";
  return out;
}

MazeSpec maze_spec_for(const EnvConfig& e) {
  MazeSpec spec = e.map_file.empty()
                      ? make_maze_spec(e.room_rows, e.room_cols, e.room_size, e.episode_cap,
                                       e.texture_seed)
                      : maze_spec_from_text(read_text_file(e.map_file));
  spec.rotate_view = e.rotate_view;
  return spec;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& e) {
  std::unique_ptr<Environment> env;
  if (e.kind == EnvKind::kMaze) {
    env = std::make_unique<MazeEnv>(maze_spec_for(e), e.spawn);
  } else {
    ScrollerSpec spec = scroller_level(e.level);
    spec.episode_cap = e.scroller_cap;
    env = std::make_unique<ScrollerEnv>(spec);
  }
  if (e.noise_fraction > 0.0) env = std::make_unique<NoiseWrapper>(std::move(env), e.noise_fraction);
  if (e.action_repeat > 1) env = std::make_unique<ActionRepeat>(std::move(env), e.action_repeat);
  return env;
}

int env_action_count(const EnvConfig& e) {
  return e.kind == EnvKind::kMaze ? kMazeActions : kScrollerActions;
}

int env_track_length(const EnvConfig& e) {
  return e.kind == EnvKind::kScroller ? scroller_level(e.level).track_length : 0;
}

ModelSpec model_spec_for(const EnvConfig& e, Variant variant) {
  ModelSpec spec;
  spec.actions = env_action_count(e);
  spec.icm = icm_kind_for(variant);
  return spec;
}

}  // namespace curio
