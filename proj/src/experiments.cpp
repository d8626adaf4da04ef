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

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "curio/errors.hpp"
#include "curio/harness.hpp"

namespace curio {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_no_reward(ExperimentKind k) {
  return k == ExperimentKind::kNoRewardCoverage || k == ExperimentKind::kScrollerNoReward;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  return out;
}

// Trailing window over finished training episodes.
class EpisodeWindow {
 public:
  explicit EpisodeWindow(int size) : size_(size) {}
  void push(const EpisodeRecord& r) {
    items_.push_back(r);
    if (static_cast<int>(items_.size()) > size_) items_.pop_front();
  }
  template <typename F>
  double mean(F f) const {
    if (items_.empty()) return 0.0;
    double s = 0.0;
    for (const EpisodeRecord& r : items_) s += f(r);
    return s / static_cast<double>(items_.size());
  }
  double max_distance() const {
    double m = 0.0;
    for (const EpisodeRecord& r : items_) m = std::max(m, static_cast<double>(r.distance));
    return m;
  }

 private:
  int size_;
  std::deque<EpisodeRecord> items_;
};

}  // namespace

TrainResult train_seed(const ExperimentConfig& config, std::uint64_t seed, const ParameterSet* init,
                       const UpdateCallback& on_update) {
  TrainConfig tc = config.train;
  if (is_no_reward(config.kind)) tc.use_extrinsic = false;
  const EnvConfig env = config.env;
  ParameterSet params = init != nullptr
                            ? *init
                            : init_parameters(model_spec_for(env, tc.variant), mix_seed(seed, 0x1417));
  if (init != nullptr) params.zero_grad();
  Trainer trainer(tc, [&env](int) { return make_environment(env); }, std::move(params), seed);

  const bool maze = env.kind == EnvKind::kMaze;
  TrainResult res;
  EpisodeWindow window(config.window);
  std::size_t seen = 0;
  std::int64_t update = 0;
  try {
    while (trainer.steps() < tc.total_steps) {
      const UpdateStats st = trainer.update();
      ++update;
      const auto& eps = trainer.envs().episodes();
      for (; seen < eps.size(); ++seen) window.push(eps[seen]);
      MetricsRow row;
      row.update = update;
      row.step = trainer.steps();
      row.episodes = static_cast<std::int64_t>(eps.size());
      row.mean_return = window.mean([](const EpisodeRecord& r) { return r.extrinsic_return; });
      row.success_rate = window.mean([](const EpisodeRecord& r) { return r.success ? 1.0 : 0.0; });
      row.mean_intrinsic = st.mean_intrinsic;
      row.total_loss = st.total_loss;
      row.policy_loss = st.policy_loss;
      row.inverse_loss = st.inverse_loss;
      row.forward_loss = st.forward_loss;
      row.entropy = st.entropy;
      row.grad_norm = st.grad_norm;
      row.rooms_visited = maze ? window.mean([](const EpisodeRecord& r) { return double(r.rooms); }) : kNaN;
      row.distance_mean = maze ? kNaN : window.mean([](const EpisodeRecord& r) { return double(r.distance); });
      row.distance_max = maze ? kNaN : window.max_distance();
      res.metrics.push_back(row);
      if (on_update && !on_update(row)) break;
    }
  } catch (const DivergenceError& e) {
    res.diverged = true;
    res.failure = e.what();
  }
  res.episodes = trainer.envs().episodes();
  res.checkpoint = make_checkpoint(trainer, experiment_config_to_text(config));
  res.params = trainer.params();
  return res;
}

std::vector<SeedOutcome> run_experiment(const ExperimentConfig& config) {
  validate_experiment_config(config);
  namespace fs = std::filesystem;
  const bool write = !config.out_dir.empty();
  const fs::path dir(config.out_dir);
  if (write) {
    fs::create_directories(dir);
    open_out(dir / "config.txt") << experiment_config_to_text(config);
  }
  std::vector<SeedOutcome> outcomes;
  std::vector<std::vector<MetricsRow>> runs;
  std::string failures;
  for (std::uint64_t seed : config.seeds) {
    TrainResult r = train_seed(config, seed);
    SeedOutcome o;
    o.seed = seed;
    o.diverged = r.diverged;
    o.failure = r.failure;
    o.final_success = r.metrics.empty() ? 0.0 : r.metrics.back().success_rate;
    o.metrics = r.metrics;
    if (write) {
      const std::string tag = std::to_string(seed);
      std::ofstream m = open_out(dir / ("metrics_seed" + tag + ".csv"));
      write_metrics_csv(m, r.metrics);
      save_checkpoint((dir / ("checkpoint_seed" + tag + ".bin")).string(), r.checkpoint);
    }
    if (r.diverged) {
      failures += "seed " + std::to_string(seed) + ": " + r.failure + "\n";
    } else {
      runs.push_back(r.metrics);
    }
    outcomes.push_back(std::move(o));
  }
  if (write) {
    std::ofstream agg = open_out(dir / "aggregate.csv");
    write_aggregate_csv(agg, runs);
    open_out(dir / "failures.txt") << failures;
  }
  return outcomes;
}

namespace {

// Runs whole episodes with one environment and the stochastic policy (or
// uniform actions). `visit` sees each env before it acts.
template <typename Visit>
std::vector<EpisodeRecord> rollout_episodes(ParameterSet* params, const EnvConfig& env_config,
                                            int episodes, std::uint64_t seed, Visit visit) {
  EnvConfig e = env_config;
  e.action_repeat = 1;
  if (params != nullptr) {
    const int actions = params->at("policy/logits/b").shape[0];
    if (actions != env_action_count(e)) {
      throw ConfigError("policy has " + std::to_string(actions) + " actions, environment has " +
                        std::to_string(env_action_count(e)));
    }
  }
  std::vector<std::unique_ptr<Environment>> list;
  list.push_back(make_environment(e));
  VecEnv envs(std::move(list), mix_seed(seed, 0xe7a1));
  std::mt19937_64 rng(mix_seed(seed, 0xac7));
  std::uniform_int_distribution<int> uniform(0, envs.action_count() - 1);
  while (static_cast<int>(envs.episodes().size()) < episodes) {
    visit(envs.info(0));
    const int a = params != nullptr ? sample_action(*params, envs.observation(0), rng).action : uniform(rng);
    envs.step(0, a);
  }
  return envs.episodes();
}

}  // namespace

EvalStats evaluate_policy(ParameterSet* params, const EnvConfig& env, int episodes, std::uint64_t seed) {
  EvalStats s;
  const auto eps = rollout_episodes(params, env, episodes, seed, [](const EnvInfo&) {});
  s.episodes = static_cast<int>(eps.size());
  if (eps.empty()) return s;
  for (const EpisodeRecord& r : eps) {
    s.success_rate += r.success ? 1.0 : 0.0;
    s.mean_return += r.extrinsic_return;
    s.mean_length += r.length;
    s.rooms.push_back(r.rooms);
    s.distances.push_back(r.distance);
  }
  s.success_rate /= s.episodes;
  s.mean_return /= s.episodes;
  s.mean_length /= s.episodes;
  return s;
}

CoverageStats coverage_eval(ParameterSet* params, const EnvConfig& env, int episodes, std::uint64_t seed) {
  if (env.kind != EnvKind::kMaze) throw ConfigError("coverage_eval needs a maze environment");
  const MazeSpec spec = maze_spec_for(env);
  CoverageStats s;
  s.width = spec.grid_width();
  s.height = spec.grid_height();
  s.heatmap.assign(static_cast<std::size_t>(s.width) * s.height, 0);
  const auto eps = rollout_episodes(params, env, episodes, seed, [&](const EnvInfo& info) {
    ++s.heatmap[static_cast<std::size_t>(info.cell.y) * s.width + info.cell.x];
    ++s.total_steps;
  });
  std::vector<double> rooms;
  for (const EpisodeRecord& r : eps) {
    s.rooms.push_back(r.rooms);
    rooms.push_back(r.rooms);
  }
  s.mean = mean_stderr(rooms);
  return s;
}

void write_heatmap_csv(std::ostream& out, const CoverageStats& s) {
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) out << (x ? "," : "") << s.heatmap[static_cast<std::size_t>(y) * s.width + x];
    out << "\n";
  }
}

TableRow table_row(const std::string& mode, int level, const std::vector<int>& distances, int track_length) {
  TableRow row;
  row.mode = mode;
  row.level = level;
  std::vector<double> pct;
  for (int d : distances) pct.push_back(100.0 * d / track_length);
  row.distance = mean_stderr(pct);
  if (!pct.empty()) {
    for (double p : pct) {
      row.over25 += p > 25.0;
      row.over50 += p > 50.0;
      row.over75 += p > 75.0;
    }
    row.over25 *= 100.0 / pct.size();
    row.over50 *= 100.0 / pct.size();
    row.over75 *= 100.0 / pct.size();
  }
  return row;
}

void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows) {
  out << "mode,level,distance_mean_pct,distance_stderr_pct,pct_over_25,pct_over_50,pct_over_75\n";
  for (const TableRow& r : rows) {
    out << r.mode << "," << r.level << "," << r.distance.mean << "," << r.distance.stderr_ << "," << r.over25
        << "," << r.over50 << "," << r.over75 << "\n";
  }
}

std::int64_t steps_to_threshold(const std::vector<MetricsRow>& rows, double threshold) {
  for (const MetricsRow& r : rows) {
    if (r.episodes >= 10 && r.success_rate >= threshold) return r.step;
  }
  return -1;
}

TransferResult transfer_experiment(const ExperimentConfig& config) {
  validate_experiment_config(config);
  namespace fs = std::filesystem;
  const bool write = !config.out_dir.empty();
  const fs::path dir(config.out_dir);
  if (write) {
    fs::create_directories(dir);
    open_out(dir / "config.txt") << experiment_config_to_text(config);
  }
  TransferResult result;
  std::map<std::string, std::vector<int>> distances;  // table rows by label
  const bool scroller = config.target_env.kind == EnvKind::kScroller;

  for (std::uint64_t seed : config.seeds) {
    const std::string tag = std::to_string(seed);
    ExperimentConfig pre = config;
    pre.train.use_extrinsic = false;
    TrainResult pt = train_seed(pre, seed);
    if (pt.diverged) throw DivergenceError("pretraining seed " + tag + " diverged: " + pt.failure);
    const Checkpoint& ckpt = pt.checkpoint;
    if (write) {
      save_checkpoint((dir / ("pretrain_seed" + tag + ".bin")).string(), ckpt);
      std::ofstream m = open_out(dir / ("pretrain_seed" + tag + ".csv"));
      write_metrics_csv(m, pt.metrics);
    }

    std::map<bool, TrainResult> scratch;  // keyed by use_extrinsic
    for (TransferMode mode : config.transfer_modes) {
      TransferRun run;
      run.mode = mode;
      run.seed = seed;
      run.checkpoint_hash = parameter_hash(ckpt.params);
      ParameterSet init = ckpt.params;
      run.init_hash = parameter_hash(init);
      ExperimentConfig tgt = config;
      tgt.env = config.target_env;
      tgt.train.total_steps = config.finetune_steps;
      if (mode == TransferMode::kAsIs) {
        run.eval = evaluate_policy(&init, config.target_env, config.eval_episodes, seed);
      } else {
        tgt.train.use_extrinsic = mode == TransferMode::kFinetuneExtrinsic;
        TrainResult ft = train_seed(tgt, seed, &init);
        if (ft.diverged) throw DivergenceError("fine-tuning seed " + tag + " diverged: " + ft.failure);
        run.finetuned = ft.metrics;
        run.updates = static_cast<std::int64_t>(ft.metrics.size());
        run.eval = evaluate_policy(&ft.params, config.target_env, config.eval_episodes, seed);
        auto it = scratch.find(tgt.train.use_extrinsic);
        if (it == scratch.end()) {
          TrainResult sc = train_seed(tgt, seed);
          if (sc.diverged) throw DivergenceError("scratch seed " + tag + " diverged: " + sc.failure);
          it = scratch.emplace(tgt.train.use_extrinsic, std::move(sc)).first;
          if (scroller) {
            const EvalStats se = evaluate_policy(&it->second.params, config.target_env, config.eval_episodes, seed);
            auto& d = distances[tgt.train.use_extrinsic ? "scratch-extrinsic" : "scratch-curiosity"];
            d.insert(d.end(), se.distances.begin(), se.distances.end());
          }
        }
        run.scratch = it->second.metrics;
        run.finetuned_steps_to_threshold = steps_to_threshold(run.finetuned, config.success_threshold);
        run.scratch_steps_to_threshold = steps_to_threshold(run.scratch, config.success_threshold);
        if (write) {
          const std::string name = transfer_mode_name(mode);
          std::ofstream f = open_out(dir / ("finetuned_" + name + "_seed" + tag + ".csv"));
          write_metrics_csv(f, run.finetuned);
          std::ofstream s = open_out(dir / ("scratch_" + name + "_seed" + tag + ".csv"));
          write_metrics_csv(s, run.scratch);
        }
      }
      auto& d = distances[transfer_mode_name(mode)];
      d.insert(d.end(), run.eval.distances.begin(), run.eval.distances.end());
      result.runs.push_back(std::move(run));
    }
  }
  if (scroller) {
    for (const auto& [label, d] : distances) {
      result.table.push_back(table_row(label, config.target_env.level, d, env_track_length(config.target_env)));
    }
  }
  if (write) {
    std::ofstream t = open_out(dir / "table.csv");
    write_table_csv(t, result.table);
  }
  return result;
}

}  // namespace curio
