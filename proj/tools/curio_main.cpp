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

// Command-line front end: train, eval, coverage, transfer, gradcheck and
// show-config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "curio/errors.hpp"
#include "curio/harness.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kDivergence = 3, kCheckFailed = 4 };

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string variant;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "experiment config file");
  app->add_option("--seed", c.seed, "run a single seed instead of the configured list");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--variant", c.variant, "vanilla, icm, icm-pixels or random-reward");
}

curio::ExperimentConfig resolve(const Common& c, const std::string& fallback_text = {}) {
  curio::ExperimentConfig cfg;
  if (!c.config_path.empty()) {
    cfg = curio::load_experiment_config(c.config_path);
  } else if (!fallback_text.empty()) {
    cfg = curio::parse_experiment_config(fallback_text);
  }
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.out_dir = c.out;
  if (!c.variant.empty()) cfg.train.variant = curio::parse_variant(c.variant);
  curio::validate_experiment_config(cfg);
  return cfg;
}

std::ofstream open_in(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(std::filesystem::path(dir) / name);
  if (!out) throw curio::ConfigError("cannot write " + name + " in " + dir);
  return out;
}

int cmd_train(const Common& c) {
  const curio::ExperimentConfig cfg = resolve(c);
  const auto outcomes = curio::run_experiment(cfg);
  bool diverged = false;
  for (const auto& o : outcomes) {
    if (o.diverged) {
      diverged = true;
      std::printf("seed %llu diverged: %s\n", static_cast<unsigned long long>(o.seed), o.failure.c_str());
    } else {
      const auto& last = o.metrics.empty() ? curio::MetricsRow{} : o.metrics.back();
      std::printf("seed %llu steps %lld episodes %lld success %.3f return %.3f\n",
                  static_cast<unsigned long long>(o.seed), static_cast<long long>(last.step),
                  static_cast<long long>(last.episodes), last.success_rate, last.mean_return);
    }
  }
  std::printf("wrote %s\n", cfg.out_dir.c_str());
  return diverged ? kDivergence : kOk;
}

curio::ParameterSet load_policy(const std::string& path, const curio::ExperimentConfig& cfg) {
  const curio::ParameterSet expected =
      curio::init_parameters(curio::model_spec_for(cfg.env, cfg.train.variant), 0);
  curio::Checkpoint ck = curio::load_checkpoint(path);
  const int actions = ck.params.at("policy/logits/b").shape[0];
  if (actions != curio::env_action_count(cfg.env)) {
    throw curio::ConfigError("checkpoint has " + std::to_string(actions) + " actions, environment has " +
                             std::to_string(curio::env_action_count(cfg.env)));
  }
  return curio::load_checkpoint(path, &expected).params;
}

// Falls back to the config echoed inside the checkpoint.
curio::ExperimentConfig eval_config(const Common& c, const std::string& checkpoint) {
  std::string echo;
  if (c.config_path.empty() && !checkpoint.empty()) echo = curio::load_checkpoint(checkpoint).config_text;
  return resolve(c, echo);
}

int cmd_eval(const Common& c, const std::string& checkpoint, int episodes) {
  const curio::ExperimentConfig cfg = eval_config(c, checkpoint);
  curio::ParameterSet params = load_policy(checkpoint, cfg);
  const curio::EvalStats s = curio::evaluate_policy(&params, cfg.env, episodes, cfg.seeds.front());
  std::printf("episodes %d success_rate %.4f mean_return %.4f mean_length %.2f\n", s.episodes, s.success_rate,
              s.mean_return, s.mean_length);
  return kOk;
}

int cmd_coverage(const Common& c, const std::string& checkpoint, bool random, int episodes) {
  if (random == !checkpoint.empty()) throw CLI::ValidationError("coverage", "give exactly one of --checkpoint or --random");
  const curio::ExperimentConfig cfg = eval_config(c, checkpoint);
  std::optional<curio::ParameterSet> params;
  if (!random) params = load_policy(checkpoint, cfg);
  const curio::CoverageStats s =
      curio::coverage_eval(params ? &*params : nullptr, cfg.env, episodes, cfg.seeds.front());
  std::printf("%s rooms_visited %.3f +- %.3f over %d episodes\n", random ? "random" : "policy", s.mean.mean,
              s.mean.stderr_, static_cast<int>(s.rooms.size()));
  if (!cfg.out_dir.empty()) {
    std::ofstream rooms = open_in(cfg.out_dir, "coverage.csv");
    rooms << "episode,rooms\n";
    for (std::size_t i = 0; i < s.rooms.size(); ++i) rooms << i << "," << s.rooms[i] << "\n";
    std::ofstream heat = open_in(cfg.out_dir, "heatmap.csv");
    curio::write_heatmap_csv(heat, s);
  }
  return kOk;
}

int cmd_transfer(const Common& c) {
  const curio::ExperimentConfig cfg = resolve(c);
  const curio::TransferResult r = curio::transfer_experiment(cfg);
  for (const auto& run : r.runs) {
    std::printf("seed %llu %s updates %lld finetuned_to_threshold %lld scratch_to_threshold %lld eval_success %.3f\n",
                static_cast<unsigned long long>(run.seed), curio::transfer_mode_name(run.mode).c_str(),
                static_cast<long long>(run.updates), static_cast<long long>(run.finetuned_steps_to_threshold),
                static_cast<long long>(run.scratch_steps_to_threshold), run.eval.success_rate);
  }
  curio::write_table_csv(std::cout, r.table);
  return kOk;
}

int cmd_gradcheck(const Common& c) {
  const curio::ExperimentConfig cfg = resolve(c);
  bool ok = true;
  for (const auto& r : curio::run_gradcheck(cfg.gradcheck_seeds)) {
    std::printf("%-13s seed %2llu checked %3d max_rel %.2e %s\n", r.name.c_str(),
                static_cast<unsigned long long>(r.seed), r.checked, r.max_rel_error, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curio: curiosity-driven exploration experiments"};
  app.require_subcommand(1);
  Common common;
  std::string checkpoint;
  int episodes = 100;
  bool random = false;

  auto* train = app.add_subcommand("train", "train every configured seed");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint without action repeat");
  auto* coverage = app.add_subcommand("coverage", "rooms visited without reward");
  auto* transfer = app.add_subcommand("transfer", "pretrain with curiosity, then transfer");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  auto* show = app.add_subcommand("show-config", "print the effective configuration");
  for (CLI::App* sub : {train, eval, coverage, transfer, gradcheck, show}) add_common(sub, common);
  for (CLI::App* sub : {eval, coverage}) {
    sub->add_option("--checkpoint", checkpoint, "checkpoint file");
    sub->add_option("--episodes", episodes, "number of episodes")->check(CLI::NonNegativeNumber);
  }
  eval->get_option("--checkpoint")->required();
  coverage->add_flag("--random", random, "use a uniformly random agent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, checkpoint, episodes);
    if (*coverage) return cmd_coverage(common, checkpoint, random, episodes);
    if (*transfer) return cmd_transfer(common);
    if (*gradcheck) return cmd_gradcheck(common);
    if (*show) {
      std::cout << curio::experiment_config_to_text(resolve(common));
      return kOk;
    }
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const curio::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return kDivergence;
  } catch (const curio::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  }
  return kUsage;
}
