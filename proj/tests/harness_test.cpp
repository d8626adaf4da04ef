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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curio/errors.hpp"
#include "curio/harness.hpp"

namespace curio {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("curio_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// A tiny maze and short run so training tests finish in seconds.
ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.env.room_rows = 1;
  c.env.room_cols = 2;
  c.env.room_size = 3;
  c.env.episode_cap = 40;
  c.env.spawn = SpawnMode::kDense;
  c.train.num_envs = 2;
  c.train.rollout_length = 5;
  c.train.total_steps = 40;
  c.seeds = {3, 4};
  c.out_dir = "";
  c.window = 10;
  return c;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kContract;
}

// --- config -------------------------------------------------------------------

TEST(Config, DefaultsMatchTrainingConstants) {
  const ExperimentConfig c = parse_experiment_config("");
  EXPECT_DOUBLE_EQ(c.train.beta, 0.2);
  EXPECT_DOUBLE_EQ(c.train.lambda, 0.1);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-3);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(c.window, 100);
}

TEST(Config, TextRoundTripIsStable) {
  ExperimentConfig c = parse_experiment_config(
      "# comment\nexperiment = transfer\nvariant = icm-pixels\nseeds = 7 9\n"
      "env.room_size = 4\ntarget.texture_seed = 99\ntrain.eta = 0.1\ntransfer_modes = as-is\n"
      "train.random_reward.kind = laplacian\nenv.noise_fraction = 0.4\n");
  EXPECT_EQ(c.kind, ExperimentKind::kTransfer);
  EXPECT_EQ(c.train.variant, Variant::kIcmPixels);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7, 9}));
  EXPECT_EQ(c.target_env.texture_seed, 99u);
  EXPECT_DOUBLE_EQ(c.env.noise_fraction, 0.4);
  const std::string text = experiment_config_to_text(c);
  EXPECT_EQ(experiment_config_to_text(parse_experiment_config(text)), text);
}

TEST(Config, ErrorsAreConfigErrors) {
  for (const char* bad : {"nonsense = 1\n", "seeds =\n", "train.beta = 1.5\n", "variant = ppo\n",
                          "env.map_file = /no/such/file\n", "env.kind = scroller\nenv.level = 9\n",
                          "train.lambda = abc\n", "experiment = transfer\ntarget.kind = scroller\n"}) {
    EXPECT_EQ(kind_of([&] { parse_experiment_config(bad); }), ErrorKind::kConfig) << bad;
  }
}

TEST(Config, MapFileIsLoaded) {
  const fs::path dir = temp_dir("map");
  MazeSpec spec = make_maze_spec(2, 2, 3, 77, 5);
  std::ofstream(dir / "map.txt") << maze_spec_to_text(spec);
  const ExperimentConfig c = parse_experiment_config("env.map_file = " + (dir / "map.txt").string() + "\n");
  EXPECT_EQ(maze_spec_for(c.env).episode_cap, 77);
  EXPECT_EQ(maze_spec_for(c.env).room_rows, 2);
}

// --- metrics --------------------------------------------------------------------

MetricsRow row(std::int64_t u, double success, double rooms) {
  MetricsRow r;
  r.update = u;
  r.step = 10 * u;
  r.episodes = u;
  r.success_rate = success;
  r.mean_return = success / 3.0;
  r.rooms_visited = rooms;
  r.distance_mean = std::nan("");
  r.distance_max = std::nan("");
  return r;
}

TEST(Metrics, CsvRoundTripKeepsValuesAndEmptyCells) {
  std::vector<MetricsRow> rows = {row(1, 0.1, 2.0), row(2, 1.0 / 3.0, 2.5)};
  std::stringstream s;
  write_metrics_csv(s, rows);
  const std::string text = s.str();
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "schema,update,step,episodes,mean_return,success_rate,mean_intrinsic,total_loss,policy_loss,"
            "inverse_loss,forward_loss,entropy,grad_norm,rooms_visited,distance_mean,distance_max");
  EXPECT_NE(text.find(",,\n"), std::string::npos);  // distance cells left empty
  const auto back = read_metrics_csv(s);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].success_rate, 1.0 / 3.0);
  EXPECT_EQ(back[1].step, 20);
  EXPECT_TRUE(std::isnan(back[0].distance_mean));
}

TEST(Metrics, WrongSchemaVersionIsRejected) {
  std::stringstream s;
  write_metrics_csv(s, {row(1, 0.0, 1.0)});
  std::string text = s.str();
  text.replace(text.find("\n1,") + 1, 1, "2");
  std::stringstream in(text);
  EXPECT_THROW(read_metrics_csv(in), ConfigError);
}

TEST(Metrics, MeanStderrMatchesHandComputation) {
  const MeanStderr m = mean_stderr({1.0, 2.0, 4.0});
  EXPECT_NEAR(m.mean, 7.0 / 3.0, 1e-12);
  // sample sd = sqrt(((4/3)^2 + (1/3)^2 + (5/3)^2) / 2) = sqrt(7/3)
  EXPECT_NEAR(m.stderr_, std::sqrt(7.0 / 3.0) / std::sqrt(3.0), 1e-12);
}

// Aggregate written from per-seed runs must be recomputable from them.
TEST(Metrics, AggregateMatchesRecomputation) {
  std::vector<std::vector<MetricsRow>> runs = {
      {row(1, 0.0, 1.0), row(2, 0.5, 2.0), row(3, 0.7, 3.0)},
      {row(1, 0.2, 1.5), row(2, 0.1, 4.0)},
      {row(1, 0.9, 1.0), row(2, 0.3, 2.0), row(3, 0.1, 1.0)},
  };
  std::stringstream s;
  write_aggregate_csv(s, runs);
  std::string line;
  std::getline(s, line);
  int n = 0;
  while (std::getline(s, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    // columns: schema, update, step, seeds, mean_return mean/stderr, success mean/stderr
    const double mean = std::stod(cells[6]);
    const double se = std::stod(cells[7]);
    std::vector<double> xs;
    for (const auto& r : runs) xs.push_back(r[n].success_rate);
    double mu = 0.0;
    for (double x : xs) mu += x;
    mu /= 3.0;
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    EXPECT_NEAR(mean, mu, 1e-9);
    EXPECT_NEAR(se, std::sqrt(ss / 2.0) / std::sqrt(3.0), 1e-9);
    ++n;
  }
  EXPECT_EQ(n, 2);  // truncated to the shortest run
}

// --- checkpoints --------------------------------------------------------------------

Checkpoint trained_checkpoint() {
  ExperimentConfig c = tiny_config();
  return train_seed(c, 11).checkpoint;
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const fs::path dir = temp_dir("ckpt");
  const Checkpoint ck = trained_checkpoint();
  EXPECT_GT(ck.adam_steps, 0);
  save_checkpoint((dir / "a.bin").string(), ck);
  const Checkpoint back = load_checkpoint((dir / "a.bin").string());
  save_checkpoint((dir / "b.bin").string(), back);
  std::ifstream a(dir / "a.bin", std::ios::binary), b(dir / "b.bin", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
  EXPECT_EQ(sa.substr(0, 6), "CURIO1");
  EXPECT_EQ(parameter_hash(back.params), parameter_hash(ck.params));
  EXPECT_EQ(back.config_text, ck.config_text);
  EXPECT_EQ(back.rng_state, ck.rng_state);
  EXPECT_EQ(back.step, ck.step);
}

TEST(Checkpoint, DistinctErrorKinds) {
  const std::vector<char> good = checkpoint_bytes(trained_checkpoint());

  std::vector<char> truncated(good.begin(), good.end() - 9);
  EXPECT_EQ(kind_of([&] { checkpoint_from_bytes(truncated); }), ErrorKind::kCorruptCheckpoint);

  std::vector<char> magic = good;
  magic[0] = 'X';
  EXPECT_EQ(kind_of([&] { checkpoint_from_bytes(magic); }), ErrorKind::kCorruptCheckpoint);

  std::vector<char> version = good;
  version[6] = 2;  // little-endian u32 after the magic
  EXPECT_EQ(kind_of([&] { checkpoint_from_bytes(version); }), ErrorKind::kUnsupportedVersion);

  ModelSpec other;
  other.actions = kScrollerActions;
  const ParameterSet expected = init_parameters(other, 1);
  EXPECT_EQ(kind_of([&] { checkpoint_from_bytes(good, &expected); }), ErrorKind::kCheckpointShapeMismatch);
  ModelSpec same;
  const ParameterSet ok = init_parameters(same, 1);
  EXPECT_NO_THROW(checkpoint_from_bytes(good, &ok));
}

// --- drivers -------------------------------------------------------------------------

TEST(Train, FixedSeedRunsAreBitIdentical) {
  ExperimentConfig c = tiny_config();
  const TrainResult a = train_seed(c, 5);
  const TrainResult b = train_seed(c, 5);
  std::stringstream sa, sb;
  write_metrics_csv(sa, a.metrics);
  write_metrics_csv(sb, b.metrics);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(checkpoint_bytes(a.checkpoint), checkpoint_bytes(b.checkpoint));
}

TEST(Train, StepsAreMonotone) {
  const TrainResult r = train_seed(tiny_config(), 6);
  ASSERT_EQ(r.metrics.size(), 4u);
  for (std::size_t i = 1; i < r.metrics.size(); ++i) EXPECT_GT(r.metrics[i].step, r.metrics[i - 1].step);
  EXPECT_EQ(r.metrics.back().step, 40);
}

TEST(Train, FinetuneStartsFromGivenParameters) {
  const Checkpoint ck = trained_checkpoint();
  ExperimentConfig frozen = tiny_config();
  frozen.train.total_steps = 0;
  const TrainResult r = train_seed(frozen, 1, &ck.params);
  EXPECT_EQ(parameter_hash(r.params), parameter_hash(ck.params));
  EXPECT_TRUE(r.metrics.empty());
}

TEST(Train, RunExperimentWritesRunDirectory) {
  const fs::path dir = temp_dir("run");
  ExperimentConfig c = tiny_config();
  c.out_dir = dir.string();
  const auto outcomes = run_experiment(c);
  ASSERT_EQ(outcomes.size(), 2u);
  for (const char* f : {"config.txt", "metrics_seed3.csv", "metrics_seed4.csv", "checkpoint_seed3.bin",
                        "checkpoint_seed4.bin", "aggregate.csv", "failures.txt"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  // The echoed config re-runs to the same metrics.
  ExperimentConfig again = load_experiment_config((dir / "config.txt").string());
  again.out_dir = "";
  const auto rerun = run_experiment(again);
  std::ifstream m(dir / "metrics_seed3.csv");
  const auto written = read_metrics_csv(m);
  ASSERT_EQ(written.size(), rerun[0].metrics.size());
  for (std::size_t i = 0; i < written.size(); ++i) {
    EXPECT_EQ(written[i].total_loss, rerun[0].metrics[i].total_loss);
  }
}

TEST(Eval, ZeroEpisodesIsEmpty) {
  const EvalStats s = evaluate_policy(nullptr, tiny_config().env, 0, 1);
  EXPECT_EQ(s.episodes, 0);
  EXPECT_TRUE(s.rooms.empty());
}

TEST(Eval, DeterministicAcrossCalls) {
  ParameterSet p = init_parameters(ModelSpec{}, 2);
  const EvalStats a = evaluate_policy(&p, tiny_config().env, 3, 9);
  const EvalStats b = evaluate_policy(&p, tiny_config().env, 3, 9);
  EXPECT_EQ(a.episodes, 3);
  EXPECT_EQ(a.mean_length, b.mean_length);
  EXPECT_EQ(a.rooms, b.rooms);
}

TEST(Eval, ActionCountMismatchIsConfigError) {
  ModelSpec spec;
  spec.actions = kScrollerActions;
  ParameterSet p = init_parameters(spec, 2);
  EXPECT_THROW(evaluate_policy(&p, tiny_config().env, 1, 1), ConfigError);
}

TEST(Eval, ActionRepeatIsDisabled) {
  EnvConfig env = tiny_config().env;
  env.action_repeat = 4;
  env.spawn = SpawnMode::kSparse;
  env.episode_cap = 400;
  const EvalStats s = evaluate_policy(nullptr, env, 4, 1);
  // Under repeat 4 no episode could last more than 100 agent steps.
  EXPECT_GT(s.mean_length, 100.0);
}

TEST(Coverage, HeatmapSumsToStepsTaken) {
  const CoverageStats s = coverage_eval(nullptr, tiny_config().env, 5, 3);
  std::int64_t sum = 0;
  for (auto v : s.heatmap) sum += v;
  EXPECT_EQ(sum, s.total_steps);
  EXPECT_EQ(s.rooms.size(), 5u);
  for (int r : s.rooms) EXPECT_GE(r, 1);
  std::stringstream out;
  write_heatmap_csv(out, s);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), s.height);
}

TEST(Table, RowUsesPercentOfTrack) {
  const TableRow r = table_row("as-is", 2, {10, 20, 50, 70}, 100);
  EXPECT_NEAR(r.distance.mean, 37.5, 1e-12);
  EXPECT_NEAR(r.over25, 50.0, 1e-12);
  EXPECT_NEAR(r.over50, 25.0, 1e-12);
  EXPECT_NEAR(r.over75, 0.0, 1e-12);
  std::stringstream s;
  write_table_csv(s, {r});
  EXPECT_EQ(s.str().substr(0, s.str().find('\n')),
            "mode,level,distance_mean_pct,distance_stderr_pct,pct_over_25,pct_over_50,pct_over_75");
}

TEST(Transfer, AsIsPerformsNoUpdatesAndStartsFromCheckpoint) {
  ExperimentConfig c = tiny_config();
  c.kind = ExperimentKind::kTransfer;
  c.seeds = {2};
  c.target_env = c.env;
  c.target_env.texture_seed = 42;
  c.finetune_steps = 20;
  c.eval_episodes = 2;
  const TransferResult r = transfer_experiment(c);
  ASSERT_EQ(r.runs.size(), 3u);
  for (const TransferRun& run : r.runs) {
    EXPECT_EQ(run.init_hash, run.checkpoint_hash);
    if (run.mode == TransferMode::kAsIs) {
      EXPECT_EQ(run.updates, 0);
      EXPECT_TRUE(run.finetuned.empty());
    } else {
      EXPECT_EQ(run.updates, 2);
      EXPECT_EQ(run.scratch.size(), 2u);
    }
  }
}

TEST(Transfer, ScrollerTargetEmitsTableRows) {
  ExperimentConfig c = tiny_config();
  c.kind = ExperimentKind::kTransfer;
  c.seeds = {2};
  c.env = EnvConfig{};
  c.env.kind = EnvKind::kScroller;
  c.env.scroller_cap = 30;
  c.target_env = c.env;
  c.target_env.level = 2;
  c.finetune_steps = 10;
  c.eval_episodes = 2;
  c.transfer_modes = {TransferMode::kAsIs, TransferMode::kFinetuneCuriosity};
  const TransferResult r = transfer_experiment(c);
  ASSERT_EQ(r.table.size(), 3u);  // as-is, finetune-curiosity, scratch-curiosity
  for (const TableRow& row : r.table) {
    EXPECT_EQ(row.level, 2);
    EXPECT_GE(row.distance.mean, 0.0);
  }
}

TEST(Transfer, MismatchedActionSpacesAreConfigError) {
  ExperimentConfig c = tiny_config();
  c.kind = ExperimentKind::kTransfer;
  c.target_env.kind = EnvKind::kScroller;
  EXPECT_THROW(transfer_experiment(c), ConfigError);
}

TEST(Gradcheck, AllSuitesPassOnTwoSeeds) {
  const auto results = run_gradcheck(2);
  ASSERT_EQ(results.size(), 6u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.passed) << r.name << " seed " << r.seed << " max rel " << r.max_rel_error;
    EXPECT_GT(r.checked, 0);
  }
}

TEST(StepsToThreshold, FirstQualifyingRow) {
  std::vector<MetricsRow> rows = {row(1, 0.9, 1), row(12, 0.4, 1), row(13, 0.6, 1), row(14, 0.8, 1)};
  EXPECT_EQ(steps_to_threshold(rows, 0.5), 130);  // row 1 has fewer than 10 episodes
  EXPECT_EQ(steps_to_threshold(rows, 0.95), -1);
}

}  // namespace
}  // namespace curio
