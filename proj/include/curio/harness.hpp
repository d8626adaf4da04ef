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

// Experiment plumbing: configs, metrics CSVs, checkpoints and the drivers
// for training, evaluation, coverage and transfer runs.

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "curio/agent.hpp"
#include "curio/envs.hpp"
#include "curio/nn.hpp"
#include "curio/optim.hpp"

namespace curio {

enum class ExperimentKind {
  kSparseSuite,
  kNoiseRobustness,
  kNoRewardCoverage,
  kTransfer,
  kScrollerNoReward,
  kGradcheck,
};

ExperimentKind parse_experiment_kind(const std::string& name);
std::string experiment_kind_name(ExperimentKind kind);

enum class EnvKind { kMaze, kScroller };

struct EnvConfig {
  EnvKind kind = EnvKind::kMaze;
  // maze
  int room_rows = 3;
  int room_cols = 3;
  int room_size = 8;
  int episode_cap = 500;
  std::uint64_t texture_seed = 1;
  std::string map_file;  // overrides the generated layout when set
  SpawnMode spawn = SpawnMode::kSparse;
  double noise_fraction = 0.0;
  bool rotate_view = false;
  // scroller
  int level = 1;
  int scroller_cap = 600;
  // both
  int action_repeat = 1;
};

enum class TransferMode { kAsIs, kFinetuneCuriosity, kFinetuneExtrinsic };
TransferMode parse_transfer_mode(const std::string& name);
std::string transfer_mode_name(TransferMode mode);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSparseSuite;
  EnvConfig env;
  TrainConfig train;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "runs/default";
  /// Episodes in the trailing success/coverage window.
  int window = 100;
  int eval_episodes = 100;
  // transfer
  EnvConfig target_env;
  std::int64_t finetune_steps = 200000;
  std::vector<TransferMode> transfer_modes = {TransferMode::kAsIs, TransferMode::kFinetuneCuriosity,
                                              TransferMode::kFinetuneExtrinsic};
  double success_threshold = 0.5;
  // gradcheck
  int gradcheck_seeds = 10;
};

/// Parses `key = value` text on top of the defaults. Unknown keys, bad
/// values and missing map files are ConfigErrors.
ExperimentConfig parse_experiment_config(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);
/// Every key with its effective value; parses back to the same config.
std::string experiment_config_to_text(const ExperimentConfig& config);
void validate_experiment_config(const ExperimentConfig& config);

MazeSpec maze_spec_for(const EnvConfig& env);
std::unique_ptr<Environment> make_environment(const EnvConfig& env);
int env_action_count(const EnvConfig& env);
/// Track length for scrollers, 0 for mazes.
int env_track_length(const EnvConfig& env);
ModelSpec model_spec_for(const EnvConfig& env, Variant variant);

// --- metrics ------------------------------------------------------------------

inline constexpr int kMetricsSchemaVersion = 1;

/// One row per update. Missing values are NaN and are written as empty cells.
struct MetricsRow {
  std::int64_t update = 0;
  std::int64_t step = 0;
  std::int64_t episodes = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double mean_intrinsic = 0.0;
  double total_loss = 0.0;
  double policy_loss = 0.0;
  double inverse_loss = 0.0;
  double forward_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
  double rooms_visited = 0.0;
  double distance_mean = 0.0;
  double distance_max = 0.0;
};

/// Column names after the leading schema column.
const std::vector<std::string>& metrics_columns();
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Per-row mean and standard error across seeds, aligned by row index and
/// truncated to the shortest run.
void write_aggregate_csv(std::ostream& out, const std::vector<std::vector<MetricsRow>>& runs);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  int n = 0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

// --- checkpoints ----------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  ParameterSet params;
  std::int64_t adam_steps = 0;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  std::string rng_state;
  std::int64_t step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
std::vector<char> checkpoint_bytes(const Checkpoint& ckpt);
/// Throws CheckpointError: kCorruptCheckpoint for a bad magic or truncated
/// data, kUnsupportedVersion for other versions, kCheckpointShapeMismatch
/// when `expected` is given and names or shapes differ.
Checkpoint load_checkpoint(const std::string& path, const ParameterSet* expected = nullptr);
Checkpoint checkpoint_from_bytes(const std::vector<char>& bytes,
                                 const ParameterSet* expected = nullptr);

Checkpoint make_checkpoint(Trainer& trainer, const std::string& config_text);
/// FNV-1a over names, shapes and values.
std::uint64_t parameter_hash(const ParameterSet& params);

// --- drivers -------------------------------------------------------------------

struct TrainResult {
  std::vector<MetricsRow> metrics;
  ParameterSet params;
  Checkpoint checkpoint;
  bool diverged = false;
  std::string failure;
  std::vector<EpisodeRecord> episodes;
};

/// Called after every update; returning false stops the run early.
using UpdateCallback = std::function<bool(const MetricsRow&)>;

/// Trains one seed. `init` replaces the fresh initialization when given.
TrainResult train_seed(const ExperimentConfig& config, std::uint64_t seed,
                       const ParameterSet* init = nullptr, const UpdateCallback& on_update = {});

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool diverged = false;
  std::string failure;
  double final_success = 0.0;
  std::vector<MetricsRow> metrics;
};

/// Trains every seed, writing config.txt, metrics_seed<N>.csv,
/// checkpoint_seed<N>.bin, aggregate.csv and failures.txt under out_dir.
/// An empty out_dir keeps everything in memory.
std::vector<SeedOutcome> run_experiment(const ExperimentConfig& config);

struct EvalStats {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double mean_length = 0.0;
  std::vector<int> rooms;
  std::vector<int> distances;
};

/// Samples the stochastic policy with action repeat 1. A null policy acts
/// uniformly at random. Throws ConfigError on an action-count mismatch.
EvalStats evaluate_policy(ParameterSet* params, const EnvConfig& env, int episodes,
                          std::uint64_t seed);

struct CoverageStats {
  std::vector<int> rooms;
  MeanStderr mean;
  int width = 0;
  int height = 0;
  std::vector<std::int64_t> heatmap;  // [height * width] visit counts
  std::int64_t total_steps = 0;
};

CoverageStats coverage_eval(ParameterSet* params, const EnvConfig& env, int episodes,
                            std::uint64_t seed);
void write_heatmap_csv(std::ostream& out, const CoverageStats& stats);

struct TableRow {
  std::string mode;
  int level = 0;
  MeanStderr distance;  // percent of track
  double over25 = 0.0;
  double over50 = 0.0;
  double over75 = 0.0;
};

/// Table rows from per-episode distances on a track of the given length.
TableRow table_row(const std::string& mode, int level, const std::vector<int>& distances,
                   int track_length);
void write_table_csv(std::ostream& out, const std::vector<TableRow>& rows);

struct TransferRun {
  TransferMode mode = TransferMode::kAsIs;
  std::uint64_t seed = 0;
  std::vector<MetricsRow> finetuned;
  std::vector<MetricsRow> scratch;
  /// First env step at which the trailing success reached the threshold, or
  /// -1 when it never did.
  std::int64_t finetuned_steps_to_threshold = -1;
  std::int64_t scratch_steps_to_threshold = -1;
  std::uint64_t init_hash = 0;
  std::uint64_t checkpoint_hash = 0;
  std::int64_t updates = 0;
  EvalStats eval;
};

struct TransferResult {
  std::vector<TransferRun> runs;
  std::vector<TableRow> table;
};

/// Curiosity-only pretraining on config.env, then each transfer mode on
/// config.target_env for every seed.
TransferResult transfer_experiment(const ExperimentConfig& config);

std::int64_t steps_to_threshold(const std::vector<MetricsRow>& rows, double threshold);

// --- gradient checks --------------------------------------------------------------

struct GradcheckResult {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  int checked = 0;
  bool passed = false;
};

/// Central finite differences for L_I, L_F and the a2c loss on toy batches.
std::vector<GradcheckResult> run_gradcheck(int seeds, double rel_tol = 1e-3,
                                           double abs_floor = 1e-6);

}  // namespace curio
