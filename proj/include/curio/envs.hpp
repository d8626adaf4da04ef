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

// Deterministic desk-scale environments: a textured multi-room maze seen
// from an egocentric top-down camera, a side-scrolling platformer, and the
// wrappers that turn single frames into stacked observations.

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace curio {

inline constexpr int kFramePixels = 42 * 42;

/// Stateless 64-bit mixer used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

enum class Heading { kNorth = 0, kEast = 1, kSouth = 2, kWest = 3 };

enum class MazeAction { kForward = 0, kLeft = 1, kRight = 2, kNoop = 3 };
inline constexpr int kMazeActions = 4;

enum class SpawnMode { kDense, kSparse, kVerySparse };
SpawnMode parse_spawn_mode(const std::string& name);
std::string spawn_mode_name(SpawnMode mode);

/// Rooms are room_size x room_size open cells on a grid separated by
/// one-cell walls; each corridor is a single open cell in the wall between
/// two adjacent rooms.
struct MazeSpec {
  int room_rows = 3;
  int room_cols = 3;
  int room_size = 8;
  std::vector<std::pair<int, int>> corridors;
  std::uint64_t texture_seed = 1;
  Cell goal;
  Cell sparse_spawn;
  Cell very_sparse_spawn;
  std::vector<Cell> dense_spawns;
  int episode_cap = 500;
  int cell_pixels = 3;
  /// Rotate the view so the heading points up; otherwise north stays up and
  /// the agent marker shows the heading.
  bool rotate_view = true;

  int grid_width() const { return room_cols * (room_size + 1) + 1; }
  int grid_height() const { return room_rows * (room_size + 1) + 1; }
  bool in_grid(Cell c) const;
  bool is_open(Cell c) const;
  /// Room index (row-major) or -1 for walls and corridors.
  int room_of(Cell c) const;
  /// Top-left interior cell of a room.
  Cell room_origin(int room) const;
  std::vector<Cell> corridor_cells() const;
};

/// Builds a maze with a serpentine corridor layout, the goal in the last
/// room, very-sparse spawn at the farthest cell from the goal and sparse
/// spawn at 270/350 of that distance, and 17 spread dense spawns.
MazeSpec make_maze_spec(int room_rows, int room_cols, int room_size, int episode_cap,
                        std::uint64_t texture_seed);

/// Throws ConfigError on inconsistent geometry or unreachable spawns.
void validate_maze_spec(const MazeSpec& spec);

/// Minimum number of actions (moves and turns) from (cell, any heading) to
/// the goal; -1 when unreachable.
int optimal_steps_to_goal(const MazeSpec& spec, Cell from);

std::string maze_spec_to_text(const MazeSpec& spec);
MazeSpec maze_spec_from_text(const std::string& text);

/// A single-frame environment. Observations are built by FrameStackEnv.
struct EnvInfo {
  Cell cell;
  Heading heading = Heading::kNorth;
  int room = -1;
  int step = 0;
  int distance = 0;  // scroller progress in cells
  bool success = false;
};

struct StepResult {
  float reward = 0.0f;
  bool done = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual int action_count() const = 0;
  virtual void reset(std::uint64_t seed) = 0;
  /// Throws ContractError when the episode is already done.
  virtual StepResult step(int action) = 0;
  virtual std::span<const float> frame() const = 0;
  virtual EnvInfo info() const = 0;
  virtual bool done() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

struct MazeState {
  Cell cell;
  Heading heading = Heading::kNorth;
  int step = 0;
  bool done = false;
  bool success = false;
};

struct RoomTexture {
  float base;
  float contrast;
  int pattern;
  float frequency;  // stripes per cell
};

/// Precomputed cell lookup for rendering one map.
class MazeRenderer {
 public:
  explicit MazeRenderer(const MazeSpec& spec);
  void render(const MazeState& state, std::span<float> frame) const;

 private:
  static constexpr int kKindWall = -1;
  static constexpr int kKindCorridor = -2;
  static constexpr int kKindGoal = -3;

  int width_;
  int height_;
  int cell_pixels_;
  bool rotate_view_;
  std::vector<int> kinds_;  // room index or one of the kinds above
  std::vector<RoomTexture> textures_;
};

/// Egocentric top-down 42x42 grayscale view, heading up.
void render_maze(const MazeSpec& spec, const MazeState& state, std::span<float> frame);

class MazeEnv : public Environment {
 public:
  MazeEnv(MazeSpec spec, SpawnMode mode);

  int action_count() const override { return kMazeActions; }
  void reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  std::span<const float> frame() const override { return frame_; }
  EnvInfo info() const override;
  bool done() const override { return state_.done; }
  std::unique_ptr<Environment> clone() const override;

  const MazeState& state() const { return state_; }
  const MazeSpec& spec() const { return spec_; }
  /// Places the agent directly (tests and tooling).
  void set_state(const MazeState& state);

 private:
  MazeSpec spec_;
  SpawnMode mode_;
  MazeState state_;
  std::vector<float> frame_;
  std::shared_ptr<const MazeRenderer> renderer_;
};

/// Overwrites a fixed region covering round(fraction * pixels) pixels of a
/// 42x42 frame with fresh uniform [0,1) noise. The region fills rows from
/// the bottom edge up, i.e. the area behind the agent in the egocentric
/// view. Returns the number of pixels replaced.
int apply_noise_patch(std::span<float> frame, std::mt19937_64& rng, double fraction = 0.4);

/// First flat index of the noise region for a given fraction.
int noise_patch_start(double fraction);

class NoiseWrapper : public Environment {
 public:
  NoiseWrapper(std::unique_ptr<Environment> inner, double fraction);
  int action_count() const override { return inner_->action_count(); }
  void reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  std::span<const float> frame() const override { return frame_; }
  EnvInfo info() const override { return inner_->info(); }
  bool done() const override { return inner_->done(); }
  std::unique_ptr<Environment> clone() const override;

 private:
  void refresh();

  std::unique_ptr<Environment> inner_;
  double fraction_;
  std::mt19937_64 rng_;
  std::vector<float> frame_;
};

/// Repeats each action k times (stopping early on done) and sums rewards.
class ActionRepeat : public Environment {
 public:
  ActionRepeat(std::unique_ptr<Environment> inner, int k);
  int action_count() const override { return inner_->action_count(); }
  void reset(std::uint64_t seed) override { inner_->reset(seed); }
  StepResult step(int action) override;
  std::span<const float> frame() const override { return inner_->frame(); }
  EnvInfo info() const override { return inner_->info(); }
  bool done() const override { return inner_->done(); }
  std::unique_ptr<Environment> clone() const override;

  int repeat() const { return k_; }

 private:
  std::unique_ptr<Environment> inner_;
  int k_;
};

/// Stacks the four most recent frames, oldest first, zero padded at the
/// start of an episode.
class FrameStack {
 public:
  void reset(std::span<const float> frame);
  void push(std::span<const float> frame);
  const std::vector<float>& observation() const { return obs_; }

 private:
  std::vector<float> obs_ = std::vector<float>(4 * kFramePixels, 0.0f);
};

// --- side scroller -------------------------------------------------------

enum class ScrollerAction {
  kLeft = 0,
  kRight = 1,
  kJump = 2,
  kNoop = 3,
  kRightJump = 4,
  kLeftJump = 5,
};
inline constexpr int kScrollerActions = 6;

struct Hazard {
  int left = 0;   // patrol range, inclusive
  int right = 0;
  int phase = 0;
};

struct ScrollerSpec {
  int level = 1;
  int track_length = 72;
  std::vector<int> gaps;   // cells without ground
  std::vector<int> walls;  // cells with a one-high block
  std::vector<Hazard> hazards;
  bool night = false;      // inverted palette
  int episode_cap = 600;   // ticks
  int spawn_x = 1;
  int cell_pixels = 3;

  /// -1 for a gap, otherwise the standing height of the cell.
  int terrain(int x) const;
  /// Patrol position of a hazard at a given tick.
  static int hazard_x(const Hazard& h, int tick);
};

/// Fixed level layouts 1..3. Throws ConfigError for any other level.
ScrollerSpec scroller_level(int level);

struct ScrollerState {
  int x = 1;
  int height = 0;
  int air = 0;   // remaining airborne ticks
  int dir = 0;   // horizontal direction of the current jump
  int base = 0;  // take-off height of the current jump
  int tick = 0;
  int best_x = 1;
  bool done = false;
  bool dead = false;
};

void render_scroller(const ScrollerSpec& spec, const ScrollerState& state,
                     std::span<float> frame);

class ScrollerEnv : public Environment {
 public:
  explicit ScrollerEnv(ScrollerSpec spec);

  int action_count() const override { return kScrollerActions; }
  void reset(std::uint64_t seed) override;
  /// Extrinsic reward is always 0.
  StepResult step(int action) override;
  std::span<const float> frame() const override { return frame_; }
  EnvInfo info() const override;
  bool done() const override { return state_.done; }
  std::unique_ptr<Environment> clone() const override;

  const ScrollerState& state() const { return state_; }
  const ScrollerSpec& spec() const { return spec_; }

 private:
  ScrollerSpec spec_;
  ScrollerState state_;
  std::vector<float> frame_;
};

// --- trajectories --------------------------------------------------------

struct TrajectoryStep {
  int step = 0;
  Cell cell;
  Heading heading = Heading::kNorth;
  int room = -1;
  int action = 0;
  float r_e = 0.0f;
  float r_i = 0.0f;
};

/// Distinct rooms containing at least one visited cell.
int count_rooms_visited(std::span<const Cell> trajectory, const MazeSpec& spec);

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryStep> steps);

}  // namespace curio
