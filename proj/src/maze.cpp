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

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "curio/envs.hpp"
#include "curio/errors.hpp"
#include "curio/kvtext.hpp"

namespace curio {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a combined word.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

SpawnMode parse_spawn_mode(const std::string& name) {
  if (name == "dense") return SpawnMode::kDense;
  if (name == "sparse") return SpawnMode::kSparse;
  if (name == "very_sparse" || name == "very-sparse") return SpawnMode::kVerySparse;
  throw ConfigError("unknown spawn mode '" + name + "'");
}

std::string spawn_mode_name(SpawnMode mode) {
  switch (mode) {
    case SpawnMode::kDense: return "dense";
    case SpawnMode::kSparse: return "sparse";
    case SpawnMode::kVerySparse: return "very_sparse";
  }
  return "?";
}

namespace {

constexpr std::array<Cell, 4> kStep = {{{0, -1}, {1, 0}, {0, 1}, {-1, 0}}};

Heading turn(Heading h, int delta) {
  return static_cast<Heading>((static_cast<int>(h) + delta + 4) % 4);
}

Cell ahead(Cell c, Heading h) {
  const Cell d = kStep[static_cast<int>(h)];
  return {c.x + d.x, c.y + d.y};
}

// Door cell between two adjacent rooms, or nullopt-like {-1,-1}.
Cell door_between(const MazeSpec& s, int a, int b) {
  const int ra = a / s.room_cols, ca = a % s.room_cols;
  const int rb = b / s.room_cols, cb = b % s.room_cols;
  const int stride = s.room_size + 1;
  const int mid = s.room_size / 2;
  if (ra == rb && std::abs(ca - cb) == 1) {
    return {std::max(ca, cb) * stride, ra * stride + 1 + mid};
  }
  if (ca == cb && std::abs(ra - rb) == 1) {
    return {ca * stride + 1 + mid, std::max(ra, rb) * stride};
  }
  return {-1, -1};
}

std::vector<Cell> interior_cells(const MazeSpec& s, int room) {
  std::vector<Cell> out;
  const Cell o = s.room_origin(room);
  for (int y = 0; y < s.room_size; ++y)
    for (int x = 0; x < s.room_size; ++x) out.push_back({o.x + x, o.y + y});
  return out;
}

// Action distance from every (cell, heading) to the goal, by reverse BFS.
std::vector<int> distance_field(const MazeSpec& s) {
  const int w = s.grid_width();
  const int n = w * s.grid_height();
  std::vector<int> dist(static_cast<std::size_t>(n) * 4, -1);
  auto key = [&](Cell c, int h) { return (c.y * w + c.x) * 4 + h; };
  std::deque<std::pair<Cell, int>> queue;
  for (int h = 0; h < 4; ++h) {
    dist[key(s.goal, h)] = 0;
    queue.push_back({s.goal, h});
  }
  while (!queue.empty()) {
    const auto [c, h] = queue.front();
    queue.pop_front();
    const int d = dist[key(c, h)];
    // Predecessors: a turn in place, or a forward move from behind.
    for (int dh : {1, 3}) {
      const int ph = (h + dh) % 4;
      if (dist[key(c, ph)] < 0) {
        dist[key(c, ph)] = d + 1;
        queue.push_back({c, ph});
      }
    }
    const Cell back = ahead(c, turn(static_cast<Heading>(h), 2));
    if (s.is_open(back) && !(back == s.goal) && dist[key(back, h)] < 0) {
      dist[key(back, h)] = d + 1;
      queue.push_back({back, h});
    }
  }
  return dist;
}

}  // namespace

bool MazeSpec::in_grid(Cell c) const {
  return c.x >= 0 && c.y >= 0 && c.x < grid_width() && c.y < grid_height();
}

int MazeSpec::room_of(Cell c) const {
  if (!in_grid(c)) return -1;
  const int stride = room_size + 1;
  if (c.x % stride == 0 || c.y % stride == 0) return -1;
  return (c.y / stride) * room_cols + c.x / stride;
}

Cell MazeSpec::room_origin(int room) const {
  const int stride = room_size + 1;
  return {(room % room_cols) * stride + 1, (room / room_cols) * stride + 1};
}

std::vector<Cell> MazeSpec::corridor_cells() const {
  std::vector<Cell> out;
  for (const auto& [a, b] : corridors) out.push_back(door_between(*this, a, b));
  return out;
}

bool MazeSpec::is_open(Cell c) const {
  if (room_of(c) >= 0) return true;
  if (!in_grid(c)) return false;
  for (const auto& [a, b] : corridors) {
    if (door_between(*this, a, b) == c) return true;
  }
  return false;
}

int optimal_steps_to_goal(const MazeSpec& spec, Cell from) {
  if (!spec.is_open(from)) return -1;
  const auto dist = distance_field(spec);
  int best = -1;
  for (int h = 0; h < 4; ++h) {
    const int d = dist[(from.y * spec.grid_width() + from.x) * 4 + h];
    if (d >= 0 && (best < 0 || d < best)) best = d;
  }
  return best;
}

MazeSpec make_maze_spec(int room_rows, int room_cols, int room_size, int episode_cap,
                        std::uint64_t texture_seed) {
  if (room_rows < 1 || room_cols < 1 || room_size < 2 || room_rows * room_cols < 2) {
    throw ConfigError("maze needs at least two rooms of size >= 2");
  }
  MazeSpec s;
  s.room_rows = room_rows;
  s.room_cols = room_cols;
  s.room_size = room_size;
  s.episode_cap = episode_cap;
  s.texture_seed = texture_seed;
  // Serpentine: left-to-right on even rows, right-to-left on odd rows.
  int last_room = 0;
  for (int r = 0; r < room_rows; ++r) {
    for (int c = 0; c + 1 < room_cols; ++c) s.corridors.push_back({r * room_cols + c, r * room_cols + c + 1});
    if (r + 1 < room_rows) {
      const int c = r % 2 == 0 ? room_cols - 1 : 0;
      s.corridors.push_back({r * room_cols + c, (r + 1) * room_cols + c});
    }
    last_room = r * room_cols + (r % 2 == 0 ? room_cols - 1 : 0);
  }

  // Goal: the cell of the final room farthest from its entry corridor.
  s.goal = s.room_origin(last_room);
  {
    MazeSpec probe = s;
    const Cell entry = door_between(s, s.corridors.back().first, s.corridors.back().second);
    probe.goal = entry;
    int best = -1;
    for (const Cell c : interior_cells(s, last_room)) {
      const int d = optimal_steps_to_goal(probe, c);
      if (d > best) {
        best = d;
        s.goal = c;
      }
    }
  }

  const auto dist = distance_field(s);
  auto cell_dist = [&](Cell c) {
    int best = -1;
    for (int h = 0; h < 4; ++h) {
      const int d = dist[(c.y * s.grid_width() + c.x) * 4 + h];
      if (d >= 0 && (best < 0 || d < best)) best = d;
    }
    return best;
  };
  std::vector<Cell> cells;
  for (int room = 0; room < room_rows * room_cols; ++room) {
    for (const Cell c : interior_cells(s, room)) {
      if (!(c == s.goal)) cells.push_back(c);
    }
  }
  int far = -1;
  for (const Cell c : cells) {
    if (cell_dist(c) > far) {
      far = cell_dist(c);
      s.very_sparse_spawn = c;
    }
  }
  const int target = static_cast<int>(std::lround(far * 270.0 / 350.0));
  int gap = 1 << 30;
  for (const Cell c : cells) {
    if (std::abs(cell_dist(c) - target) < gap) {
      gap = std::abs(cell_dist(c) - target);
      s.sparse_spawn = c;
    }
  }
  const std::size_t n = cells.size();
  for (int i = 0; i < 17; ++i) {
    s.dense_spawns.push_back(cells[static_cast<std::size_t>((i + 0.5) * n / 17.0)]);
  }
  validate_maze_spec(s);
  return s;
}

void validate_maze_spec(const MazeSpec& s) {
  if (s.room_rows < 1 || s.room_cols < 1 || s.room_size < 2) throw ConfigError("maze: bad room grid");
  if (s.episode_cap < 1) throw ConfigError("maze: episode cap must be positive");
  if (s.cell_pixels < 1 || s.cell_pixels > 21) throw ConfigError("maze: cell_pixels out of range");
  const int rooms = s.room_rows * s.room_cols;
  for (const auto& [a, b] : s.corridors) {
    if (a < 0 || b < 0 || a >= rooms || b >= rooms || door_between(s, a, b).x < 0) {
      throw ConfigError("maze: corridor " + std::to_string(a) + "-" + std::to_string(b) +
                        " does not join adjacent rooms");
    }
  }
  if (s.room_of(s.goal) < 0) throw ConfigError("maze: goal must be inside a room");
  if (s.dense_spawns.size() != 17) {
    throw ConfigError("maze: dense spawn set must have 17 cells, has " +
                      std::to_string(s.dense_spawns.size()));
  }
  std::vector<Cell> spawns = s.dense_spawns;
  spawns.push_back(s.sparse_spawn);
  spawns.push_back(s.very_sparse_spawn);
  const auto dist = distance_field(s);
  for (const Cell c : spawns) {
    if (!s.is_open(c) || c == s.goal) throw ConfigError("maze: spawn cell is blocked or the goal");
    bool reachable = false;
    for (int h = 0; h < 4; ++h) reachable = reachable || dist[(c.y * s.grid_width() + c.x) * 4 + h] >= 0;
    if (!reachable) {
      throw ConfigError("maze: goal unreachable from spawn " + std::to_string(c.x) + "," +
                        std::to_string(c.y));
    }
  }
}

namespace {

std::string cell_text(Cell c) { return std::to_string(c.x) + "," + std::to_string(c.y); }

Cell parse_cell(const std::string& key, const std::string& v) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) throw ConfigError("key '" + key + "': expected x,y");
  return {parse_int(key, v.substr(0, comma)), parse_int(key, v.substr(comma + 1))};
}

}  // namespace

std::string maze_spec_to_text(const MazeSpec& s) {
  std::ostringstream out;
  out << "rooms = " << s.room_rows << "x" << s.room_cols << "\n";
  out << "room_size = " << s.room_size << "\n";
  out << "layout =";
  for (const auto& [a, b] : s.corridors) out << " " << a << "-" << b;
  out << "\n";
  out << "texture_seed = " << s.texture_seed << "\n";
  out << "goal = " << cell_text(s.goal) << "\n";
  out << "sparse_spawn = " << cell_text(s.sparse_spawn) << "\n";
  out << "very_sparse_spawn = " << cell_text(s.very_sparse_spawn) << "\n";
  out << "dense_spawns =";
  for (const Cell c : s.dense_spawns) out << " " << cell_text(c);
  out << "\n";
  out << "cap = " << s.episode_cap << "\n";
  out << "cell_pixels = " << s.cell_pixels << "\n";
  out << "rotate_view = " << (s.rotate_view ? "true" : "false") << "\n";
  return out.str();
}

MazeSpec maze_spec_from_text(const std::string& text) {
  MazeSpec s;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string& k = kv.key;
    const std::string& v = kv.value;
    if (k == "rooms") {
      const auto x = v.find('x');
      if (x == std::string::npos) throw ConfigError("key 'rooms': expected RxC");
      s.room_rows = parse_int(k, v.substr(0, x));
      s.room_cols = parse_int(k, v.substr(x + 1));
    } else if (k == "room_size") {
      s.room_size = parse_int(k, v);
    } else if (k == "layout") {
      s.corridors.clear();
      for (const std::string& w : split_words(v)) {
        const auto dash = w.find('-');
        if (dash == std::string::npos) throw ConfigError("key 'layout': expected a-b pairs");
        s.corridors.push_back({parse_int(k, w.substr(0, dash)), parse_int(k, w.substr(dash + 1))});
      }
    } else if (k == "texture_seed") {
      s.texture_seed = parse_uint64(k, v);
    } else if (k == "goal") {
      s.goal = parse_cell(k, v);
    } else if (k == "sparse_spawn") {
      s.sparse_spawn = parse_cell(k, v);
    } else if (k == "very_sparse_spawn") {
      s.very_sparse_spawn = parse_cell(k, v);
    } else if (k == "dense_spawns") {
      s.dense_spawns.clear();
      for (const std::string& w : split_words(v)) s.dense_spawns.push_back(parse_cell(k, w));
    } else if (k == "cap") {
      s.episode_cap = parse_int(k, v);
    } else if (k == "cell_pixels") {
      s.cell_pixels = parse_int(k, v);
    } else if (k == "rotate_view") {
      s.rotate_view = parse_bool(k, v);
    } else {
      throw ConfigError("maze spec: unknown key '" + k + "' on line " + std::to_string(kv.line));
    }
  }
  validate_maze_spec(s);
  return s;
}

// --- rendering -------------------------------------------------------------

namespace {

RoomTexture room_texture(std::uint64_t seed, int room) {
  const std::uint64_t h = mix_seed(seed, static_cast<std::uint64_t>(room) + 101);
  auto unit = [h](int k) { return static_cast<float>((mix_seed(h, k) >> 11) * 0x1.0p-53); };
  RoomTexture t;
  t.base = 0.32f + 0.36f * unit(0);
  t.contrast = 0.08f + 0.14f * unit(1);
  t.pattern = static_cast<int>(mix_seed(h, 2) % 5);
  t.frequency = (mix_seed(h, 3) & 1) != 0 ? 1.0f : 0.5f;
  return t;
}

float texture_value(const RoomTexture& t, float wx, float wy) {
  bool bit = false;
  const float f = t.frequency;
  switch (t.pattern) {
    case 0: bit = ((static_cast<int>(std::floor(wx * f)) + static_cast<int>(std::floor(wy * f))) & 1) != 0; break;
    case 1: bit = (static_cast<int>(std::floor(wy * f)) & 1) != 0; break;
    case 2: bit = (static_cast<int>(std::floor(wx * f)) & 1) != 0; break;
    case 3: bit = (static_cast<int>(std::floor((wx + wy) * f)) & 1) != 0; break;
    default: {
      const float fx = wx - std::floor(wx) - 0.5f;
      const float fy = wy - std::floor(wy) - 0.5f;
      bit = fx * fx + fy * fy < 0.09f;
    }
  }
  return t.base + (bit ? t.contrast : -t.contrast);
}

constexpr float kWall = 0.08f;
constexpr float kCorridor = 0.5f;
constexpr float kGoal = 1.0f;
constexpr float kAgent = 0.92f;

}  // namespace

MazeRenderer::MazeRenderer(const MazeSpec& spec)
    : width_(spec.grid_width()), height_(spec.grid_height()), cell_pixels_(spec.cell_pixels),
      rotate_view_(spec.rotate_view) {
  const int rooms = spec.room_rows * spec.room_cols;
  for (int r = 0; r < rooms; ++r) textures_.push_back(room_texture(spec.texture_seed, r));
  kinds_.assign(static_cast<std::size_t>(width_) * height_, kKindWall);
  for (int y = 0; y < height_; ++y)
    for (int x = 0; x < width_; ++x) kinds_[y * width_ + x] = spec.room_of({x, y});
  for (const Cell c : spec.corridor_cells()) kinds_[c.y * width_ + c.x] = kKindCorridor;
  kinds_[spec.goal.y * width_ + spec.goal.x] = kKindGoal;
}

void MazeRenderer::render(const MazeState& state, std::span<float> frame) const {
  if (frame.size() != static_cast<std::size_t>(kFramePixels)) {
    throw ShapeError("render_maze: frame must hold 42x42 pixels");
  }
  const Cell hf = kStep[static_cast<int>(state.heading)];
  const Cell f = rotate_view_ ? hf : kStep[0];
  const Cell r = rotate_view_ ? kStep[static_cast<int>(turn(state.heading, 1))] : kStep[1];
  // Marker nose, in image coordinates.
  const float nose_u = rotate_view_ ? 0.0f : static_cast<float>(hf.x);
  const float nose_v = rotate_view_ ? -1.0f : static_cast<float>(hf.y);
  const float cx = static_cast<float>(state.cell.x) + 0.5f;
  const float cy = static_cast<float>(state.cell.y) + 0.5f;
  const float inv = 1.0f / static_cast<float>(cell_pixels_);
  for (int py = 0; py < 42; ++py) {
    for (int px = 0; px < 42; ++px) {
      const float du = (static_cast<float>(px) + 0.5f - 21.0f) * inv;
      const float dv = (static_cast<float>(py) + 0.5f - 21.0f) * inv;
      float v = kWall;
      if ((std::fabs(du) < 0.3f && std::fabs(dv) < 0.3f) ||
          (std::fabs(du - 0.4f * nose_u) < 0.3f && std::fabs(dv - 0.4f * nose_v) < 0.3f)) {
        v = kAgent;
      } else {
        // Up in the image is the heading direction.
        const float wx = cx + du * r.x - dv * f.x;
        const float wy = cy + du * r.y - dv * f.y;
        const int x = static_cast<int>(std::floor(wx));
        const int y = static_cast<int>(std::floor(wy));
        if (x >= 0 && y >= 0 && x < width_ && y < height_) {
          const int kind = kinds_[y * width_ + x];
          if (kind >= 0) {
            v = texture_value(textures_[kind], wx, wy);
          } else if (kind == kKindGoal) {
            v = kGoal;
          } else if (kind == kKindCorridor) {
            v = kCorridor;
          }
        }
      }
      frame[py * 42 + px] = v;
    }
  }
}

void render_maze(const MazeSpec& spec, const MazeState& state, std::span<float> frame) {
  MazeRenderer(spec).render(state, frame);
}

// --- maze environment -------------------------------------------------------

MazeEnv::MazeEnv(MazeSpec spec, SpawnMode mode)
    : spec_(std::move(spec)), mode_(mode), frame_(kFramePixels, 0.0f) {
  validate_maze_spec(spec_);
  renderer_ = std::make_shared<const MazeRenderer>(spec_);
  state_.done = true;
}

void MazeEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  state_ = MazeState{};
  switch (mode_) {
    case SpawnMode::kDense:
      state_.cell = spec_.dense_spawns[std::uniform_int_distribution<int>(0, 16)(rng)];
      break;
    case SpawnMode::kSparse: state_.cell = spec_.sparse_spawn; break;
    case SpawnMode::kVerySparse: state_.cell = spec_.very_sparse_spawn; break;
  }
  state_.heading = static_cast<Heading>(std::uniform_int_distribution<int>(0, 3)(rng));
  renderer_->render(state_, frame_);
}

StepResult MazeEnv::step(int action) {
  if (state_.done) throw ContractError("maze: step on a finished episode");
  if (action < 0 || action >= kMazeActions) {
    throw ContractError("maze: action " + std::to_string(action) + " out of range");
  }
  StepResult out;
  switch (static_cast<MazeAction>(action)) {
    case MazeAction::kForward: {
      const Cell next = ahead(state_.cell, state_.heading);
      if (spec_.is_open(next)) state_.cell = next;
      break;
    }
    case MazeAction::kLeft: state_.heading = turn(state_.heading, -1); break;
    case MazeAction::kRight: state_.heading = turn(state_.heading, 1); break;
    case MazeAction::kNoop: break;
  }
  ++state_.step;
  if (state_.cell == spec_.goal) {
    out.reward = 1.0f;
    state_.success = true;
    state_.done = true;
  } else if (state_.step >= spec_.episode_cap) {
    state_.done = true;
  }
  out.done = state_.done;
  renderer_->render(state_, frame_);
  return out;
}

EnvInfo MazeEnv::info() const {
  EnvInfo i;
  i.cell = state_.cell;
  i.heading = state_.heading;
  i.room = spec_.room_of(state_.cell);
  i.step = state_.step;
  i.success = state_.success;
  return i;
}

std::unique_ptr<Environment> MazeEnv::clone() const { return std::make_unique<MazeEnv>(*this); }

void MazeEnv::set_state(const MazeState& state) {
  if (!spec_.is_open(state.cell)) throw ContractError("maze: set_state onto a blocked cell");
  state_ = state;
  renderer_->render(state_, frame_);
}

int count_rooms_visited(std::span<const Cell> trajectory, const MazeSpec& spec) {
  std::vector<bool> seen(static_cast<std::size_t>(spec.room_rows * spec.room_cols), false);
  int count = 0;
  for (const Cell c : trajectory) {
    const int room = spec.room_of(c);
    if (room >= 0 && !seen[room]) {
      seen[room] = true;
      ++count;
    }
  }
  return count;
}

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryStep> steps) {
  out << "step,x,y,heading,room,action,r_e,r_i\n";
  for (const TrajectoryStep& s : steps) {
    out << s.step << "," << s.cell.x << "," << s.cell.y << "," << static_cast<int>(s.heading) << ","
        << s.room << "," << s.action << "," << s.r_e << "," << s.r_i << "\n";
  }
}

}  // namespace curio
