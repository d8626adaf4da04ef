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

#include "curio/envs.hpp"
#include "curio/errors.hpp"

namespace curio {

namespace {

// Airborne arc relative to take-off height, one entry per tick; the jump
// lands on the tick after the last entry.
constexpr std::array<int, 2> kArc = {1, 2};
constexpr int kJumpTicks = static_cast<int>(kArc.size()) + 1;

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

int ScrollerSpec::terrain(int x) const {
  if (x < 0 || x >= track_length) return 3;  // boundary posts
  if (contains(gaps, x)) return -1;
  return contains(walls, x) ? 1 : 0;
}

int ScrollerSpec::hazard_x(const Hazard& h, int tick) {
  const int span = h.right - h.left;
  if (span <= 0) return h.left;
  const int t = (tick / 2 + h.phase) % (2 * span);
  return t <= span ? h.left + t : h.right - (t - span);
}

ScrollerSpec scroller_level(int level) {
  ScrollerSpec s;
  s.level = level;
  switch (level) {
    case 1:
      s.gaps = {4, 5, 12, 13, 21, 22, 30, 38, 39, 47, 54, 55, 62, 63, 69};
      s.walls = {9, 17, 26, 34, 43, 51, 66};
      s.hazards = {{23, 25, 0}, {40, 42, 3}};
      break;
    case 2:
      s.gaps = {5, 11, 12, 19, 27, 28, 35, 44, 45, 52, 61, 62, 68};
      s.walls = {8, 15, 24, 31, 40, 49, 56, 65};
      s.hazards = {{20, 23, 1}, {36, 38, 0}, {46, 48, 2}};
      s.night = true;
      break;
    case 3:
      s.gaps = {7, 8, 14, 15, 23, 31, 32, 41, 48, 49, 57, 64, 65};
      s.walls = {4, 11, 19, 27, 36, 44, 53, 61, 68};
      s.hazards = {{16, 18, 2}, {33, 35, 1}, {50, 52, 0}};
      break;
    default:
      throw ConfigError("scroller level must be 1, 2 or 3, got " + std::to_string(level));
  }
  return s;
}

void render_scroller(const ScrollerSpec& spec, const ScrollerState& state,
                     std::span<float> frame) {
  if (frame.size() != static_cast<std::size_t>(kFramePixels)) {
    throw ShapeError("render_scroller: frame must hold 42x42 pixels");
  }
  const int p = spec.cell_pixels;
  const int rows = 42 / p + (42 % p != 0);
  const int stand_row = rows - 4;  // image cell row of standing height 0
  std::vector<int> hazard_cells;
  for (const Hazard& h : spec.hazards) hazard_cells.push_back(ScrollerSpec::hazard_x(h, state.tick));
  for (int py = 0; py < 42; ++py) {
    const int cy = py / p;
    const int height = stand_row - cy;  // world height of this row
    for (int px = 0; px < 42; ++px) {
      const int wx = state.x + (px - 21 + 42 * p) / p - 42;
      const int sub = (px - 21 + 42 * p) % p;
      const int t = spec.terrain(wx);
      float v;
      if (wx == state.x && height == state.height) {
        v = 0.05f;
      } else if (height == 0 && contains(hazard_cells, wx) && t >= 0) {
        v = 0.95f;
      } else if (t >= 0 && height < t) {
        v = 0.55f + 0.08f * (((wx + cy) & 1) != 0 ? 1.0f : -1.0f);
      } else if (t >= 0 && height < 0) {
        v = 0.3f + 0.05f * static_cast<float>(((wx * 3 + cy) % 4 + sub) % 3);
      } else if (t < 0 && height < 0) {
        v = 0.12f;
      } else {
        // Sky with sparse clouds tied to the world position.
        const bool cloud = height >= 4 && ((wx * 7 + height * 5) % 11 == 0);
        v = cloud ? 0.97f : 0.8f;
      }
      frame[py * 42 + px] = spec.night ? 1.0f - v : v;
    }
  }
}

ScrollerEnv::ScrollerEnv(ScrollerSpec spec) : spec_(std::move(spec)), frame_(kFramePixels, 0.0f) {
  if (spec_.level < 1 || spec_.level > 3) throw ConfigError("scroller: invalid level");
  if (spec_.terrain(spec_.spawn_x) != 0) throw ConfigError("scroller: spawn must be on ground");
  state_.done = true;
}

void ScrollerEnv::reset(std::uint64_t /*seed*/) {
  state_ = ScrollerState{};
  state_.x = spec_.spawn_x;
  state_.best_x = spec_.spawn_x;
  render_scroller(spec_, state_, frame_);
}

StepResult ScrollerEnv::step(int action) {
  if (state_.done) throw ContractError("scroller: step on a finished episode");
  if (action < 0 || action >= kScrollerActions) {
    throw ContractError("scroller: action " + std::to_string(action) + " out of range");
  }
  const auto a = static_cast<ScrollerAction>(action);
  int move = 0;
  if (a == ScrollerAction::kLeft || a == ScrollerAction::kLeftJump) move = -1;
  if (a == ScrollerAction::kRight || a == ScrollerAction::kRightJump) move = 1;
  const bool jump = a == ScrollerAction::kJump || a == ScrollerAction::kRightJump ||
                    a == ScrollerAction::kLeftJump;
  ScrollerState& s = state_;
  if (s.air == 0 && jump) {
    s.air = kJumpTicks;
    s.dir = move;
    s.base = s.height;
  }
  if (s.air > 0) {
    // Ballistic: one cell per tick along the arc, then land.
    const int index = kJumpTicks - s.air;
    const int h = index < static_cast<int>(kArc.size()) ? s.base + kArc[index] : s.base + 1;
    const int nx = s.x + s.dir;
    if (spec_.terrain(nx) <= h) s.x = nx;
    s.height = h;
    if (--s.air == 0) {
      s.height = spec_.terrain(s.x);
      if (s.height < 0) s.dead = true;
    }
  } else if (move != 0) {
    const int nx = s.x + move;
    const int t = spec_.terrain(nx);
    if (t <= s.height) {
      s.x = nx;
      s.height = t;
      if (t < 0) s.dead = true;
    }
  }
  ++s.tick;
  if (!s.dead && s.air == 0) {
    for (const Hazard& h : spec_.hazards) {
      if (ScrollerSpec::hazard_x(h, s.tick) == s.x && s.height == 0) s.dead = true;
    }
  }
  s.best_x = std::max(s.best_x, s.x);
  if (s.dead || s.x >= spec_.track_length - 1 || s.tick >= spec_.episode_cap) s.done = true;
  render_scroller(spec_, s, frame_);
  return {0.0f, s.done};
}

EnvInfo ScrollerEnv::info() const {
  EnvInfo i;
  i.cell = {state_.x, state_.height};
  i.step = state_.tick;
  i.distance = state_.best_x;
  i.success = state_.x >= spec_.track_length - 1;
  return i;
}

std::unique_ptr<Environment> ScrollerEnv::clone() const {
  return std::make_unique<ScrollerEnv>(*this);
}

}  // namespace curio
