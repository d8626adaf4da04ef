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

// Metrics CSVs and the binary checkpoint format.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "curio/errors.hpp"
#include "curio/harness.hpp"
#include "curio/kvtext.hpp"

namespace curio {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

// --- metrics ---------------------------------------------------------------------

namespace {

struct Column {
  const char* name;
  double MetricsRow::*field;
};

// Integer columns are handled separately; these are the real-valued ones.
constexpr Column kRealColumns[] = {
    {"mean_return", &MetricsRow::mean_return},
    {"success_rate", &MetricsRow::success_rate},
    {"mean_intrinsic", &MetricsRow::mean_intrinsic},
    {"total_loss", &MetricsRow::total_loss},
    {"policy_loss", &MetricsRow::policy_loss},
    {"inverse_loss", &MetricsRow::inverse_loss},
    {"forward_loss", &MetricsRow::forward_loss},
    {"entropy", &MetricsRow::entropy},
    {"grad_norm", &MetricsRow::grad_norm},
    {"rooms_visited", &MetricsRow::rooms_visited},
    {"distance_mean", &MetricsRow::distance_mean},
    {"distance_max", &MetricsRow::distance_max},
};

void put_real(std::ostream& out, double v) {
  if (std::isnan(v)) return;  // empty cell
  out << std::setprecision(17) << v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  cells.push_back(cur);
  return cells;
}

double get_real(const std::string& cell) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  return parse_double("metrics", cell);
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"update", "step", "episodes"};
    for (const Column& col : kRealColumns) c.push_back(col.name);
    return c;
  }();
  return cols;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  out << "schema";
  for (const std::string& c : metrics_columns()) out << "," << c;
  out << "\n";
  for (const MetricsRow& r : rows) {
    out << kMetricsSchemaVersion << "," << r.update << "," << r.step << "," << r.episodes;
    for (const Column& col : kRealColumns) {
      out << ",";
      put_real(out, r.*col.field);
    }
    out << "\n";
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("metrics CSV is empty");
  std::vector<std::string> header = split_csv(line);
  std::vector<std::string> expect = {"schema"};
  for (const std::string& c : metrics_columns()) expect.push_back(c);
  if (header != expect) throw ConfigError("metrics CSV header does not match the schema");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv(line);
    if (cells.size() != expect.size()) throw ConfigError("metrics CSV row has the wrong width");
    if (parse_int("schema", cells[0]) != kMetricsSchemaVersion) {
      throw ConfigError("metrics CSV schema version " + cells[0] + " is not supported");
    }
    MetricsRow r;
    r.update = parse_int64("update", cells[1]);
    r.step = parse_int64("step", cells[2]);
    r.episodes = parse_int64("episodes", cells[3]);
    for (std::size_t i = 0; i < std::size(kRealColumns); ++i) r.*kRealColumns[i].field = get_real(cells[4 + i]);
    rows.push_back(r);
  }
  return rows;
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr out;
  double sum = 0.0;
  for (double x : xs) {
    if (std::isnan(x)) continue;
    sum += x;
    ++out.n;
  }
  if (out.n == 0) {
    out.mean = out.stderr_ = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  out.mean = sum / out.n;
  if (out.n > 1) {
    double ss = 0.0;
    for (double x : xs) {
      if (!std::isnan(x)) ss += (x - out.mean) * (x - out.mean);
    }
    out.stderr_ = std::sqrt(ss / (out.n - 1)) / std::sqrt(static_cast<double>(out.n));
  }
  return out;
}

void write_aggregate_csv(std::ostream& out, const std::vector<std::vector<MetricsRow>>& runs) {
  out << "schema,update,step,seeds";
  for (const Column& col : kRealColumns) out << "," << col.name << "_mean," << col.name << "_stderr";
  out << "\n";
  if (runs.empty()) return;
  std::size_t rows = runs.front().size();
  for (const auto& r : runs) rows = std::min(rows, r.size());
  for (std::size_t i = 0; i < rows; ++i) {
    out << kMetricsSchemaVersion << "," << runs.front()[i].update << "," << runs.front()[i].step
        << "," << runs.size();
    for (const Column& col : kRealColumns) {
      std::vector<double> xs;
      for (const auto& r : runs) xs.push_back(r[i].*col.field);
      const MeanStderr m = mean_stderr(xs);
      out << ",";
      put_real(out, m.mean);
      out << ",";
      put_real(out, m.n > 0 ? m.stderr_ : std::numeric_limits<double>::quiet_NaN());
    }
    out << "\n";
  }
}

// --- checkpoints -------------------------------------------------------------------

namespace {

constexpr char kMagic[6] = {'C', 'U', 'R', 'I', 'O', '1'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    const char* p = reinterpret_cast<const char*>(&v);
    bytes.insert(bytes.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes.insert(bytes.end(), s.begin(), s.end());
  }
  void floats(const std::vector<float>& v) {
    pod<std::uint64_t>(v.size());
    const char* p = reinterpret_cast<const char*>(v.data());
    bytes.insert(bytes.end(), p, p + v.size() * sizeof(float));
  }
  std::vector<char> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<char>& b) : bytes_(b) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats() {
    const auto n = pod<std::uint64_t>();
    if (n > (bytes_.size() - pos_) / sizeof(float)) truncated();
    std::vector<float> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (n > bytes_.size() - pos_) truncated();
  }
  [[noreturn]] static void truncated() {
    throw CheckpointError(ErrorKind::kCorruptCheckpoint, "checkpoint is truncated");
  }
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<char> checkpoint_bytes(const Checkpoint& c) {
  Writer w;
  w.bytes.insert(w.bytes.end(), std::begin(kMagic), std::end(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.str(c.config_text);
  w.pod<std::int64_t>(c.step);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.params.size()));
  for (const Parameter& p : c.params) {
    w.str(p.name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(p.shape.size()));
    for (auto d : p.shape) w.pod<std::int64_t>(d);
    w.floats(p.value);
  }
  w.pod<std::int64_t>(c.adam_steps);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(c.adam_m.size()));
  for (std::size_t i = 0; i < c.adam_m.size(); ++i) {
    w.floats(c.adam_m[i]);
    w.floats(c.adam_v.at(i));
  }
  w.str(c.rng_state);
  return w.bytes;
}

Checkpoint checkpoint_from_bytes(const std::vector<char>& bytes, const ParameterSet* expected) {
  if (bytes.size() < sizeof(kMagic) || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw CheckpointError(ErrorKind::kCorruptCheckpoint, "not a checkpoint (bad magic)");
  }
  std::vector<char> rest(bytes.begin() + sizeof(kMagic), bytes.end());
  Reader r(rest);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(ErrorKind::kUnsupportedVersion,
                          "checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.config_text = r.str();
  c.step = r.pod<std::int64_t>();
  const auto count = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) throw CheckpointError(ErrorKind::kCorruptCheckpoint, "implausible rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) shape.push_back(r.pod<std::int64_t>());
    std::vector<float> values = r.floats();
    if (static_cast<std::int64_t>(values.size()) != numel(shape)) {
      throw CheckpointError(ErrorKind::kCorruptCheckpoint, "size of " + name + " disagrees with its shape");
    }
    if (c.params.contains(name)) {
      throw CheckpointError(ErrorKind::kCorruptCheckpoint, "duplicate parameter " + name);
    }
    c.params.add(name, shape).value = std::move(values);
  }
  c.adam_steps = r.pod<std::int64_t>();
  const auto moments = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < moments; ++i) {
    c.adam_m.push_back(r.floats());
    c.adam_v.push_back(r.floats());
  }
  c.rng_state = r.str();
  if (!r.at_end()) throw CheckpointError(ErrorKind::kCorruptCheckpoint, "trailing bytes in checkpoint");

  if (expected != nullptr) {
    if (expected->size() != c.params.size()) {
      throw CheckpointError(ErrorKind::kCheckpointShapeMismatch,
                            "checkpoint has " + std::to_string(c.params.size()) + " parameters, model has " +
                                std::to_string(expected->size()));
    }
    for (const Parameter& p : *expected) {
      if (!c.params.contains(p.name)) {
        throw CheckpointError(ErrorKind::kCheckpointShapeMismatch, "checkpoint lacks " + p.name);
      }
      if (c.params.at(p.name).shape != p.shape) {
        throw CheckpointError(ErrorKind::kCheckpointShapeMismatch,
                              p.name + ": checkpoint " + shape_str(c.params.at(p.name).shape) + " vs model " +
                                  shape_str(p.shape));
      }
    }
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::vector<char> bytes = checkpoint_bytes(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write checkpoint " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path, const ParameterSet* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes, expected);
}

Checkpoint make_checkpoint(Trainer& trainer, const std::string& config_text) {
  Checkpoint c;
  c.config_text = config_text;
  c.params = trainer.params();
  for (Parameter& p : c.params) p.grad.assign(p.grad.size(), 0.0f);
  c.adam_steps = trainer.optimizer().steps();
  c.adam_m = trainer.optimizer().first_moments();
  c.adam_v = trainer.optimizer().second_moments();
  std::ostringstream rng;
  rng << trainer.rng();
  c.rng_state = rng.str();
  c.step = trainer.steps();
  return c;
}

std::uint64_t parameter_hash(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const Parameter& p : params) {
    mix(p.name.data(), p.name.size());
    for (auto d : p.shape) mix(&d, sizeof(d));
    mix(p.value.data(), p.value.size() * sizeof(float));
  }
  return h;
}

}  // namespace curio
