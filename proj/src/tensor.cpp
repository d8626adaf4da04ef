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

#include "curio/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>
#include <sstream>

#include "curio/errors.hpp"

namespace curio {
namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

// Rows of im2col work per GEMM call in the convolution kernels.
constexpr int kConvChunkRows = 8192;

// Recycles float buffers between graphs. Graphs built by a training loop
// repeat the same node sizes every iteration, so fresh allocations (and the
// page faults that come with them) only happen on the first pass.
class BufferPool {
 public:
  static BufferPool& local() {
    thread_local BufferPool pool;
    return pool;
  }

  // Returns a buffer of exactly n floats with unspecified contents.
  std::vector<float> take(std::size_t n) {
    auto it = free_.find(n);
    if (it != free_.end() && !it->second.empty()) {
      std::vector<float> buf = std::move(it->second.back());
      it->second.pop_back();
      pooled_bytes_ -= n * sizeof(float);
      return buf;
    }
    return std::vector<float>(n);
  }

  std::vector<float> take_zeroed(std::size_t n) {
    std::vector<float> buf = take(n);
    std::fill(buf.begin(), buf.end(), 0.0f);
    return buf;
  }

  void give(std::vector<float>&& buf) {
    const std::size_t bytes = buf.size() * sizeof(float);
    if (buf.empty() || buf.size() != buf.capacity() || pooled_bytes_ + bytes > kMaxBytes) {
      std::vector<float>().swap(buf);
      return;
    }
    pooled_bytes_ += bytes;
    free_[buf.size()].push_back(std::move(buf));
    buf = std::vector<float>();
  }

 private:
  static constexpr std::size_t kMaxBytes = std::size_t{1} << 28;
  std::unordered_map<std::size_t, std::vector<std::vector<float>>> free_;
  std::size_t pooled_bytes_ = 0;
};

// Pooled scratch buffer released on scope exit.
class Scratch {
 public:
  Scratch() = default;
  Scratch(const Scratch&) = delete;
  Scratch& operator=(const Scratch&) = delete;
  ~Scratch() { BufferPool::local().give(std::move(buf_)); }

  float* get(std::size_t n) {
    if (buf_.size() != n) {
      BufferPool::local().give(std::move(buf_));
      buf_ = BufferPool::local().take(n);
    }
    return buf_.data();
  }

 private:
  std::vector<float> buf_;
};

[[noreturn]] void shape_fail(std::string_view op, const std::string& detail) {
  throw ShapeError(std::string(op) + ": " + detail);
}

std::string shapes_str(std::initializer_list<const Shape*> shapes) {
  std::string out;
  for (const Shape* s : shapes) {
    if (!out.empty()) out += ", ";
    out += shape_str(*s);
  }
  return out;
}

// Geometry shared by conv2d and its transpose. "big" is the spatially larger
// side (conv input, deconv output), "small" the other one.
struct ConvGeometry {
  int channels_big;
  int big_h, big_w;
  int small_h, small_w;
  int kernel, stride, pad;

  int patch() const { return channels_big * kernel * kernel; }
  int small_pixels() const { return small_h * small_w; }
  int big_pixels() const { return big_h * big_w; }
};

// NHWC im2col for one sample: row (sy*small_w + sx) holds the patch
// big[sy*s - p + ky, sx*s - p + kx, c] at column (ky*k + kx)*C + c, zero
// outside the image.
void im2col(const ConvGeometry& g, const float* big, float* col) {
  const int k = g.kernel;
  const int C = g.channels_big;
  const int patch = g.patch();
  for (int sy = 0; sy < g.small_h; ++sy) {
    for (int sx = 0; sx < g.small_w; ++sx) {
      float* row = col + static_cast<std::size_t>(sy * g.small_w + sx) * patch;
      for (int ky = 0; ky < k; ++ky) {
        const int y = sy * g.stride - g.pad + ky;
        float* dst = row + ky * k * C;
        if (y < 0 || y >= g.big_h) {
          std::fill_n(dst, k * C, 0.0f);
          continue;
        }
        for (int kx = 0; kx < k; ++kx) {
          const int x = sx * g.stride - g.pad + kx;
          if (x < 0 || x >= g.big_w) {
            std::fill_n(dst + kx * C, C, 0.0f);
          } else {
            std::copy_n(big + (static_cast<std::size_t>(y) * g.big_w + x) * C, C, dst + kx * C);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: big += scatter(col).
void col2im(const ConvGeometry& g, const float* col, float* big) {
  const int k = g.kernel;
  const int C = g.channels_big;
  const int patch = g.patch();
  for (int sy = 0; sy < g.small_h; ++sy) {
    for (int sx = 0; sx < g.small_w; ++sx) {
      const float* row = col + static_cast<std::size_t>(sy * g.small_w + sx) * patch;
      for (int ky = 0; ky < k; ++ky) {
        const int y = sy * g.stride - g.pad + ky;
        if (y < 0 || y >= g.big_h) continue;
        for (int kx = 0; kx < k; ++kx) {
          const int x = sx * g.stride - g.pad + kx;
          if (x < 0 || x >= g.big_w) continue;
          const float* src = row + (ky * k + kx) * C;
          float* dst = big + (static_cast<std::size_t>(y) * g.big_w + x) * C;
          for (int c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
  }
}

int chunk_samples(int rows_per_sample) {
  return std::max(1, kConvChunkRows / std::max(1, rows_per_sample));
}

struct ConvDims {
  int batch;
  ConvGeometry geo;
  int channels_small;

  std::size_t big_size() const {
    return static_cast<std::size_t>(geo.big_pixels()) * geo.channels_big;
  }
  std::size_t small_size() const {
    return static_cast<std::size_t>(geo.small_pixels()) * channels_small;
  }
};

// db += column sums of a row-major [rows, cols] block. Fixed summation order
// (Eigen's vectorized reductions depend on buffer alignment).
void add_column_sums(const float* m, Eigen::Index rows, Eigen::Index cols, float* db) {
  std::vector<double> acc(static_cast<std::size_t>(cols), 0.0);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const float* row = m + r * cols;
    for (Eigen::Index c = 0; c < cols; ++c) acc[c] += row[c];
  }
  for (Eigen::Index c = 0; c < cols; ++c) db[c] += static_cast<float>(acc[c]);
}

// Columns for samples [b0, b0+nb) of the big-side tensor.
float* fill_columns(const ConvDims& d, const float* big, int b0, int nb,
                    Scratch& col) {
  const ConvGeometry& g = d.geo;
  const std::size_t per = static_cast<std::size_t>(g.small_pixels()) * g.patch();
  float* out = col.get(per * nb);
  for (int b = 0; b < nb; ++b) {
    im2col(g, big + (b0 + b) * d.big_size(), out + b * per);
  }
  return out;
}

// conv2d: x is big [B,H,W,C], y small [B,Ho,Wo,O], weight [k,k,C,O].
ConvDims conv_dims(const Shape& x, const Shape& w, const Shape& y,
                   const OpAttrs& a) {
  return {x[0], {x[3], x[1], x[2], y[1], y[2], w[0], a.stride, a.pad}, w[3]};
}

void conv2d_forward(const ConvDims& d, const float* x, const float* w,
                    const float* bias, float* y) {
  const ConvGeometry& g = d.geo;
  const int P = g.small_pixels();
  const int O = d.channels_small;
  const int per = chunk_samples(P);
  CMapR wmat(w, g.patch(), O);
  Eigen::Map<const Eigen::RowVectorXf> bvec(bias, O);
  Scratch col;
  for (int b0 = 0; b0 < d.batch; b0 += per) {
    const int nb = std::min(per, d.batch - b0);
    const Eigen::Index rows = static_cast<Eigen::Index>(nb) * P;
    const float* cols = fill_columns(d, x, b0, nb, col);
    MapR out(y + b0 * d.small_size(), rows, O);
    out.noalias() = CMapR(cols, rows, g.patch()) * wmat;
    out.rowwise() += bvec;
  }
}

void conv2d_backward(const ConvDims& d, const float* x, const float* w,
                     const float* dy, float* dx, float* dw, float* db) {
  const ConvGeometry& g = d.geo;
  const int P = g.small_pixels();
  const int O = d.channels_small;
  const int per = chunk_samples(P);
  CMapR wmat(w, g.patch(), O);
  Scratch col;
  Scratch dcol_buf;
  for (int b0 = 0; b0 < d.batch; b0 += per) {
    const int nb = std::min(per, d.batch - b0);
    const Eigen::Index rows = static_cast<Eigen::Index>(nb) * P;
    CMapR dout(dy + b0 * d.small_size(), rows, O);
    if (db != nullptr) {
      add_column_sums(dout.data(), dout.rows(), O, db);
    }
    if (dw != nullptr) {
      const float* cols = fill_columns(d, x, b0, nb, col);
      MapR(dw, g.patch(), O).noalias() += CMapR(cols, rows, g.patch()).transpose() * dout;
    }
    if (dx != nullptr) {
      float* dcol = dcol_buf.get(static_cast<std::size_t>(rows) * g.patch());
      MapR(dcol, rows, g.patch()).noalias() = dout * wmat.transpose();
      const std::size_t stride = static_cast<std::size_t>(P) * g.patch();
      for (int b = 0; b < nb; ++b) {
        col2im(g, dcol + b * stride, dx + (b0 + b) * d.big_size());
      }
    }
  }
}

// conv_transpose2d: x is small [B,H,W,C], y big [B,Ho,Wo,O], weight [C,k,k,O].
ConvDims deconv_dims(const Shape& x, const Shape& w, const Shape& y,
                     const OpAttrs& a) {
  return {x[0], {y[3], y[1], y[2], x[1], x[2], w[1], a.stride, a.pad}, x[3]};
}

void deconv_forward(const ConvDims& d, const float* x, const float* w,
                    const float* bias, float* y) {
  const ConvGeometry& g = d.geo;
  const int P = g.small_pixels();
  const int C = d.channels_small;
  const int O = g.channels_big;
  const int per = chunk_samples(P);
  CMapR wmat(w, C, g.patch());
  Scratch cols_buf;
  for (int b0 = 0; b0 < d.batch; b0 += per) {
    const int nb = std::min(per, d.batch - b0);
    const Eigen::Index rows = static_cast<Eigen::Index>(nb) * P;
    float* colsm = cols_buf.get(static_cast<std::size_t>(rows) * g.patch());
    MapR(colsm, rows, g.patch()).noalias() = CMapR(x + b0 * d.small_size(), rows, C) * wmat;
    const std::size_t stride = static_cast<std::size_t>(P) * g.patch();
    for (int b = 0; b < nb; ++b) {
      float* yb = y + (b0 + b) * d.big_size();
      for (int q = 0; q < g.big_pixels(); ++q) std::copy_n(bias, O, yb + q * O);
      col2im(g, colsm + b * stride, yb);
    }
  }
}

void deconv_backward(const ConvDims& d, const float* x, const float* w,
                     const float* dy, float* dx, float* dw, float* db) {
  const ConvGeometry& g = d.geo;
  const int P = g.small_pixels();
  const int C = d.channels_small;
  const int O = g.channels_big;
  const int per = chunk_samples(P);
  CMapR wmat(w, C, g.patch());
  Scratch dcols_buf;
  for (int b0 = 0; b0 < d.batch; b0 += per) {
    const int nb = std::min(per, d.batch - b0);
    const Eigen::Index rows = static_cast<Eigen::Index>(nb) * P;
    if (db != nullptr) {
      CMapR dyb(dy + b0 * d.big_size(), static_cast<Eigen::Index>(nb) * g.big_pixels(), O);
      add_column_sums(dyb.data(), dyb.rows(), O, db);
    }
    CMapR dc(fill_columns(d, dy, b0, nb, dcols_buf), rows, g.patch());
    if (dw != nullptr) {
      MapR(dw, C, g.patch()).noalias() +=
          CMapR(x + b0 * d.small_size(), rows, C).transpose() * dc;
    }
    if (dx != nullptr) {
      MapR(dx + b0 * d.small_size(), rows, C).noalias() += dc * wmat.transpose();
    }
  }
}

// Splits a shape around `axis` into (outer, extent, inner).
struct AxisSplit {
  std::int64_t outer = 1;
  std::int64_t extent = 1;
  std::int64_t inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit out;
  for (int i = 0; i < static_cast<int>(s.size()); ++i) {
    if (i < axis) out.outer *= s[i];
    else if (i == axis) out.extent = s[i];
    else out.inner *= s[i];
  }
  return out;
}

std::int64_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

// out[j] = in[src(j)] where output axis i walks input axis perm[i]. With
// `scatter`, runs the adjoint: in[src(j)] += out[j].
void permute_copy(const Shape& in_shape, const std::vector<int>& perm,
                  const float* src, float* dst, bool scatter) {
  const int rank = static_cast<int>(in_shape.size());
  std::vector<std::int64_t> in_stride(rank, 1);
  for (int i = rank - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * in_shape[i + 1];
  std::vector<std::int64_t> out_dims(rank), walk(rank);
  for (int i = 0; i < rank; ++i) {
    out_dims[i] = in_shape[perm[i]];
    walk[i] = in_stride[perm[i]];
  }
  // Odometer over all output axes but the last, which is walked in a tight
  // strided loop.
  const std::int64_t inner = rank == 0 ? 1 : out_dims[rank - 1];
  const std::int64_t inner_walk = rank == 0 ? 0 : walk[rank - 1];
  std::vector<std::int64_t> idx(rank, 0);
  const std::int64_t total = numel(in_shape);
  std::int64_t offset = 0;
  for (std::int64_t j = 0; j < total; j += inner) {
    if (scatter) {
      for (std::int64_t t = 0; t < inner; ++t) dst[offset + t * inner_walk] += src[j + t];
    } else {
      for (std::int64_t t = 0; t < inner; ++t) dst[j + t] = src[offset + t * inner_walk];
    }
    for (int i = rank - 2; i >= 0; --i) {
      offset += walk[i];
      if (++idx[i] < out_dims[i]) break;
      offset -= walk[i] * out_dims[i];
      idx[i] = 0;
    }
  }
}

void check_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    shape_fail(op, "shape mismatch " + shapes_str({&a.shape(), &b.shape()}));
  }
}

Graph& graph_of(std::string_view op, std::initializer_list<const Tensor*> ts) {
  Graph* g = nullptr;
  for (const Tensor* t : ts) {
    if (!t->valid()) throw ContractError(std::string(op) + ": invalid tensor");
    if (g == nullptr) g = t->graph();
    if (t->graph() != g) {
      throw ContractError(std::string(op) + ": tensors belong to different graphs");
    }
  }
  return *g;
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConvTranspose2d: return "conv_transpose2d";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kElu: return "elu";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kRowSum: return "row_sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSquaredL2: return "squared_l2";
    case OpKind::kConcat: return "concat";
    case OpKind::kOneHot: return "one_hot";
    case OpKind::kSlice: return "slice";
    case OpKind::kTakeRows: return "take_rows";
    case OpKind::kReshape: return "reshape";
    case OpKind::kPermute: return "permute";
    case OpKind::kStopGradient: return "stop_gradient";
  }
  return "unknown";
}

Parameter::Parameter(std::string n, Shape s)
    : name(std::move(n)),
      shape(std::move(s)),
      value(static_cast<std::size_t>(numel(shape)), 0.0f),
      grad(static_cast<std::size_t>(numel(shape)), 0.0f) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

// --- Tensor ---------------------------------------------------------------

const Shape& Tensor::shape() const { return graph_->nodes_[id_].shape; }
int Tensor::dim(int axis) const { return shape().at(axis); }
int Tensor::rank() const { return static_cast<int>(shape().size()); }
std::int64_t Tensor::size() const { return numel(shape()); }

std::span<const float> Tensor::values() const {
  return graph_->nodes_[id_].value;
}

std::span<const float> Tensor::grad() const {
  const auto& node = graph_->nodes_[id_];
  if (node.param != nullptr) return node.param->grad;
  return node.grad;
}

float Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return values()[0];
}

bool Tensor::requires_grad() const {
  return graph_->nodes_[id_].requires_grad;
}

// --- Graph ----------------------------------------------------------------

Graph::Graph(GradMode mode) : mode_(mode) {}

Graph::~Graph() {
  for (Node& node : nodes_) {
    BufferPool::local().give(std::move(node.value));
    BufferPool::local().give(std::move(node.grad));
  }
}

int Graph::push_leaf(Shape shape, std::vector<float> values,
                     bool requires_grad, Parameter* param) {
  for (int d : shape) {
    if (d <= 0) shape_fail("leaf", "non-positive extent in " + shape_str(shape));
  }
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    shape_fail("leaf", "shape " + shape_str(shape) + " does not match " +
                           std::to_string(values.size()) + " values");
  }
  Node node;
  node.shape = std::move(shape);
  node.value = std::move(values);
  node.requires_grad = requires_grad && mode_ == GradMode::kEnabled;
  node.param = param;
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Graph::constant(Shape shape, std::vector<float> values) {
  return {this, push_leaf(std::move(shape), std::move(values), false, nullptr)};
}

Tensor Graph::variable(Shape shape, std::vector<float> values) {
  return {this, push_leaf(std::move(shape), std::move(values), true, nullptr)};
}

Tensor Graph::bind(Parameter& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) {
    return {this, it->second};
  }
  if (param.grad.size() != param.value.size()) {
    param.grad.assign(param.value.size(), 0.0f);
  }
  const int id = push_leaf(param.shape, param.value, true, &param);
  if (mode_ == GradMode::kDisabled) nodes_[id].param = nullptr;
  bound_.emplace(&param, id);
  return {this, id};
}

std::span<float> Graph::leaf_values(const Tensor& leaf) {
  if (leaf.graph() != this || nodes_[leaf.id()].kind != OpKind::kLeaf) {
    throw ContractError("leaf_values: not a leaf of this graph");
  }
  return nodes_[leaf.id()].value;
}

Tensor Graph::record(OpKind kind, OpAttrs attrs, std::vector<Tensor> inputs,
                     Shape out_shape) {
  Node node;
  node.kind = kind;
  node.attrs = std::move(attrs);
  node.shape = std::move(out_shape);
  bool any_grad = false;
  for (const Tensor& t : inputs) {
    if (t.graph() != this) {
      throw ContractError(std::string(op_name(kind)) +
                          ": input belongs to a different graph");
    }
    node.inputs.push_back(t.id());
    any_grad = any_grad || nodes_[t.id()].requires_grad;
  }
  node.requires_grad = any_grad && mode_ == GradMode::kEnabled &&
                       kind != OpKind::kStopGradient && kind != OpKind::kOneHot;
  compute_forward(node);
  nodes_.push_back(std::move(node));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::replay() {
  for (Node& node : nodes_) {
    if (node.kind != OpKind::kLeaf) compute_forward(node);
  }
}

void Graph::zero_grad() {
  for (Node& node : nodes_) {
    if (node.kind == OpKind::kLeaf && node.param == nullptr) node.grad.clear();
  }
}

void Graph::backward(const Tensor& loss) {
  if (loss.graph() != this) throw ContractError("backward: foreign loss tensor");
  if (mode_ == GradMode::kDisabled) {
    throw ContractError("backward: graph was recorded without gradients");
  }
  if (loss.shape() != Shape{1}) {
    throw ContractError("backward: loss must have shape [1], got " +
                        shape_str(loss.shape()));
  }
  for (Node& node : nodes_) {
    if (node.kind != OpKind::kLeaf || node.param != nullptr) {
      BufferPool::local().give(std::move(node.grad));
    }
  }
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad.assign(1, 1.0f);
  for (int id = loss.id(); id >= 0; --id) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.requires_grad) continue;
    if (node.kind == OpKind::kLeaf) continue;
    compute_backward(id);
    BufferPool::local().give(std::move(node.grad));
  }
  for (Node& node : nodes_) {
    if (node.kind == OpKind::kLeaf && node.param != nullptr && !node.grad.empty()) {
      auto& dst = node.param->grad;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
      BufferPool::local().give(std::move(node.grad));
    }
  }
}

void Graph::compute_forward(Node& node) {
  if (node.kind == OpKind::kLeaf) return;
  const OpAttrs& a = node.attrs;
  auto in = [&](int i) -> const Node& { return nodes_[node.inputs[i]]; };
  auto& y = node.value;
  const std::size_t n = static_cast<std::size_t>(numel(node.shape));
  if (y.size() != n) {
    BufferPool::local().give(std::move(y));
    y = BufferPool::local().take(n);
  }
  if (node.kind == OpKind::kOneHot) std::fill(y.begin(), y.end(), 0.0f);

  switch (node.kind) {
    case OpKind::kLeaf:
      break;
    case OpKind::kMatMul: {
      const Node& A = in(0);
      const Node& B = in(1);
      CMapR am(A.value.data(), A.shape[0], A.shape[1]);
      CMapR bm(B.value.data(), B.shape[0], B.shape[1]);
      MapR(y.data(), node.shape[0], node.shape[1]).noalias() = am * bm;
      break;
    }
    case OpKind::kConv2d: {
      const ConvDims d = conv_dims(in(0).shape, in(1).shape, node.shape, a);
      conv2d_forward(d, in(0).value.data(), in(1).value.data(),
                     in(2).value.data(), y.data());
      break;
    }
    case OpKind::kConvTranspose2d: {
      const ConvDims d = deconv_dims(in(0).shape, in(1).shape, node.shape, a);
      deconv_forward(d, in(0).value.data(), in(1).value.data(),
                     in(2).value.data(), y.data());
      break;
    }
    case OpKind::kAdd:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = in(0).value[i] + in(1).value[i];
      break;
    case OpKind::kSub:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = in(0).value[i] - in(1).value[i];
      break;
    case OpKind::kMul:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = in(0).value[i] * in(1).value[i];
      break;
    case OpKind::kScale:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.scalar * in(0).value[i];
      break;
    case OpKind::kAddBias: {
      const std::int64_t n = last_dim(node.shape);
      const std::int64_t rows = static_cast<std::int64_t>(y.size()) / n;
      CMapR x(in(0).value.data(), rows, n);
      MapR(y.data(), rows, n) =
          x.rowwise() + Eigen::Map<const Eigen::RowVectorXf>(in(1).value.data(), n);
      break;
    }
    case OpKind::kPermute:
      permute_copy(in(0).shape, a.shape, in(0).value.data(), y.data(), false);
      break;
    case OpKind::kElu: {
      using Arr = Eigen::Array<float, Eigen::Dynamic, 1>;
      Eigen::Map<const Arr> x(in(0).value.data(), static_cast<Eigen::Index>(y.size()));
      Eigen::Map<Arr>(y.data(), x.size()) = (x > 0.0f).select(x, x.min(0.0f).exp() - 1.0f);
      break;
    }
    case OpKind::kSoftmax:
    case OpKind::kLogSoftmax: {
      const std::int64_t n = last_dim(node.shape);
      const std::int64_t rows = static_cast<std::int64_t>(y.size()) / n;
      const auto& x = in(0).value;
      for (std::int64_t r = 0; r < rows; ++r) {
        const float* xr = x.data() + r * n;
        float* yr = y.data() + r * n;
        const float mx = *std::max_element(xr, xr + n);
        double total = 0.0;
        for (std::int64_t j = 0; j < n; ++j) total += std::exp(static_cast<double>(xr[j] - mx));
        if (node.kind == OpKind::kSoftmax) {
          for (std::int64_t j = 0; j < n; ++j) {
            yr[j] = static_cast<float>(std::exp(static_cast<double>(xr[j] - mx)) / total);
          }
        } else {
          const double lse = std::log(total);
          for (std::int64_t j = 0; j < n; ++j) {
            yr[j] = static_cast<float>(static_cast<double>(xr[j] - mx) - lse);
          }
        }
      }
      break;
    }
    case OpKind::kLog:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(in(0).value[i]);
      break;
    case OpKind::kSum:
    case OpKind::kMean:
    case OpKind::kSquaredL2: {
      double acc = 0.0;
      for (float v : in(0).value) {
        acc += node.kind == OpKind::kSquaredL2 ? static_cast<double>(v) * v : v;
      }
      if (node.kind == OpKind::kMean) acc /= static_cast<double>(in(0).value.size());
      y[0] = static_cast<float>(acc);
      break;
    }
    case OpKind::kRowSum: {
      const std::int64_t n = last_dim(in(0).shape);
      for (std::size_t r = 0; r < y.size(); ++r) {
        double acc = 0.0;
        for (std::int64_t j = 0; j < n; ++j) acc += in(0).value[r * n + j];
        y[r] = static_cast<float>(acc);
      }
      break;
    }
    case OpKind::kConcat: {
      const auto out = split_axis(node.shape, a.axis);
      std::int64_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const Node& part = in(static_cast<int>(k));
        const auto s = split_axis(part.shape, a.axis);
        const std::int64_t chunk = s.extent * s.inner;
        for (std::int64_t o = 0; o < out.outer; ++o) {
          std::copy_n(part.value.data() + o * chunk, chunk,
                      y.data() + o * out.extent * out.inner + offset);
        }
        offset += chunk;
      }
      break;
    }
    case OpKind::kOneHot:
      for (std::size_t r = 0; r < a.indices.size(); ++r) {
        y[r * a.depth + a.indices[r]] = 1.0f;
      }
      break;
    case OpKind::kSlice: {
      const auto s = split_axis(in(0).shape, a.axis);
      const std::int64_t chunk = a.length * s.inner;
      for (std::int64_t o = 0; o < s.outer; ++o) {
        std::copy_n(in(0).value.data() + (o * s.extent + a.start) * s.inner, chunk,
                    y.data() + o * chunk);
      }
      break;
    }
    case OpKind::kTakeRows: {
      const std::int64_t row = numel(in(0).shape) / in(0).shape[0];
      for (std::size_t r = 0; r < a.indices.size(); ++r) {
        std::copy_n(in(0).value.data() + a.indices[r] * row, row, y.data() + r * row);
      }
      break;
    }
    case OpKind::kReshape:
    case OpKind::kStopGradient:
      y = in(0).value;
      break;
  }
}

void Graph::compute_backward(int id) {
  Node& node = nodes_[id];
  const OpAttrs& a = node.attrs;
  const std::vector<float>& dy = node.grad;

  // Gradient buffer of input i, or nullptr when it does not need one.
  auto gin = [&](int i) -> float* {
    Node& n = nodes_[node.inputs[i]];
    if (!n.requires_grad) return nullptr;
    if (n.grad.empty()) n.grad = BufferPool::local().take_zeroed(n.value.size());
    return n.grad.data();
  };
  auto val = [&](int i) -> const std::vector<float>& {
    return nodes_[node.inputs[i]].value;
  };
  auto shp = [&](int i) -> const Shape& { return nodes_[node.inputs[i]].shape; };
  const std::size_t n_out = dy.size();

  switch (node.kind) {
    case OpKind::kLeaf:
    case OpKind::kOneHot:
    case OpKind::kStopGradient:
      break;
    case OpKind::kMatMul: {
      const Shape& sa = shp(0);
      const Shape& sb = shp(1);
      CMapR dym(dy.data(), node.shape[0], node.shape[1]);
      if (float* da = gin(0)) {
        MapR(da, sa[0], sa[1]).noalias() += dym * CMapR(val(1).data(), sb[0], sb[1]).transpose();
      }
      if (float* db = gin(1)) {
        MapR(db, sb[0], sb[1]).noalias() += CMapR(val(0).data(), sa[0], sa[1]).transpose() * dym;
      }
      break;
    }
    case OpKind::kConv2d: {
      const ConvDims d = conv_dims(shp(0), shp(1), node.shape, a);
      conv2d_backward(d, val(0).data(), val(1).data(), dy.data(), gin(0), gin(1), gin(2));
      break;
    }
    case OpKind::kConvTranspose2d: {
      const ConvDims d = deconv_dims(shp(0), shp(1), node.shape, a);
      deconv_backward(d, val(0).data(), val(1).data(), dy.data(), gin(0), gin(1), gin(2));
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub: {
      if (float* da = gin(0)) {
        for (std::size_t i = 0; i < n_out; ++i) da[i] += dy[i];
      }
      if (float* db = gin(1)) {
        const float sign = node.kind == OpKind::kAdd ? 1.0f : -1.0f;
        for (std::size_t i = 0; i < n_out; ++i) db[i] += sign * dy[i];
      }
      break;
    }
    case OpKind::kMul: {
      if (float* da = gin(0)) {
        const auto& b = val(1);
        for (std::size_t i = 0; i < n_out; ++i) da[i] += dy[i] * b[i];
      }
      if (float* db = gin(1)) {
        const auto& av = val(0);
        for (std::size_t i = 0; i < n_out; ++i) db[i] += dy[i] * av[i];
      }
      break;
    }
    case OpKind::kScale:
      if (float* dx = gin(0)) {
        for (std::size_t i = 0; i < n_out; ++i) dx[i] += a.scalar * dy[i];
      }
      break;
    case OpKind::kAddBias: {
      if (float* dx = gin(0)) {
        for (std::size_t i = 0; i < n_out; ++i) dx[i] += dy[i];
      }
      if (float* db = gin(1)) {
        const std::int64_t n = last_dim(node.shape);
        const std::int64_t rows = static_cast<std::int64_t>(n_out) / n;
        add_column_sums(dy.data(), rows, n, db);
      }
      break;
    }
    case OpKind::kPermute:
      if (float* dx = gin(0)) {
        permute_copy(shp(0), a.shape, dy.data(), dx, true);
      }
      break;
    case OpKind::kElu:
      if (float* dx = gin(0)) {
        const auto& x = val(0);
        for (std::size_t i = 0; i < n_out; ++i) {
          dx[i] += dy[i] * (x[i] > 0.0f ? 1.0f : node.value[i] + 1.0f);
        }
      }
      break;
    case OpKind::kSoftmax:
      if (float* dx = gin(0)) {
        const std::int64_t n = last_dim(node.shape);
        const std::int64_t rows = static_cast<std::int64_t>(n_out) / n;
        for (std::int64_t r = 0; r < rows; ++r) {
          const float* yr = node.value.data() + r * n;
          const float* gr = dy.data() + r * n;
          double dot = 0.0;
          for (std::int64_t j = 0; j < n; ++j) dot += static_cast<double>(gr[j]) * yr[j];
          for (std::int64_t j = 0; j < n; ++j) {
            dx[r * n + j] += yr[j] * (gr[j] - static_cast<float>(dot));
          }
        }
      }
      break;
    case OpKind::kLogSoftmax:
      if (float* dx = gin(0)) {
        const std::int64_t n = last_dim(node.shape);
        const std::int64_t rows = static_cast<std::int64_t>(n_out) / n;
        for (std::int64_t r = 0; r < rows; ++r) {
          const float* yr = node.value.data() + r * n;
          const float* gr = dy.data() + r * n;
          double total = 0.0;
          for (std::int64_t j = 0; j < n; ++j) total += gr[j];
          for (std::int64_t j = 0; j < n; ++j) {
            dx[r * n + j] += gr[j] - std::exp(yr[j]) * static_cast<float>(total);
          }
        }
      }
      break;
    case OpKind::kLog:
      if (float* dx = gin(0)) {
        const auto& x = val(0);
        for (std::size_t i = 0; i < n_out; ++i) dx[i] += dy[i] / x[i];
      }
      break;
    case OpKind::kSum:
      if (float* dx = gin(0)) {
        const std::size_t n = val(0).size();
        for (std::size_t i = 0; i < n; ++i) dx[i] += dy[0];
      }
      break;
    case OpKind::kMean:
      if (float* dx = gin(0)) {
        const std::size_t n = val(0).size();
        const float g = dy[0] / static_cast<float>(n);
        for (std::size_t i = 0; i < n; ++i) dx[i] += g;
      }
      break;
    case OpKind::kSquaredL2:
      if (float* dx = gin(0)) {
        const auto& x = val(0);
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] += 2.0f * x[i] * dy[0];
      }
      break;
    case OpKind::kRowSum:
      if (float* dx = gin(0)) {
        const std::int64_t n = last_dim(shp(0));
        for (std::size_t r = 0; r < n_out; ++r) {
          for (std::int64_t j = 0; j < n; ++j) dx[r * n + j] += dy[r];
        }
      }
      break;
    case OpKind::kConcat: {
      const auto out = split_axis(node.shape, a.axis);
      std::int64_t offset = 0;
      for (std::size_t k = 0; k < node.inputs.size(); ++k) {
        const auto s = split_axis(shp(static_cast<int>(k)), a.axis);
        const std::int64_t chunk = s.extent * s.inner;
        if (float* dx = gin(static_cast<int>(k))) {
          for (std::int64_t o = 0; o < out.outer; ++o) {
            const float* src = dy.data() + o * out.extent * out.inner + offset;
            for (std::int64_t i = 0; i < chunk; ++i) dx[o * chunk + i] += src[i];
          }
        }
        offset += chunk;
      }
      break;
    }
    case OpKind::kSlice:
      if (float* dx = gin(0)) {
        const auto s = split_axis(shp(0), a.axis);
        const std::int64_t chunk = a.length * s.inner;
        for (std::int64_t o = 0; o < s.outer; ++o) {
          float* dst = dx + (o * s.extent + a.start) * s.inner;
          for (std::int64_t i = 0; i < chunk; ++i) dst[i] += dy[o * chunk + i];
        }
      }
      break;
    case OpKind::kTakeRows:
      if (float* dx = gin(0)) {
        const std::int64_t row = numel(shp(0)) / shp(0)[0];
        for (std::size_t r = 0; r < a.indices.size(); ++r) {
          float* dst = dx + a.indices[r] * row;
          for (std::int64_t i = 0; i < row; ++i) dst[i] += dy[r * row + i];
        }
      }
      break;
    case OpKind::kReshape:
      if (float* dx = gin(0)) {
        for (std::size_t i = 0; i < n_out; ++i) dx[i] += dy[i];
      }
      break;
  }
}

// --- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  Graph& g = graph_of("matmul", {&a, &b});
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_fail("matmul", "incompatible shapes " + shapes_str({&a.shape(), &b.shape()}));
  }
  return g.record(OpKind::kMatMul, {}, {a, b}, {a.dim(0), b.dim(1)});
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad) {
  Graph& g = graph_of("conv2d", {&x, &weight, &bias});
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 ||
      weight.dim(2) != x.dim(3) || weight.dim(0) != weight.dim(1) ||
      bias.dim(0) != weight.dim(3)) {
    shape_fail("conv2d", "incompatible shapes " +
                             shapes_str({&x.shape(), &weight.shape(), &bias.shape()}));
  }
  if (stride <= 0 || pad < 0) shape_fail("conv2d", "stride must be > 0 and pad >= 0");
  const int k = weight.dim(0);
  const int ho = conv_output_size(x.dim(1), k, stride, pad);
  const int wo = conv_output_size(x.dim(2), k, stride, pad);
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  return g.record(OpKind::kConv2d, std::move(attrs), {x, weight, bias},
                  {x.dim(0), ho, wo, weight.dim(3)});
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int stride, int pad,
                        int output_padding) {
  Graph& g = graph_of("conv_transpose2d", {&x, &weight, &bias});
  if (x.rank() != 4 || weight.rank() != 4 || bias.rank() != 1 ||
      weight.dim(0) != x.dim(3) || weight.dim(1) != weight.dim(2) ||
      bias.dim(0) != weight.dim(3)) {
    shape_fail("conv_transpose2d",
               "incompatible shapes " +
                   shapes_str({&x.shape(), &weight.shape(), &bias.shape()}));
  }
  if (stride <= 0 || pad < 0 || output_padding < 0 || output_padding >= stride) {
    shape_fail("conv_transpose2d", "need stride > 0, pad >= 0, 0 <= output_padding < stride");
  }
  const int k = weight.dim(1);
  const int ho = (x.dim(1) - 1) * stride - 2 * pad + k + output_padding;
  const int wo = (x.dim(2) - 1) * stride - 2 * pad + k + output_padding;
  if (ho <= 0 || wo <= 0) shape_fail("conv_transpose2d", "non-positive output extent");
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.pad = pad;
  attrs.output_padding = output_padding;
  return g.record(OpKind::kConvTranspose2d, std::move(attrs), {x, weight, bias},
                  {x.dim(0), ho, wo, weight.dim(3)});
}

Tensor add(const Tensor& a, const Tensor& b) {
  Graph& g = graph_of("add", {&a, &b});
  check_same_shape("add", a, b);
  return g.record(OpKind::kAdd, {}, {a, b}, a.shape());
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Graph& g = graph_of("sub", {&a, &b});
  check_same_shape("sub", a, b);
  return g.record(OpKind::kSub, {}, {a, b}, a.shape());
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Graph& g = graph_of("mul", {&a, &b});
  check_same_shape("mul", a, b);
  return g.record(OpKind::kMul, {}, {a, b}, a.shape());
}

Tensor scale(const Tensor& x, float factor) {
  Graph& g = graph_of("scale", {&x});
  OpAttrs attrs;
  attrs.scalar = factor;
  return g.record(OpKind::kScale, std::move(attrs), {x}, x.shape());
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  Graph& g = graph_of("add_bias", {&x, &bias});
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    shape_fail("add_bias", "incompatible shapes " + shapes_str({&x.shape(), &bias.shape()}));
  }
  return g.record(OpKind::kAddBias, {}, {x, bias}, x.shape());
}

Tensor elu(const Tensor& x) {
  return graph_of("elu", {&x}).record(OpKind::kElu, {}, {x}, x.shape());
}

Tensor softmax(const Tensor& x) {
  return graph_of("softmax", {&x}).record(OpKind::kSoftmax, {}, {x}, x.shape());
}

Tensor log_softmax(const Tensor& x) {
  return graph_of("log_softmax", {&x}).record(OpKind::kLogSoftmax, {}, {x}, x.shape());
}

Tensor log(const Tensor& x) {
  return graph_of("log", {&x}).record(OpKind::kLog, {}, {x}, x.shape());
}

Tensor sum(const Tensor& x) {
  return graph_of("sum", {&x}).record(OpKind::kSum, {}, {x}, {1});
}

Tensor row_sum(const Tensor& x) {
  Graph& g = graph_of("row_sum", {&x});
  if (x.rank() != 2) shape_fail("row_sum", "expected rank 2, got " + shape_str(x.shape()));
  return g.record(OpKind::kRowSum, {}, {x}, {x.dim(0)});
}

Tensor mean(const Tensor& x) {
  return graph_of("mean", {&x}).record(OpKind::kMean, {}, {x}, {1});
}

Tensor squared_l2(const Tensor& x) {
  return graph_of("squared_l2", {&x}).record(OpKind::kSquaredL2, {}, {x}, {1});
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  Graph& g = graph_of("concat", {&parts[0]});
  const Shape& first = parts[0].shape();
  if (axis < 0 || axis >= static_cast<int>(first.size())) {
    shape_fail("concat", "axis out of range for " + shape_str(first));
  }
  Shape out = first;
  out[axis] = 0;
  for (const Tensor& p : parts) {
    graph_of("concat", {&parts[0], &p});
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (static_cast<int>(i) != axis && s[i] != first[i]) ok = false;
    }
    if (!ok) shape_fail("concat", "incompatible shapes " + shapes_str({&first, &s}));
    out[axis] += s[axis];
  }
  OpAttrs attrs;
  attrs.axis = axis;
  return g.record(OpKind::kConcat, std::move(attrs), parts, std::move(out));
}

Tensor one_hot(Graph& graph, std::span<const int> indices, int depth) {
  if (depth <= 0 || indices.empty()) {
    shape_fail("one_hot", "need depth > 0 and at least one index");
  }
  for (int i : indices) {
    if (i < 0 || i >= depth) {
      throw ContractError("one_hot: index " + std::to_string(i) +
                          " outside [0, " + std::to_string(depth) + ")");
    }
  }
  OpAttrs attrs;
  attrs.depth = depth;
  attrs.indices.assign(indices.begin(), indices.end());
  return graph.record(OpKind::kOneHot, std::move(attrs), {},
                      {static_cast<int>(indices.size()), depth});
}

Tensor slice(const Tensor& x, int axis, int start, int length) {
  Graph& g = graph_of("slice", {&x});
  if (axis < 0 || axis >= x.rank() || start < 0 || length <= 0 ||
      start + length > x.dim(axis)) {
    shape_fail("slice", "range [" + std::to_string(start) + ", " +
                            std::to_string(start + length) + ") on axis " +
                            std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  Shape out = x.shape();
  out[axis] = length;
  OpAttrs attrs;
  attrs.axis = axis;
  attrs.start = start;
  attrs.length = length;
  return g.record(OpKind::kSlice, std::move(attrs), {x}, std::move(out));
}

Tensor take_rows(const Tensor& x, std::span<const int> rows) {
  Graph& g = graph_of("take_rows", {&x});
  if (rows.empty()) shape_fail("take_rows", "empty row list");
  for (int r : rows) {
    if (r < 0 || r >= x.dim(0)) {
      shape_fail("take_rows", "row " + std::to_string(r) + " outside " + shape_str(x.shape()));
    }
  }
  Shape out = x.shape();
  out[0] = static_cast<int>(rows.size());
  OpAttrs attrs;
  attrs.indices.assign(rows.begin(), rows.end());
  return g.record(OpKind::kTakeRows, std::move(attrs), {x}, std::move(out));
}

Tensor reshape(const Tensor& x, Shape shape) {
  Graph& g = graph_of("reshape", {&x});
  for (int d : shape) {
    if (d <= 0) shape_fail("reshape", "non-positive extent in " + shape_str(shape));
  }
  if (numel(shape) != x.size()) {
    shape_fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  return g.record(OpKind::kReshape, {}, {x}, std::move(shape));
}

Tensor permute(const Tensor& x, std::vector<int> perm) {
  Graph& g = graph_of("permute", {&x});
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  bool ok = static_cast<int>(perm.size()) == x.rank();
  for (int i = 0; ok && i < x.rank(); ++i) ok = sorted[i] == i;
  if (!ok) shape_fail("permute", "invalid axis order for " + shape_str(x.shape()));
  Shape out(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = x.dim(perm[i]);
  OpAttrs attrs;
  attrs.shape = std::move(perm);
  return g.record(OpKind::kPermute, std::move(attrs), {x}, std::move(out));
}

Tensor stop_gradient(const Tensor& x) {
  return graph_of("stop_gradient", {&x}).record(OpKind::kStopGradient, {}, {x}, x.shape());
}

Tensor apply_primitive(OpKind kind, std::span<const Tensor> in,
                       const OpAttrs& attrs) {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw ContractError(std::string(op_name(kind)) + ": expected " +
                          std::to_string(n) + " inputs, got " +
                          std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::kLeaf:
      throw ContractError("apply_primitive: leaves are created by Graph");
    case OpKind::kMatMul: need(2); return matmul(in[0], in[1]);
    case OpKind::kConv2d: need(3); return conv2d(in[0], in[1], in[2], attrs.stride, attrs.pad);
    case OpKind::kConvTranspose2d:
      need(3);
      return conv_transpose2d(in[0], in[1], in[2], attrs.stride, attrs.pad,
                              attrs.output_padding);
    case OpKind::kAdd: need(2); return add(in[0], in[1]);
    case OpKind::kSub: need(2); return sub(in[0], in[1]);
    case OpKind::kMul: need(2); return mul(in[0], in[1]);
    case OpKind::kScale: need(1); return scale(in[0], attrs.scalar);
    case OpKind::kAddBias: need(2); return add_bias(in[0], in[1]);
    case OpKind::kElu: need(1); return elu(in[0]);
    case OpKind::kSoftmax: need(1); return softmax(in[0]);
    case OpKind::kLogSoftmax: need(1); return log_softmax(in[0]);
    case OpKind::kLog: need(1); return log(in[0]);
    case OpKind::kSum: need(1); return sum(in[0]);
    case OpKind::kRowSum: need(1); return row_sum(in[0]);
    case OpKind::kMean: need(1); return mean(in[0]);
    case OpKind::kSquaredL2: need(1); return squared_l2(in[0]);
    case OpKind::kConcat:
      return concat(std::vector<Tensor>(in.begin(), in.end()), attrs.axis);
    case OpKind::kOneHot:
      need(1);
      return one_hot(*in[0].graph(), attrs.indices, attrs.depth);
    case OpKind::kSlice: need(1); return slice(in[0], attrs.axis, attrs.start, attrs.length);
    case OpKind::kTakeRows: need(1); return take_rows(in[0], attrs.indices);
    case OpKind::kReshape: need(1); return reshape(in[0], attrs.shape);
    case OpKind::kPermute: need(1); return permute(in[0], attrs.shape);
    case OpKind::kStopGradient: need(1); return stop_gradient(in[0]);
  }
  throw ContractError("apply_primitive: unknown op kind");
}

// --- shape helpers and oracles -------------------------------------------

int conv_output_size(int in, int kernel, int stride, int pad) {
  if (in <= 0 || kernel <= 0 || stride <= 0 || pad < 0) {
    throw ShapeError("conv_output_shape: arguments must be positive (pad >= 0)");
  }
  const int span = in + 2 * pad - kernel;
  if (span < 0) {
    throw ShapeError("conv_output_shape: kernel " + std::to_string(kernel) +
                     " larger than padded input " + std::to_string(in + 2 * pad));
  }
  return span / stride + 1;
}

Extent2d conv_output_shape(Extent2d input, int kernel, int stride, int pad) {
  return {conv_output_size(input.height, kernel, stride, pad),
          conv_output_size(input.width, kernel, stride, pad)};
}

std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<const double> point, double epsilon) {
  if (!(epsilon > 0.0)) throw ContractError("finite_difference_gradient: epsilon must be > 0");
  std::vector<double> p(point.begin(), point.end());
  std::vector<double> grad(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + epsilon;
    const double up = loss_fn(p);
    p[i] = orig - epsilon;
    const double down = loss_fn(p);
    p[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw DivergenceError("finite_difference_gradient: non-finite loss at coordinate " +
                            std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

std::vector<double> finite_difference_gradient(Graph& graph, const Tensor& loss,
                                               const Tensor& param,
                                               double epsilon) {
  if (loss.size() != 1) throw ContractError("finite_difference_gradient: loss must be scalar");
  std::span<float> values = graph.leaf_values(param);
  const std::vector<float> saved(values.begin(), values.end());
  auto fn = [&](std::span<const double> p) {
    for (std::size_t i = 0; i < p.size(); ++i) values[i] = static_cast<float>(p[i]);
    graph.replay();
    return static_cast<double>(loss.item());
  };
  std::vector<double> point(saved.begin(), saved.end());
  auto grad = finite_difference_gradient(fn, point, epsilon);
  std::copy(saved.begin(), saved.end(), values.begin());
  graph.replay();
  return grad;
}

}  // namespace curio
