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

// Minimal define-by-run reverse-mode automatic differentiation over dense
// float32 tensors.
//
// A Graph records every primitive applied to its tensors, in insertion
// order, so the insertion order is also a valid topological order. Learnable
// state lives in Parameter objects which outlive any graph; binding a
// Parameter into a graph creates a leaf whose gradient is accumulated back
// into Parameter::grad on every backward() call.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <string>
#include <unordered_map>
#include <vector>

namespace curio {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Learnable array with a persistent gradient buffer.
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string name, Shape shape);

  void zero_grad();
};

enum class GradMode { kEnabled, kDisabled };

enum class OpKind {
  kLeaf,
  kMatMul,
  kConv2d,
  kConvTranspose2d,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddBias,
  kElu,
  kSoftmax,
  kLogSoftmax,
  kLog,
  kSum,
  kRowSum,
  kMean,
  kSquaredL2,
  kConcat,
  kOneHot,
  kSlice,
  kTakeRows,
  kReshape,
  kPermute,
  kStopGradient,
};

std::string_view op_name(OpKind kind);

/// Attributes consumed by the primitives; each op reads only the fields it
/// documents.
struct OpAttrs {
  int stride = 1;
  int pad = 0;
  int output_padding = 0;
  int axis = 0;
  int start = 0;
  int length = 0;
  int depth = 0;
  float scalar = 1.0f;
  std::vector<int> indices;
  Shape shape;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  int dim(int axis) const;
  int rank() const;
  std::int64_t size() const;
  std::span<const float> values() const;
  /// Empty when no gradient has reached this tensor.
  std::span<const float> grad() const;
  float item() const;
  bool requires_grad() const;

  Graph* graph() const { return graph_; }
  int id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

class Graph {
 public:
  explicit Graph(GradMode mode = GradMode::kEnabled);
  ~Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  GradMode mode() const { return mode_; }

  /// Leaf that never receives a gradient.
  Tensor constant(Shape shape, std::vector<float> values);
  /// Leaf that accumulates its own gradient inside the graph.
  Tensor variable(Shape shape, std::vector<float> values);
  /// Leaf mirroring `param`; gradients accumulate into param.grad. Binding the
  /// same parameter twice returns the same tensor.
  Tensor bind(Parameter& param);

  /// Reverse sweep from a [1]-shaped loss. Intermediate gradients are reset
  /// on every call; leaf and parameter gradients accumulate.
  void backward(const Tensor& loss);

  /// Clears gradients of graph-owned variable leaves.
  void zero_grad();

  /// Recomputes every non-leaf node from its recorded inputs.
  void replay();

  /// Mutable access to a leaf's values (for perturbation oracles).
  std::span<float> leaf_values(const Tensor& leaf);

  std::size_t size() const { return nodes_.size(); }

  /// Records one primitive. Used by the op functions; validates graph
  /// membership but not shapes.
  Tensor record(OpKind kind, OpAttrs attrs, std::vector<Tensor> inputs,
                Shape out_shape);

 private:
  friend class Tensor;

  struct Node {
    OpKind kind = OpKind::kLeaf;
    OpAttrs attrs;
    Shape shape;
    std::vector<int> inputs;
    std::vector<float> value;
    std::vector<float> grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
  };

  int push_leaf(Shape shape, std::vector<float> values, bool requires_grad,
                Parameter* param);
  void compute_forward(Node& node);
  void compute_backward(int id);

  GradMode mode_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> bound_;
};

// --- primitives -----------------------------------------------------------

/// [M,K] x [K,N] -> [M,N].
Tensor matmul(const Tensor& a, const Tensor& b);
// Convolutions use channels-last (NHWC) layout.

/// x [B,H,W,C], weight [k,k,C,O], bias [O] -> [B,Ho,Wo,O].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int pad);
/// x [B,H,W,C], weight [C,k,k,O], bias [O] -> [B,Ho,Wo,O] with
/// Ho = (H-1)*stride - 2*pad + k + output_padding.
Tensor conv_transpose2d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, int stride, int pad,
                        int output_padding);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
/// x [..., N] + bias [N] broadcast over every leading dimension. The only
/// broadcasting op.
Tensor add_bias(const Tensor& x, const Tensor& bias);
/// Exponential linear unit with alpha = 1.
Tensor elu(const Tensor& x);
/// Row-wise over the last dimension.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);
Tensor log(const Tensor& x);
/// Sum of all elements -> [1].
Tensor sum(const Tensor& x);
/// [B,N] -> [B].
Tensor row_sum(const Tensor& x);
/// Mean of all elements -> [1].
Tensor mean(const Tensor& x);
/// Sum of squares of all elements -> [1].
Tensor squared_l2(const Tensor& x);
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Constant [B, depth] one-hot rows.
Tensor one_hot(Graph& graph, std::span<const int> indices, int depth);
Tensor slice(const Tensor& x, int axis, int start, int length);
/// Gathers rows of the leading axis; repeated indices accumulate gradient.
Tensor take_rows(const Tensor& x, std::span<const int> rows);
Tensor reshape(const Tensor& x, Shape shape);
/// Reorders axes: output axis i is input axis perm[i].
Tensor permute(const Tensor& x, std::vector<int> perm);
/// Identity forward, blocks gradient.
Tensor stop_gradient(const Tensor& x);

/// Generic entry point over the primitives above. `one_hot` ignores inputs
/// except to pick the graph and reads attrs.indices / attrs.depth.
Tensor apply_primitive(OpKind kind, std::span<const Tensor> inputs,
                       const OpAttrs& attrs = {});

// --- shape helpers and oracles -------------------------------------------

/// floor((in + 2*pad - kernel) / stride) + 1; throws ShapeError when the
/// result or any argument is non-positive.
int conv_output_size(int in, int kernel, int stride, int pad);

struct Extent2d {
  int height;
  int width;
  bool operator==(const Extent2d&) const = default;
};

Extent2d conv_output_shape(Extent2d input, int kernel, int stride, int pad);

/// Central differences (f(p+e) - f(p-e)) / 2e for every coordinate of
/// `point`. Throws DivergenceError if any evaluation is non-finite.
std::vector<double> finite_difference_gradient(
    const std::function<double(std::span<const double>)>& loss_fn,
    std::span<const double> point, double epsilon);

/// Same estimate taken directly on a recorded float graph: perturbs the leaf
/// `param`, replays the graph and reads `loss`. Leaves the graph unchanged.
/// Float rounding limits its accuracy to roughly 1e-7 * |loss| / epsilon.
std::vector<double> finite_difference_gradient(Graph& graph,
                                               const Tensor& loss,
                                               const Tensor& param,
                                               double epsilon);

}  // namespace curio
