// Copyright 2026 The hypsep Authors
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

#pragma once

// Define-by-run reverse-mode differentiation.
//
// A Graph is a tape: every op evaluates eagerly, caches its output (and any
// local partials it needs), and appends a node. Nodes are created in
// topological order, so the backward sweep is a reverse walk of the tape.
// Leaves are either constants or parameters looked up by name in a
// ParameterSet ("bindings"); gradients come back keyed by the same names.

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "hypsep/tensor.h"

namespace hypsep::ad {

using ParameterSet = std::map<std::string, Tensor>;
using GradientSet = std::map<std::string, Tensor>;

class Graph;

class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t id() const { return id_; }
  Graph& graph() const { return *graph_; }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

class BackwardContext {
 public:
  const Tensor& grad() const { return grad_; }
  const Tensor& output() const;
  const Tensor& input(std::size_t k) const;
  bool needs(std::size_t k) const;
  // Gradient buffer for input k, zero-initialized on first access.
  Tensor& input_grad(std::size_t k);

 private:
  friend class Graph;
  BackwardContext(Graph& g, std::size_t node, const Tensor& grad, std::vector<Tensor>& grads)
      : graph_(g), node_(node), grad_(grad), grads_(grads) {}

  Graph& graph_;
  std::size_t node_;
  const Tensor& grad_;
  std::vector<Tensor>& grads_;
};

class Graph {
 public:
  using Backward = std::function<void(BackwardContext&)>;

  explicit Graph(const ParameterSet* bindings = nullptr) : bindings_(bindings) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Trainable leaf bound by name; throws std::invalid_argument if unbound.
  Var parameter(const std::string& name);

  // Appends an op node. Throws NumericError naming the node if `value`
  // contains a non-finite entry.
  Var record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
             Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse sweep from `output` seeded with `seed` (same shape as output).
  GradientSet gradient(Var output, const Tensor& seed);
  GradientSet gradient(Var scalar_output);

 private:
  friend class BackwardContext;

  struct Node {
    std::string_view op;
    Tensor value;
    std::vector<std::size_t> inputs;
    Backward backward;
    std::string parameter;  // non-empty for parameter leaves
    bool requires_grad = false;
  };

  const ParameterSet* bindings_;
  std::deque<Node> nodes_;
};

using GraphFn = std::function<Var(Graph&)>;

// Builds the graph against `bindings` and returns the output value.
Tensor evaluate(const GraphFn& build, const ParameterSet& bindings);

// Central-difference check of the reverse-mode gradient of a scalar graph.
// For each parameter tensor the error is
//   max_i |g_ad - g_fd| / max(max_i |g_ad|, max_i |g_fd|, 1e-12)
// and the worst value over all parameters is returned.
double finite_diff_check(const GraphFn& build, const ParameterSet& bindings, double step = 1e-6);

// ---- ops -----------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double k);
Var add_scalar(Var a, double k);
Var add_bias(Var a, Var bias);  // bias is 1 x cols, broadcast over rows
Var matmul(Var a, Var b);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
Var log(Var a);
Var exp(Var a);
Var abs(Var a);
Var clamp(Var a, double lo, double hi);
Var sum(Var a);
Var mean(Var a);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var slice_rows(Var a, std::size_t start, std::size_t count);
Var reshape(Var a, std::size_t rows, std::size_t cols);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

// Row-wise Poincare-ball ops (each row is one point / tangent vector).
// Ball-valued outputs are projected to the (1 - eps) ball.
Var exp0_rows(Var v, double c);
Var log0_rows(Var y, double c);
Var mobius_add_rows(Var x, Var y, double c);
Var conformal_factor_rows(Var x, double c);  // N x 1

enum class MlrMode { kHyperbolic, kEuclidean };

// z: N x L embeddings, p and a: K x L hyperplane offsets and normals.
// Returns N x K logits.
Var mlr_logits(Var z, Var p, Var a, double c, MlrMode mode);

}  // namespace hypsep::ad
