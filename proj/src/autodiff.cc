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

#include "hypsep/autodiff.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hypsep/errors.h"

namespace hypsep::ad {

const Tensor& Var::value() const { return graph_->value(id_); }

const Tensor& BackwardContext::output() const { return graph_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t k) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs[k]].value;
}

bool BackwardContext::needs(std::size_t k) const {
  return graph_.nodes_[graph_.nodes_[node_].inputs[k]].requires_grad;
}

Tensor& BackwardContext::input_grad(std::size_t k) {
  const std::size_t id = graph_.nodes_[node_].inputs[k];
  Tensor& g = grads_[id];
  if (g.empty()) {
    const Tensor& v = graph_.nodes_[id].value;
    g = Tensor(v.rows(), v.cols());
  }
  return g;
}

Var Graph::constant(Tensor value) {
  if (!value.all_finite()) {
    throw NumericError("non-finite constant at node #" + std::to_string(nodes_.size()));
  }
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(const std::string& name) {
  if (bindings_ == nullptr) throw std::invalid_argument("unbound leaf '" + name + "': graph has no bindings");
  auto it = bindings_->find(name);
  if (it == bindings_->end()) throw std::invalid_argument("unbound leaf '" + name + "'");
  if (!it->second.all_finite()) throw NumericError("parameter '" + name + "' contains non-finite values");
  nodes_.push_back(Node{"parameter", it->second, {}, nullptr, name, true});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, Tensor value, std::vector<std::size_t> inputs,
                  Backward backward) {
  const std::size_t id = nodes_.size();
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by node #" + std::to_string(id) + " (" +
                       std::string(op) + ")");
  }
  bool needs_grad = false;
  for (std::size_t in : inputs) needs_grad = needs_grad || nodes_[in].requires_grad;
  nodes_.push_back(Node{op, std::move(value), std::move(inputs),
                        needs_grad ? std::move(backward) : nullptr, {}, needs_grad});
  return Var(this, id);
}

GradientSet Graph::gradient(Var output, const Tensor& seed) {
  const std::size_t out = output.id();
  if (!seed.same_shape(nodes_[out].value)) throw std::invalid_argument("seed shape does not match graph output");

  std::vector<Tensor> grads(nodes_.size());
  grads[out] = seed;
  for (std::size_t id = out + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || grads[id].empty()) continue;
    BackwardContext ctx(*this, id, grads[id], grads);
    node.backward(ctx);
  }

  GradientSet result;
  for (std::size_t id = 0; id <= out; ++id) {
    const Node& node = nodes_[id];
    if (node.parameter.empty()) continue;
    Tensor g = grads[id].empty() ? Tensor(node.value.rows(), node.value.cols()) : std::move(grads[id]);
    if (!g.all_finite()) throw NumericError("non-finite gradient for parameter '" + node.parameter + "'");
    auto [it, inserted] = result.try_emplace(node.parameter, std::move(g));
    if (!inserted) it->second += g;
  }
  return result;
}

GradientSet Graph::gradient(Var scalar_output) {
  if (scalar_output.value().size() != 1) throw std::invalid_argument("gradient without seed needs a scalar output");
  return gradient(scalar_output, Tensor::scalar(1.0));
}

Tensor evaluate(const GraphFn& build, const ParameterSet& bindings) {
  Graph g(&bindings);
  return build(g).value();
}

double finite_diff_check(const GraphFn& build, const ParameterSet& bindings, double step) {
  Graph g(&bindings);
  Var out = build(g);
  if (out.value().size() != 1) throw std::invalid_argument("finite_diff_check needs a scalar graph");
  const GradientSet analytic = g.gradient(out);

  ParameterSet probe = bindings;
  double worst = 0.0;
  for (const auto& [name, grad] : analytic) {
    Tensor& param = probe.at(name);
    double max_err = 0.0;
    double max_mag = 1e-12;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param[i];
      param[i] = saved + step;
      const double up = evaluate(build, probe).item();
      param[i] = saved - step;
      const double down = evaluate(build, probe).item();
      param[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      max_err = std::max(max_err, std::abs(numeric - grad[i]));
      max_mag = std::max({max_mag, std::abs(numeric), std::abs(grad[i])});
    }
    worst = std::max(worst, max_err / max_mag);
  }
  return worst;
}

}  // namespace hypsep::ad
