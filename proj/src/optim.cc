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

#include "hypsep/optim.h"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "hypsep/errors.h"

namespace hypsep::optim {
namespace {

void check_step_inputs(const Tensor& param, const Tensor& grad, const AdamState& state) {
  if (!param.same_shape(grad)) throw std::invalid_argument("optimizer: gradient shape does not match parameter");
  if (!param.same_shape(state.m) || !param.same_shape(state.v)) {
    throw std::invalid_argument("optimizer: state shape does not match parameter");
  }
  if (!grad.all_finite()) throw NumericError("optimizer: non-finite gradient");
}

// Updates the moments with `g` (already in whatever frame the caller uses)
// at flat offset `i` and returns the bias-corrected step direction.
double moment_update(AdamState& s, std::size_t i, double g) {
  const AdamHyper& h = s.hyper;
  s.m[i] = h.beta1 * s.m[i] + (1.0 - h.beta1) * g;
  s.v[i] = h.beta2 * s.v[i] + (1.0 - h.beta2) * g * g;
  const double m_hat = s.m[i] / (1.0 - std::pow(h.beta1, static_cast<double>(s.step)));
  const double v_hat = s.v[i] / (1.0 - std::pow(h.beta2, static_cast<double>(s.step)));
  return m_hat / (std::sqrt(v_hat) + h.eps);
}

}  // namespace

void adam_step(Tensor& param, const Tensor& grad, AdamState& state) {
  check_step_inputs(param, grad, state);
  ++state.step;
  for (std::size_t i = 0; i < param.size(); ++i) {
    param[i] -= state.hyper.lr * moment_update(state, i, grad[i]);
  }
}

std::vector<double> riemannian_gradient(std::span<const double> x, std::span<const double> grad, double c) {
  const double d = 1.0 - c * geometry::kernel::squared_norm(x);
  const double k = d * d / 4.0;
  std::vector<double> out(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) out[i] = k * grad[i];
  return out;
}

void riemannian_adam_step(Tensor& points, const Tensor& grad, AdamState& state, double c) {
  check_step_inputs(points, grad, state);
  const std::size_t dim = points.cols();
  for (std::size_t r = 0; r < points.rows(); ++r) {
    if (c * geometry::kernel::squared_norm(points.row(r)) >= 1.0) {
      throw std::invalid_argument("riemannian_adam_step: point is on or outside the ball boundary");
    }
  }
  ++state.step;
  std::vector<double> u(dim);
  std::vector<double> next(dim);
  for (std::size_t r = 0; r < points.rows(); ++r) {
    auto x = points.row(r);
    const auto rgrad = riemannian_gradient(x, grad.row(r), c);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      u[i] = -state.hyper.lr * moment_update(state, r * dim + i, rgrad[i]);
      norm2 += u[i] * u[i];
    }
    if (norm2 == 0.0) continue;
    geometry::kernel::expmap(x, u, c, next);
    geometry::kernel::project(next, c);
    std::copy(next.begin(), next.end(), x.begin());
  }
}

geometry::PoincarePoint riemannian_adam_step(const geometry::PoincarePoint& x, std::span<const double> grad,
                                             AdamState& state) {
  Tensor points(1, x.dim(), std::vector<double>(x.coords().begin(), x.coords().end()));
  Tensor g(1, grad.size(), std::vector<double>(grad.begin(), grad.end()));
  riemannian_adam_step(points, g, state, x.curvature().value());
  return geometry::PoincarePoint(points.values(), x.curvature());
}

PlateauSchedule::PlateauSchedule(double lr, int patience, double factor)
    : lr_(lr), best_(std::numeric_limits<double>::infinity()), patience_(patience), factor_(factor) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (patience < 1) throw std::invalid_argument("patience must be at least 1");
}

void PlateauSchedule::step(double val_loss) {
  if (val_loss < best_) {
    best_ = val_loss;
    counter_ = 0;
    return;
  }
  if (++counter_ >= patience_) {
    lr_ *= factor_;
    counter_ = 0;
  }
}

ParameterOptimizer::ParameterOptimizer(const ad::ParameterSet& params, AdamHyper hyper,
                                       std::set<std::string> ball_params, double curvature)
    : ball_params_(std::move(ball_params)), curvature_(curvature) {
  for (const auto& [name, value] : params) states_.emplace(name, AdamState(value.rows(), value.cols(), hyper));
}

void ParameterOptimizer::set_lr(double lr) {
  for (auto& [name, state] : states_) state.hyper.lr = lr;
}

void ParameterOptimizer::step(ad::ParameterSet& params, const ad::GradientSet& grads) {
  for (auto& [name, value] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    AdamState& state = states_.at(name);
    if (ball_params_.count(name) != 0) {
      riemannian_adam_step(value, g->second, state, curvature_);
    } else {
      adam_step(value, g->second, state);
    }
  }
}

}  // namespace hypsep::optim
