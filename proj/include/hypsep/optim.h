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

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hypsep/autodiff.h"
#include "hypsep/geometry.h"
#include "hypsep/tensor.h"

namespace hypsep::optim {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t rows, std::size_t cols, AdamHyper hyper)
      : m(rows, cols), v(rows, cols), hyper(hyper) {}

  Tensor m;
  Tensor v;
  long step = 0;
  AdamHyper hyper;
};

// Bias-corrected ADAM. Throws on shape mismatch or a non-finite gradient.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state);

// ((1 - c|x|^2)^2 / 4) g: the Euclidean gradient rescaled by the inverse
// of the ball metric at x.
std::vector<double> riemannian_gradient(std::span<const double> x, std::span<const double> grad, double c);

// Riemannian ADAM on a K x L tensor whose rows are ball points. Moments are
// kept in the origin tangent frame (no parallel transport); each row moves
// by the exponential map at its current position and is then projected.
void riemannian_adam_step(Tensor& points, const Tensor& grad, AdamState& state, double c);

geometry::PoincarePoint riemannian_adam_step(const geometry::PoincarePoint& x, std::span<const double> grad,
                                             AdamState& state);

// Halves the learning rate after `patience` epochs without a strict
// improvement of the validation loss.
class PlateauSchedule {
 public:
  explicit PlateauSchedule(double lr, int patience = 10, double factor = 0.5);

  void step(double val_loss);

  double lr() const { return lr_; }
  double best() const { return best_; }
  int epochs_since_improvement() const { return counter_; }

 private:
  double lr_;
  double best_;
  int counter_ = 0;
  int patience_;
  double factor_;
};

// Owns one AdamState per named parameter; routes the names in `ball_params`
// through the Riemannian update.
class ParameterOptimizer {
 public:
  ParameterOptimizer(const ad::ParameterSet& params, AdamHyper hyper, std::set<std::string> ball_params,
                     double curvature);

  void set_lr(double lr);
  void step(ad::ParameterSet& params, const ad::GradientSet& grads);

 private:
  std::map<std::string, AdamState> states_;
  std::set<std::string> ball_params_;
  double curvature_;
};

}  // namespace hypsep::optim
