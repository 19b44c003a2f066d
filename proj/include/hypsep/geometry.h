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

// Poincare-ball primitives. Two layers:
//   * `kernel::` works on raw spans with a scalar curvature and does no
//     validation; the autodiff ops and the optimizers call it in hot loops.
//   * The typed API (Curvature, PoincarePoint, ...) validates its inputs and
//     is what library users and tests should reach for.
//
// The ball of curvature -c is {x : c |x|^2 < 1}. Every ball-valued result of
// the typed API passes through project_to_ball.

#include <cstddef>
#include <span>
#include <vector>

namespace hypsep::geometry {

// Relative margin kept from the boundary by project_to_ball.
inline constexpr double kBallEpsilon = 1e-5;
// Normals shorter than this are a degenerate (untrainable) hyperplane.
inline constexpr double kMinNormalNorm = 1e-12;

namespace kernel {

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);

// (1 - eps) / sqrt(c)
double max_norm(double c);

// Rescales x in place onto the (1 - eps) sphere if it lies beyond it.
// Returns true when x was rescaled.
bool project(std::span<double> x, double c);

void mobius_add(std::span<const double> x, std::span<const double> y, double c,
                std::span<double> out);
// Accumulates d<g_out, x (+) y>/dx into gx and d/dy into gy.
void mobius_add_vjp(std::span<const double> x, std::span<const double> y, double c,
                    std::span<const double> g_out, std::span<double> gx,
                    std::span<double> gy);

void exp0(std::span<const double> v, double c, std::span<double> out);
void exp0_vjp(std::span<const double> v, double c, std::span<const double> g_out,
              std::span<double> gv);
void log0(std::span<const double> y, double c, std::span<double> out);
void log0_vjp(std::span<const double> y, double c, std::span<const double> g_out,
              std::span<double> gy);

// Exponential map at an arbitrary base point: x (+) exp0(lambda_x u / 2).
void expmap(std::span<const double> x, std::span<const double> u, double c,
            std::span<double> out);

double conformal_factor(std::span<const double> x, double c);
double distance(std::span<const double> x, std::span<const double> y, double c);

// Signed hyperbolic MLR logit of z against the hyperplane (p, a).
double mlr_logit(std::span<const double> z, std::span<const double> p,
                 std::span<const double> a, double c);
void mlr_logit_vjp(std::span<const double> z, std::span<const double> p,
                   std::span<const double> a, double c, double g_out,
                   std::span<double> gz, std::span<double> gp, std::span<double> ga);

// 4 <z - p, a>, the c -> 0 limit of mlr_logit.
double euclidean_logit(std::span<const double> z, std::span<const double> p,
                       std::span<const double> a);

}  // namespace kernel

class Curvature {
 public:
  explicit Curvature(double c);

  double value() const { return c_; }
  double sqrt_c() const { return sqrt_c_; }
  double radius() const { return 1.0 / sqrt_c_; }

  friend bool operator==(const Curvature&, const Curvature&) = default;

 private:
  double c_;
  double sqrt_c_;
};

class PoincarePoint {
 public:
  // Throws std::invalid_argument unless c |coords|^2 < 1, NumericError on
  // non-finite coordinates.
  PoincarePoint(std::vector<double> coords, Curvature curvature);

  static PoincarePoint origin(std::size_t dim, Curvature curvature);

  std::span<const double> coords() const { return coords_; }
  const Curvature& curvature() const { return curvature_; }
  std::size_t dim() const { return coords_.size(); }
  double norm() const;
  // sqrt(c) |x|, in [0, 1).
  double normalized_norm() const { return curvature_.sqrt_c() * norm(); }

  PoincarePoint operator-() const;

 private:
  std::vector<double> coords_;
  Curvature curvature_;
};

struct TangentVector {
  std::vector<double> coords;
};

struct Hyperplane {
  Hyperplane(PoincarePoint offset, std::vector<double> normal);

  PoincarePoint p;
  std::vector<double> a;
};

struct EuclideanHyperplane {
  EuclideanHyperplane(std::vector<double> offset, std::vector<double> normal);

  std::vector<double> p;
  std::vector<double> a;
};

PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y);
double conformal_factor(const PoincarePoint& x);
double distance(const PoincarePoint& x, const PoincarePoint& y);
PoincarePoint exp0(const TangentVector& v, Curvature curvature);
TangentVector log0(const PoincarePoint& y);
PoincarePoint project_to_ball(std::span<const double> x, Curvature curvature);

// log((1 + c|z|^2) / (1 - c|z|^2)); monotone in |z| like d_c(0, z).
double certainty_score(const PoincarePoint& z);
// d_c(0, z) = (2 / sqrt c) atanh(sqrt(c) |z|).
double origin_distance(const PoincarePoint& z);

std::vector<double> mlr_logits(const PoincarePoint& z, std::span<const Hyperplane> planes);
std::vector<double> mlr_logits(std::span<const double> z,
                               std::span<const EuclideanHyperplane> planes);

}  // namespace hypsep::geometry
