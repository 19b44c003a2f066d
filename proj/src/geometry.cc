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

#include "hypsep/geometry.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hypsep/errors.h"

namespace hypsep::geometry {
namespace kernel {
namespace {

// Per-thread scratch for the VJP kernels; avoids heap traffic in hot loops.
std::span<double> scratch(std::size_t n, std::size_t slot) {
  thread_local std::vector<double> buffers[4];
  auto& b = buffers[slot];
  if (b.size() < n) b.resize(n);
  return {b.data(), n};
}

// tanh(x) / x
double tanh_ratio(double x) {
  if (x < 1e-4) return 1.0 - x * x / 3.0;
  return std::tanh(x) / x;
}

// (x sech^2 x - tanh x) / x^3
double tanh_ratio_slope(double x) {
  if (x < 1e-3) return -2.0 / 3.0 + 8.0 * x * x / 15.0;
  const double ch = std::cosh(x);
  const double sech2 = std::isfinite(ch) ? 1.0 / (ch * ch) : 0.0;
  return (x * sech2 - std::tanh(x)) / (x * x * x);
}

// atanh(x) / x
double atanh_ratio(double x) {
  if (x < 1e-4) return 1.0 + x * x / 3.0;
  return std::atanh(x) / x;
}

// (x / (1 - x^2) - atanh x) / x^3
double atanh_ratio_slope(double x) {
  if (x < 1e-3) return 2.0 / 3.0 + 4.0 * x * x / 5.0;
  return (x / (1.0 - x * x) - std::atanh(x)) / (x * x * x);
}

}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double max_norm(double c) { return (1.0 - kBallEpsilon) / std::sqrt(c); }

bool project(std::span<double> x, double c) {
  const double limit = max_norm(c);
  const double n = std::sqrt(squared_norm(x));
  if (n <= limit) return false;
  const double scale = limit / n;
  for (double& v : x) v *= scale;
  return true;
}

void mobius_add(std::span<const double> x, std::span<const double> y, double c,
                std::span<double> out) {
  const double xy = dot(x, y);
  const double x2 = squared_norm(x);
  const double y2 = squared_norm(y);
  const double alpha = 1.0 + 2.0 * c * xy + c * y2;
  const double beta = 1.0 - c * x2;
  const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (alpha * x[i] + beta * y[i]) / den;
}

void mobius_add_vjp(std::span<const double> x, std::span<const double> y, double c,
                    std::span<const double> g_out, std::span<double> gx,
                    std::span<double> gy) {
  const std::size_t n = x.size();
  const double xy = dot(x, y);
  const double x2 = squared_norm(x);
  const double y2 = squared_norm(y);
  const double alpha = 1.0 + 2.0 * c * xy + c * y2;
  const double beta = 1.0 - c * x2;
  const double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;

  // w = num / den, num = alpha x + beta y
  double g_dot_num = 0.0;
  double gn_x = 0.0;
  double gn_y = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double num_i = alpha * x[i] + beta * y[i];
    g_dot_num += g_out[i] * num_i;
    gn_x += g_out[i] * x[i];
    gn_y += g_out[i] * y[i];
  }
  gn_x /= den;
  gn_y /= den;
  const double g_den = -g_dot_num / (den * den);

  for (std::size_t i = 0; i < n; ++i) {
    const double gnum = g_out[i] / den;
    // d alpha/dx = 2c y, d beta/dx = -2c x, d den/dx = 2c y + 2c^2 |y|^2 x
    gx[i] += alpha * gnum + 2.0 * c * y[i] * gn_x - 2.0 * c * x[i] * gn_y +
             g_den * (2.0 * c * y[i] + 2.0 * c * c * y2 * x[i]);
    // d alpha/dy = 2c x + 2c y, d den/dy = 2c x + 2c^2 |x|^2 y
    gy[i] += beta * gnum + (2.0 * c * x[i] + 2.0 * c * y[i]) * gn_x +
             g_den * (2.0 * c * x[i] + 2.0 * c * c * x2 * y[i]);
  }
}

void exp0(std::span<const double> v, double c, std::span<double> out) {
  const double sc = std::sqrt(c);
  const double s = tanh_ratio(sc * std::sqrt(squared_norm(v)));
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
}

void exp0_vjp(std::span<const double> v, double c, std::span<const double> g_out,
              std::span<double> gv) {
  const double sc = std::sqrt(c);
  const double x = sc * std::sqrt(squared_norm(v));
  const double s = tanh_ratio(x);
  // d(s(|v|) v) = s I + (s'(|v|) / |v|) v v^T,  s'(n)/n = c * slope(x)
  const double k = c * tanh_ratio_slope(x) * dot(g_out, v);
  for (std::size_t i = 0; i < v.size(); ++i) gv[i] += s * g_out[i] + k * v[i];
}

void log0(std::span<const double> y, double c, std::span<double> out) {
  const double sc = std::sqrt(c);
  const double s = atanh_ratio(sc * std::sqrt(squared_norm(y)));
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = s * y[i];
}

void log0_vjp(std::span<const double> y, double c, std::span<const double> g_out,
              std::span<double> gy) {
  const double sc = std::sqrt(c);
  const double x = sc * std::sqrt(squared_norm(y));
  const double s = atanh_ratio(x);
  const double k = c * atanh_ratio_slope(x) * dot(g_out, y);
  for (std::size_t i = 0; i < y.size(); ++i) gy[i] += s * g_out[i] + k * y[i];
}

void expmap(std::span<const double> x, std::span<const double> u, double c,
            std::span<double> out) {
  const std::size_t n = x.size();
  const double lambda = conformal_factor(x, c);
  auto step = scratch(n, 0);
  for (std::size_t i = 0; i < n; ++i) step[i] = 0.5 * lambda * u[i];
  exp0(step, c, step);
  project(step, c);
  mobius_add(x, step, c, out);
}

double conformal_factor(std::span<const double> x, double c) {
  return 2.0 / (1.0 - c * squared_norm(x));
}

double distance(std::span<const double> x, std::span<const double> y, double c) {
  const std::size_t n = x.size();
  auto neg_x = scratch(n, 0);
  auto w = scratch(n, 1);
  for (std::size_t i = 0; i < n; ++i) neg_x[i] = -x[i];
  mobius_add(neg_x, y, c, w);
  const double sc = std::sqrt(c);
  const double arg = std::min(sc * std::sqrt(squared_norm(w)), 1.0 - 1e-16);
  return 2.0 / sc * std::atanh(arg);
}

double mlr_logit(std::span<const double> z, std::span<const double> p,
                 std::span<const double> a, double c) {
  const double sc = std::sqrt(c);
  const double p2 = squared_norm(p);
  const double z2 = squared_norm(z);
  const double pz = dot(p, z);
  const double na = std::sqrt(squared_norm(a));
  // w = (-p) (+) z, expanded so no buffer is needed.
  const double alpha = 1.0 - 2.0 * c * pz + c * z2;
  const double beta = 1.0 - c * p2;
  const double den = 1.0 - 2.0 * c * pz + c * c * p2 * z2;
  const double wa = (-alpha * dot(p, a) + beta * dot(z, a)) / den;
  const double w2 = (alpha * alpha * p2 - 2.0 * alpha * beta * pz + beta * beta * z2) / (den * den);
  const double u = 2.0 * sc * wa / ((1.0 - c * w2) * na);
  const double lambda_p = 2.0 / beta;
  return lambda_p * na / sc * std::asinh(u);
}

void mlr_logit_vjp(std::span<const double> z, std::span<const double> p,
                   std::span<const double> a, double c, double g_out,
                   std::span<double> gz, std::span<double> gp, std::span<double> ga) {
  const std::size_t n = z.size();
  const double sc = std::sqrt(c);
  auto neg_p = scratch(n, 1);
  auto w = scratch(n, 2);
  auto gw = scratch(n, 3);
  for (std::size_t i = 0; i < n; ++i) neg_p[i] = -p[i];
  mobius_add(neg_p, z, c, w);

  const double p2 = squared_norm(p);
  const double w2 = squared_norm(w);
  const double s = dot(w, a);
  const double na = std::sqrt(squared_norm(a));
  const double d = 1.0 - c * w2;
  const double beta = 1.0 - c * p2;
  const double lambda_p = 2.0 / beta;
  const double u = 2.0 * sc * s / (d * na);
  const double scale = lambda_p * na / sc;
  const double asinh_u = std::asinh(u);
  const double d_logit_du = g_out * scale / std::sqrt(1.0 + u * u);

  // du/dw = (2 sqrt(c) / |a|) (a / d + 2 c s w / d^2)
  for (std::size_t i = 0; i < n; ++i) {
    gw[i] = d_logit_du * (2.0 * sc / na) * (a[i] / d + 2.0 * c * s * w[i] / (d * d));
  }
  // gp collects d/d(-p) first, then flips sign.
  auto g_negp = scratch(n, 0);
  std::fill(g_negp.begin(), g_negp.end(), 0.0);
  mobius_add_vjp(neg_p, z, c, gw, g_negp, gz);

  const double d_lambda = 4.0 * c / (beta * beta);  // d lambda_p / dp = d_lambda * p
  for (std::size_t i = 0; i < n; ++i) {
    gp[i] += -g_negp[i] + g_out * asinh_u * (na / sc) * d_lambda * p[i];
    const double du_da = 2.0 * sc / d * (w[i] / na - s * a[i] / (na * na * na));
    ga[i] += g_out * asinh_u * lambda_p / sc * a[i] / na + d_logit_du * du_da;
  }
}

double euclidean_logit(std::span<const double> z, std::span<const double> p,
                       std::span<const double> a) {
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - p[i]) * a[i];
  return 4.0 * s;
}

}  // namespace kernel

namespace {

void require_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite coordinate");
  }
}

void require_same_ball(const PoincarePoint& x, const PoincarePoint& y) {
  if (!(x.curvature() == y.curvature())) throw std::invalid_argument("curvature mismatch");
  if (x.dim() != y.dim()) throw std::invalid_argument("dimension mismatch");
}

}  // namespace

Curvature::Curvature(double c) : c_(c), sqrt_c_(std::sqrt(c)) {
  if (!(c > 0.0) || !std::isfinite(c)) {
    throw std::invalid_argument("curvature magnitude must be positive and finite");
  }
}

PoincarePoint::PoincarePoint(std::vector<double> coords, Curvature curvature)
    : coords_(std::move(coords)), curvature_(curvature) {
  require_finite(coords_, "PoincarePoint");
  if (curvature_.value() * kernel::squared_norm(coords_) >= 1.0) {
    throw std::invalid_argument("point is not strictly inside the Poincare ball");
  }
}

PoincarePoint PoincarePoint::origin(std::size_t dim, Curvature curvature) {
  return PoincarePoint(std::vector<double>(dim, 0.0), curvature);
}

double PoincarePoint::norm() const { return std::sqrt(kernel::squared_norm(coords_)); }

PoincarePoint PoincarePoint::operator-() const {
  std::vector<double> neg(coords_.size());
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -coords_[i];
  return PoincarePoint(std::move(neg), curvature_);
}

Hyperplane::Hyperplane(PoincarePoint offset, std::vector<double> normal)
    : p(std::move(offset)), a(std::move(normal)) {
  if (a.size() != p.dim()) throw std::invalid_argument("hyperplane normal dimension mismatch");
  require_finite(a, "Hyperplane normal");
  if (std::sqrt(kernel::squared_norm(a)) < kMinNormalNorm) {
    throw std::invalid_argument("degenerate hyperplane: |a| is zero");
  }
}

EuclideanHyperplane::EuclideanHyperplane(std::vector<double> offset, std::vector<double> normal)
    : p(std::move(offset)), a(std::move(normal)) {
  if (a.size() != p.size()) throw std::invalid_argument("hyperplane normal dimension mismatch");
  require_finite(p, "EuclideanHyperplane offset");
  require_finite(a, "EuclideanHyperplane normal");
  if (std::sqrt(kernel::squared_norm(a)) < kMinNormalNorm) {
    throw std::invalid_argument("degenerate hyperplane: |a| is zero");
  }
}

PoincarePoint mobius_add(const PoincarePoint& x, const PoincarePoint& y) {
  require_same_ball(x, y);
  const double c = x.curvature().value();
  std::vector<double> out(x.dim());
  kernel::mobius_add(x.coords(), y.coords(), c, out);
  return project_to_ball(out, x.curvature());
}

double conformal_factor(const PoincarePoint& x) {
  return kernel::conformal_factor(x.coords(), x.curvature().value());
}

double distance(const PoincarePoint& x, const PoincarePoint& y) {
  require_same_ball(x, y);
  return kernel::distance(x.coords(), y.coords(), x.curvature().value());
}

PoincarePoint exp0(const TangentVector& v, Curvature curvature) {
  require_finite(v.coords, "exp0");
  std::vector<double> out(v.coords.size());
  kernel::exp0(v.coords, curvature.value(), out);
  return project_to_ball(out, curvature);
}

TangentVector log0(const PoincarePoint& y) {
  TangentVector out{std::vector<double>(y.dim())};
  kernel::log0(y.coords(), y.curvature().value(), out.coords);
  return out;
}

PoincarePoint project_to_ball(std::span<const double> x, Curvature curvature) {
  require_finite(x, "project_to_ball");
  std::vector<double> out(x.begin(), x.end());
  kernel::project(out, curvature.value());
  return PoincarePoint(std::move(out), curvature);
}

double certainty_score(const PoincarePoint& z) {
  const double cz2 = z.curvature().value() * kernel::squared_norm(z.coords());
  return std::log((1.0 + cz2) / (1.0 - cz2));
}

double origin_distance(const PoincarePoint& z) {
  return 2.0 / z.curvature().sqrt_c() * std::atanh(z.normalized_norm());
}

std::vector<double> mlr_logits(const PoincarePoint& z, std::span<const Hyperplane> planes) {
  std::vector<double> logits;
  logits.reserve(planes.size());
  for (const auto& h : planes) {
    require_same_ball(z, h.p);
    logits.push_back(kernel::mlr_logit(z.coords(), h.p.coords(), h.a, z.curvature().value()));
  }
  return logits;
}

std::vector<double> mlr_logits(std::span<const double> z,
                               std::span<const EuclideanHyperplane> planes) {
  require_finite(z, "mlr_logits");
  std::vector<double> logits;
  logits.reserve(planes.size());
  for (const auto& h : planes) {
    if (h.p.size() != z.size()) throw std::invalid_argument("dimension mismatch");
    logits.push_back(kernel::euclidean_logit(z, h.p, h.a));
  }
  return logits;
}

}  // namespace hypsep::geometry
