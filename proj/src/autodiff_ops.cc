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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hypsep/autodiff.h"
#include "hypsep/geometry.h"

namespace hypsep::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap as_matrix(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("vars belong to different graphs");
  return a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
}

// Elementwise unary op with derivative expressed through (x, y).
template <typename F, typename D>
Var unary(Var a, std::string_view name, F f, D dfdx) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return a.graph().record(name, std::move(y), {a.id()}, [dfdx](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * dfdx(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y += b.value();
  return g.record("add", std::move(y), {a.id(), b.id()}, [](BackwardContext& ctx) {
    if (ctx.needs(0)) ctx.input_grad(0) += ctx.grad();
    if (ctx.needs(1)) ctx.input_grad(1) += ctx.grad();
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] - bv[i];
  return g.record("sub", std::move(y), {a.id(), b.id()}, [](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    if (ctx.needs(0)) ctx.input_grad(0) += gr;
    if (ctx.needs(1)) {
      Tensor& gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < gr.size(); ++i) gb[i] -= gr[i];
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y(av.rows(), av.cols());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] * bv[i];
  return g.record("mul", std::move(y), {a.id(), b.id()}, [](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    if (ctx.needs(0)) {
      const Tensor& bv = ctx.input(1);
      Tensor& ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < gr.size(); ++i) ga[i] += gr[i] * bv[i];
    }
    if (ctx.needs(1)) {
      const Tensor& av = ctx.input(0);
      Tensor& gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < gr.size(); ++i) gb[i] += gr[i] * av[i];
    }
  });
}

Var scale(Var a, double k) {
  return unary(a, "scale", [k](double x) { return k * x; }, [k](double, double) { return k; });
}

Var add_scalar(Var a, double k) {
  return unary(a, "add_scalar", [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

Var add_bias(Var a, Var bias) {
  Graph& g = same_graph(a, bias);
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != av.cols()) throw std::invalid_argument("add_bias: bias must be 1 x cols");
  Tensor y = av;
  for (std::size_t r = 0; r < y.rows(); ++r) {
    auto row = y.row(r);
    for (std::size_t c = 0; c < y.cols(); ++c) row[c] += bv[c];
  }
  return g.record("add_bias", std::move(y), {a.id(), bias.id()}, [](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    if (ctx.needs(0)) ctx.input_grad(0) += gr;
    if (ctx.needs(1)) {
      Tensor& gb = ctx.input_grad(1);
      for (std::size_t r = 0; r < gr.rows(); ++r) {
        auto row = gr.row(r);
        for (std::size_t c = 0; c < gr.cols(); ++c) gb[c] += row[c];
      }
    }
  });
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ (" + std::to_string(av.cols()) + " vs " +
                                std::to_string(bv.rows()) + ")");
  }
  Tensor y(av.rows(), bv.cols());
  as_matrix(y).noalias() = as_matrix(av) * as_matrix(bv);
  return g.record("matmul", std::move(y), {a.id(), b.id()}, [](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    if (ctx.needs(0)) {
      Tensor& ga = ctx.input_grad(0);
      as_matrix(ga).noalias() += as_matrix(gr) * as_matrix(ctx.input(1)).transpose();
    }
    if (ctx.needs(1)) {
      Tensor& gb = ctx.input_grad(1);
      as_matrix(gb).noalias() += as_matrix(ctx.input(0)).transpose() * as_matrix(gr);
    }
  });
}

Var tanh(Var a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var a) {
  return unary(a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Var log(Var a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var abs(Var a) {
  return unary(a, "abs", [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var clamp(Var a, double lo, double hi) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  return unary(a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) z += (out[c] = std::exp(in[c] - m));
    for (double& v : out) v /= z;
  }
  return a.graph().record("softmax", std::move(y), {a.id()}, [](BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dotp = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dotp += gr[c] * yr[c];
      auto out = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] += yr[c] * (gr[c] - dotp);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto in = x.row(r);
    auto out = y.row(r);
    const double m = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (double v : in) z += std::exp(v - m);
    const double lse = m + std::log(z);
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = in[c] - lse;
  }
  return a.graph().record("log_softmax", std::move(y), {a.id()}, [](BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double gsum = 0.0;
      for (double v : gr) gsum += v;
      auto out = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] += gr[c] - std::exp(yr[c]) * gsum;
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().record("sum", Tensor::scalar(s), {a.id()}, [](BackwardContext& ctx) {
    const double g = ctx.grad()[0];
    for (double& v : ctx.input_grad(0).values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw std::invalid_argument("mean of an empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.graph().record("mean", Tensor::scalar(s / n), {a.id()}, [n](BackwardContext& ctx) {
    const double g = ctx.grad()[0] / n;
    for (double& v : ctx.input_grad(0).values()) v += g;
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows of nothing");
  Graph& g = parts.front().graph();
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::invalid_argument("vars belong to different graphs");
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column count mismatch");
    rows += p.rows();
    ids.push_back(p.id());
  }
  Tensor y(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto& v = p.value().values();
    std::copy(v.begin(), v.end(), y.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += v.size();
  }
  const std::size_t n = parts.size();
  return g.record("concat_rows", std::move(y), std::move(ids), [n](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t len = ctx.input(k).size();
      if (ctx.needs(k)) {
        Tensor& gk = ctx.input_grad(k);
        for (std::size_t i = 0; i < len; ++i) gk[i] += gr[offset + i];
      }
      offset += len;
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols of nothing");
  Graph& g = parts.front().graph();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::invalid_argument("vars belong to different graphs");
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row count mismatch");
    cols += p.cols();
    ids.push_back(p.id());
  }
  Tensor y(rows, cols);
  std::size_t col0 = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(v.row(r).begin(), v.row(r).end(), y.row(r).begin() + static_cast<std::ptrdiff_t>(col0));
    }
    col0 += v.cols();
  }
  const std::size_t n = parts.size();
  return g.record("concat_cols", std::move(y), std::move(ids), [n](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    std::size_t col0 = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t w = ctx.input(k).cols();
      if (ctx.needs(k)) {
        Tensor& gk = ctx.input_grad(k);
        for (std::size_t r = 0; r < gr.rows(); ++r) {
          auto src = gr.row(r);
          auto dst = gk.row(r);
          for (std::size_t c = 0; c < w; ++c) dst[c] += src[col0 + c];
        }
      }
      col0 += w;
    }
  });
}

Var slice_rows(Var a, std::size_t start, std::size_t count) {
  const Tensor& x = a.value();
  if (start + count > x.rows()) throw std::invalid_argument("slice_rows out of range");
  const std::size_t cols = x.cols();
  std::vector<double> v(x.values().begin() + static_cast<std::ptrdiff_t>(start * cols),
                        x.values().begin() + static_cast<std::ptrdiff_t>((start + count) * cols));
  return a.graph().record("slice_rows", Tensor(count, cols, std::move(v)), {a.id()},
                          [start, cols](BackwardContext& ctx) {
                            const Tensor& gr = ctx.grad();
                            Tensor& gx = ctx.input_grad(0);
                            for (std::size_t i = 0; i < gr.size(); ++i) gx[start * cols + i] += gr[i];
                          });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  const Tensor& x = a.value();
  if (rows * cols != x.size()) throw std::invalid_argument("reshape: element count mismatch");
  return a.graph().record("reshape", Tensor(rows, cols, x.values()), {a.id()}, [](BackwardContext& ctx) {
    const Tensor& gr = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gr.size(); ++i) gx[i] += gr[i];
  });
}

// ---- geometry ------------------------------------------------------------

namespace {

// Gradient of x -> r x / |x| (the active branch of the ball projection).
void projection_vjp(std::span<const double> x, double r, std::span<const double> g, std::span<double> gx) {
  const double n = std::sqrt(geometry::kernel::squared_norm(x));
  const double gdx = geometry::kernel::dot(g, x) / (n * n);
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = r / n * (g[i] - x[i] * gdx);
}

}  // namespace

Var exp0_rows(Var v, double c) {
  const Tensor& x = v.value();
  Tensor y(x.rows(), x.cols());
  std::vector<char> clipped(x.rows(), 0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    geometry::kernel::exp0(x.row(r), c, y.row(r));
    clipped[r] = geometry::kernel::project(y.row(r), c) ? 1 : 0;
  }
  return v.graph().record("exp0", std::move(y), {v.id()}, [c, clipped](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& g = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    std::vector<double> tmp(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
      if (clipped[r]) {
        projection_vjp(x.row(r), geometry::kernel::max_norm(c), g.row(r), tmp);
        for (std::size_t i = 0; i < tmp.size(); ++i) gx.row(r)[i] += tmp[i];
      } else {
        geometry::kernel::exp0_vjp(x.row(r), c, g.row(r), gx.row(r));
      }
    }
  });
}

Var log0_rows(Var y, double c) {
  const Tensor& x = y.value();
  Tensor out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    if (c * geometry::kernel::squared_norm(x.row(r)) >= 1.0) {
      throw std::invalid_argument("log0: row " + std::to_string(r) + " is outside the ball");
    }
    geometry::kernel::log0(x.row(r), c, out.row(r));
  }
  return y.graph().record("log0", std::move(out), {y.id()}, [c](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& g = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < x.rows(); ++r) geometry::kernel::log0_vjp(x.row(r), c, g.row(r), gx.row(r));
  });
}

Var mobius_add_rows(Var x, Var y, double c) {
  Graph& graph = same_graph(x, y);
  require_same_shape(x.value(), y.value(), "mobius_add");
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  Tensor out(xv.rows(), xv.cols());
  Tensor raw(xv.rows(), xv.cols());
  std::vector<char> clipped(xv.rows(), 0);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    geometry::kernel::mobius_add(xv.row(r), yv.row(r), c, raw.row(r));
    std::copy(raw.row(r).begin(), raw.row(r).end(), out.row(r).begin());
    clipped[r] = geometry::kernel::project(out.row(r), c) ? 1 : 0;
  }
  return graph.record("mobius_add", std::move(out), {x.id(), y.id()},
                      [c, clipped, raw = std::move(raw)](BackwardContext& ctx) {
                        const Tensor& xv = ctx.input(0);
                        const Tensor& yv = ctx.input(1);
                        const Tensor& g = ctx.grad();
                        const std::size_t n = xv.cols();
                        std::vector<double> gw(n), gx(n), gy(n);
                        for (std::size_t r = 0; r < xv.rows(); ++r) {
                          if (clipped[r]) {
                            projection_vjp(raw.row(r), geometry::kernel::max_norm(c), g.row(r), gw);
                          } else {
                            std::copy(g.row(r).begin(), g.row(r).end(), gw.begin());
                          }
                          std::fill(gx.begin(), gx.end(), 0.0);
                          std::fill(gy.begin(), gy.end(), 0.0);
                          geometry::kernel::mobius_add_vjp(xv.row(r), yv.row(r), c, gw, gx, gy);
                          if (ctx.needs(0)) {
                            auto dst = ctx.input_grad(0).row(r);
                            for (std::size_t i = 0; i < n; ++i) dst[i] += gx[i];
                          }
                          if (ctx.needs(1)) {
                            auto dst = ctx.input_grad(1).row(r);
                            for (std::size_t i = 0; i < n; ++i) dst[i] += gy[i];
                          }
                        }
                      });
}

Var conformal_factor_rows(Var x, double c) {
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    if (c * geometry::kernel::squared_norm(xv.row(r)) >= 1.0) {
      throw std::invalid_argument("conformal_factor: row " + std::to_string(r) + " is outside the ball");
    }
    out[r] = geometry::kernel::conformal_factor(xv.row(r), c);
  }
  return x.graph().record("conformal_factor", std::move(out), {x.id()}, [c](BackwardContext& ctx) {
    const Tensor& xv = ctx.input(0);
    const Tensor& g = ctx.grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      const double d = 1.0 - c * geometry::kernel::squared_norm(xv.row(r));
      const double k = g[r] * 4.0 * c / (d * d);
      for (std::size_t i = 0; i < xv.cols(); ++i) gx.row(r)[i] += k * xv.row(r)[i];
    }
  });
}

Var mlr_logits(Var z, Var p, Var a, double c, MlrMode mode) {
  Graph& g = same_graph(z, p);
  same_graph(z, a);
  const Tensor& zv = z.value();
  const Tensor& pv = p.value();
  const Tensor& av = a.value();
  const std::size_t dim = zv.cols();
  if (pv.cols() != dim || av.cols() != dim || pv.rows() != av.rows()) {
    throw std::invalid_argument("mlr_logits: hyperplane shapes do not match the embedding dimension");
  }
  const std::size_t k_classes = pv.rows();
  for (std::size_t k = 0; k < k_classes; ++k) {
    if (std::sqrt(geometry::kernel::squared_norm(av.row(k))) < geometry::kMinNormalNorm) {
      throw std::invalid_argument("mlr_logits: degenerate hyperplane " + std::to_string(k) + " (|a| = 0)");
    }
    if (mode == MlrMode::kHyperbolic && c * geometry::kernel::squared_norm(pv.row(k)) >= 1.0) {
      throw std::invalid_argument("mlr_logits: hyperplane offset " + std::to_string(k) + " is outside the ball");
    }
  }
  Tensor out(zv.rows(), k_classes);
  for (std::size_t n = 0; n < zv.rows(); ++n) {
    auto zr = zv.row(n);
    if (mode == MlrMode::kHyperbolic && c * geometry::kernel::squared_norm(zr) >= 1.0) {
      throw std::invalid_argument("mlr_logits: embedding " + std::to_string(n) + " is outside the ball");
    }
    for (std::size_t k = 0; k < k_classes; ++k) {
      out(n, k) = mode == MlrMode::kHyperbolic
                      ? geometry::kernel::mlr_logit(zr, pv.row(k), av.row(k), c)
                      : geometry::kernel::euclidean_logit(zr, pv.row(k), av.row(k));
    }
  }
  return g.record("mlr_logits", std::move(out), {z.id(), p.id(), a.id()}, [c, mode](BackwardContext& ctx) {
    const Tensor& zv = ctx.input(0);
    const Tensor& pv = ctx.input(1);
    const Tensor& av = ctx.input(2);
    const Tensor& gr = ctx.grad();
    const std::size_t dim = zv.cols();
    Tensor gz(zv.rows(), dim);
    Tensor gp(pv.rows(), dim);
    Tensor ga(av.rows(), dim);
    for (std::size_t n = 0; n < zv.rows(); ++n) {
      for (std::size_t k = 0; k < pv.rows(); ++k) {
        const double g = gr(n, k);
        if (g == 0.0) continue;
        if (mode == MlrMode::kHyperbolic) {
          geometry::kernel::mlr_logit_vjp(zv.row(n), pv.row(k), av.row(k), c, g, gz.row(n), gp.row(k),
                                          ga.row(k));
        } else {
          for (std::size_t i = 0; i < dim; ++i) {
            gz(n, i) += 4.0 * g * av(k, i);
            gp(k, i) -= 4.0 * g * av(k, i);
            ga(k, i) += 4.0 * g * (zv(n, i) - pv(k, i));
          }
        }
      }
    }
    if (ctx.needs(0)) ctx.input_grad(0) += gz;
    if (ctx.needs(1)) ctx.input_grad(1) += gp;
    if (ctx.needs(2)) ctx.input_grad(2) += ga;
  });
}

}  // namespace hypsep::ad
