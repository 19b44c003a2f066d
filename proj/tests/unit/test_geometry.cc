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

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "hypsep/errors.h"
#include "hypsep/geometry.h"
#include "test_util.h"

using namespace hypsep::geometry;

namespace {

PoincarePoint pt(std::vector<double> v, double c) { return PoincarePoint(std::move(v), Curvature(c)); }

// Reference Mobius addition in long double, written out from the gyrovector
// formula independently of the library kernel.
std::vector<long double> mobius_ref(const std::vector<double>& x, const std::vector<double>& y, long double c) {
  long double xy = 0, xx = 0, yy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xy += static_cast<long double>(x[i]) * y[i];
    xx += static_cast<long double>(x[i]) * x[i];
    yy += static_cast<long double>(y[i]) * y[i];
  }
  const long double den = 1 + 2 * c * xy + c * c * xx * yy;
  std::vector<long double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ((1 + 2 * c * xy + c * yy) * x[i] + (1 - c * xx) * y[i]) / den;
  return out;
}

}  // namespace

TEST_CASE("mobius addition examples") {
  auto r = mobius_add(pt({0.3, 0.0}, 1.0), pt({0.0, 0.0}, 1.0));
  CHECK(r.coords()[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(r.coords()[1] == 0.0);

  r = mobius_add(pt({0.0, 0.0}, 1.0), pt({0.5, 0.1}, 1.0));
  CHECK(r.coords()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.coords()[1] == doctest::Approx(0.1).epsilon(1e-15));

  // Collinear points add like tanh rapidities.
  r = mobius_add(pt({0.3, 0.0}, 1.0), pt({0.4, 0.0}, 1.0));
  const long double expected = (0.3L + 0.4L) / (1.0L + 0.3L * 0.4L);
  CHECK(std::fabs(r.coords()[0] - static_cast<double>(expected)) < 1e-15);
  CHECK(std::fabs(r.coords()[0] - 0.625) < 1e-15);
}

TEST_CASE("mobius addition matches the extended precision reference") {
  std::mt19937_64 rng(11);
  for (double c : {0.1, 1.0, 3.0}) {
    for (int i = 0; i < 200; ++i) {
      const auto x = testutil::ball_point(rng, 3, c, 0.9);
      const auto y = testutil::ball_point(rng, 3, c, 0.9);
      const auto got = mobius_add(pt(x, c), pt(y, c));
      const auto ref = mobius_ref(x, y, c);
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::fabs(got.coords()[k] - static_cast<double>(ref[k])) < 1e-12);
    }
  }
}

TEST_CASE("mobius identities and inverse") {
  std::mt19937_64 rng(1);
  for (double c : {0.1, 1.0}) {
    for (int i = 0; i < 1000; ++i) {
      const auto x = pt(testutil::ball_point(rng, 4, c), c);
      const auto o = PoincarePoint::origin(4, Curvature(c));
      const auto l = mobius_add(o, x);
      const auto r = mobius_add(x, o);
      const auto z = mobius_add(x, -x);
      for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::fabs(l.coords()[k] - x.coords()[k]) < 1e-9);
        CHECK(std::fabs(r.coords()[k] - x.coords()[k]) < 1e-9);
        CHECK(std::fabs(z.coords()[k]) < 1e-9);
      }
    }
  }
}

TEST_CASE("mobius addition tends to vector addition as c -> 0") {
  const auto r = mobius_add(pt({0.3, -0.2}, 1e-10), pt({0.1, 0.4}, 1e-10));
  CHECK(r.coords()[0] == doctest::Approx(0.4).epsilon(1e-8));
  CHECK(r.coords()[1] == doctest::Approx(0.2).epsilon(1e-8));
}

TEST_CASE("mobius addition rejects mismatched curvature and non-finite input") {
  CHECK_THROWS_AS(mobius_add(pt({0.1, 0.0}, 1.0), pt({0.1, 0.0}, 0.5)), std::invalid_argument);
  CHECK_THROWS_AS(pt({NAN, 0.0}, 1.0), hypsep::NumericError);
  CHECK_THROWS_AS(pt({1.0, 0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("conformal factor") {
  CHECK(conformal_factor(PoincarePoint::origin(2, Curvature(0.3))) == 2.0);
  CHECK(conformal_factor(pt({0.3, 0.4}, 1.0)) == doctest::Approx(2.0 / (1.0 - 0.25)).epsilon(1e-14));
  double prev = 0.0;
  for (double r = 0.0; r < 0.99; r += 0.01) {
    const double l = conformal_factor(pt({r, 0.0}, 1.0));
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("distance examples and metric axioms") {
  CHECK(distance(pt({0.2, 0.1}, 1.0), pt({0.2, 0.1}, 1.0)) == doctest::Approx(0.0));
  CHECK(distance(PoincarePoint::origin(2, Curvature(1.0)), pt({0.5, 0.0}, 1.0)) ==
        doctest::Approx(2.0 * std::atanh(0.5)).epsilon(1e-14));
  CHECK(2.0 * std::atanh(0.5) == doctest::Approx(1.098612).epsilon(1e-6));

  std::mt19937_64 rng(2);
  for (double c : {0.1, 1.0}) {
    for (int i = 0; i < 10000; ++i) {
      const auto x = pt(testutil::ball_point(rng, 2, c, 0.9), c);
      const auto y = pt(testutil::ball_point(rng, 2, c, 0.9), c);
      const auto z = pt(testutil::ball_point(rng, 2, c, 0.9), c);
      const double xy = distance(x, y), yx = distance(y, x);
      CHECK(xy >= 0.0);
      CHECK(std::fabs(xy - yx) < 1e-9);
      CHECK(xy <= distance(x, z) + distance(z, y) + 1e-9);
    }
  }
}

TEST_CASE("exp0 / log0 examples") {
  const Curvature c1(1.0);
  auto y = exp0({{0.0, 0.0}}, c1);
  CHECK(y.coords()[0] == 0.0);
  CHECK(y.coords()[1] == 0.0);
  y = exp0({{0.3, 0.0}}, c1);
  CHECK(y.coords()[0] == doctest::Approx(std::tanh(0.3)).epsilon(1e-15));
  CHECK(y.coords()[0] == doctest::Approx(0.291313).epsilon(1e-6));

  auto v = log0(pt({0.0, 0.0}, 1.0));
  CHECK(v.coords[0] == 0.0);
  v = log0(pt({std::tanh(0.3), 0.0}, 1.0));
  CHECK(v.coords[0] == doctest::Approx(0.3).epsilon(1e-14));
  v = log0(pt({0.291313, 0.0}, 1.0));
  CHECK(v.coords[0] == doctest::Approx(0.3).epsilon(1e-5));
}

TEST_CASE("exp0 and log0 are mutual inverses") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> radius(0.0, 5.0);
  for (double c : {0.1, 1.0}) {
    for (int i = 0; i < 2000; ++i) {
      auto v = testutil::uniform_vec(rng, 3, -1.0, 1.0);
      double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      const double r = radius(rng);
      for (double& x : v) x *= r / n;
      const auto back = log0(exp0({v}, Curvature(c)));
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::fabs(back.coords[k] - v[k]) <= 1e-9 * std::max(r, 1e-3));

      const auto y = pt(testutil::ball_point(rng, 3, c, 0.99), c);
      const auto y2 = exp0(log0(y), Curvature(c));
      for (std::size_t k = 0; k < 3; ++k)
        CHECK(std::fabs(y2.coords()[k] - y.coords()[k]) <= 1e-9 * std::max(y.norm(), 1e-3));

      // The origin exp map is a radial isometry up to a factor 2.
      CHECK(std::fabs(origin_distance(exp0({v}, Curvature(c))) - 2.0 * r) < 1e-9 * std::max(1.0, r));
    }
  }
}

TEST_CASE("project_to_ball") {
  const Curvature c1(1.0);
  auto p = project_to_ball(std::vector<double>{0.2, 0.1}, c1);
  CHECK(p.coords()[0] == 0.2);
  CHECK(p.coords()[1] == 0.1);
  p = project_to_ball(std::vector<double>{2.0, 0.0}, c1);
  CHECK(p.coords()[0] == doctest::Approx(1.0 - kBallEpsilon).epsilon(1e-15));
  CHECK(p.coords()[1] == 0.0);
  p = project_to_ball(std::vector<double>{0.0, 0.0}, c1);
  CHECK(p.coords()[0] == 0.0);
  p = project_to_ball(std::vector<double>{0.0, 30.0}, Curvature(0.1));
  CHECK(p.normalized_norm() == doctest::Approx(1.0 - kBallEpsilon).epsilon(1e-14));
  CHECK_THROWS_AS(project_to_ball(std::vector<double>{INFINITY, 0.0}, c1), hypsep::NumericError);
}

TEST_CASE("certainty score") {
  CHECK(certainty_score(PoincarePoint::origin(2, Curvature(1.0))) == 0.0);
  CHECK(certainty_score(pt({0.9, 0.0}, 1.0)) == doctest::Approx(std::log(1.81 / 0.19)).epsilon(1e-13));
  CHECK(std::log(1.81 / 0.19) == doctest::Approx(2.2541).epsilon(1e-4));

  // Strictly increasing along a ray, and the same ordering as d_c(0, .).
  std::mt19937_64 rng(4);
  std::vector<std::pair<double, double>> scores;
  for (int i = 0; i < 500; ++i) {
    const auto z = pt(testutil::ball_point(rng, 2, 0.1, 0.999), 0.1);
    scores.emplace_back(certainty_score(z), origin_distance(z));
  }
  std::sort(scores.begin(), scores.end());
  for (std::size_t i = 1; i < scores.size(); ++i) CHECK(scores[i].second >= scores[i - 1].second);
  double prev = -1.0;
  for (double r = 0.0; r < 0.999; r += 0.001) {
    const double s = certainty_score(pt({0.6 * r, -0.8 * r}, 1.0));
    CHECK(s > prev);
    prev = s;
  }
}

TEST_CASE("hyperbolic MLR logits") {
  const Curvature c1(1.0);
  const Hyperplane h(PoincarePoint::origin(2, c1), {1.0, 0.0});
  auto l = mlr_logits(pt({0.5, 0.0}, 1.0), std::span(&h, 1));
  CHECK(l[0] == doctest::Approx(2.0 * std::asinh(4.0 / 3.0)).epsilon(1e-14));
  CHECK(l[0] == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-14));
  // Sign flips across the hyperplane.
  l = mlr_logits(pt({-0.5, 0.0}, 1.0), std::span(&h, 1));
  CHECK(l[0] == doctest::Approx(-2.0 * std::log(3.0)).epsilon(1e-14));

  // On its own hyperplane offset the logit is zero.
  const Hyperplane h2(pt({0.2, -0.3}, 1.0), {0.4, 0.7});
  CHECK(mlr_logits(pt({0.2, -0.3}, 1.0), std::span(&h2, 1))[0] == doctest::Approx(0.0));

  CHECK_THROWS_AS(Hyperplane(PoincarePoint::origin(2, c1), {0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("MLR c -> 0 limit matches the euclidean logit") {
  std::mt19937_64 rng(5);
  const double c = 1e-8;
  for (int i = 0; i < 1000; ++i) {
    const auto z = testutil::uniform_vec(rng, 2, -1.0, 1.0);
    const auto p = testutil::uniform_vec(rng, 2, -1.0, 1.0);
    const auto a = testutil::uniform_vec(rng, 2, -1.0, 1.0);
    const Hyperplane h(pt(p, c), a);
    const EuclideanHyperplane e(p, a);
    const double hyp = mlr_logits(pt(z, c), std::span(&h, 1))[0];
    const double euc = mlr_logits(z, std::span(&e, 1))[0];
    const double direct = 4.0 * ((z[0] - p[0]) * a[0] + (z[1] - p[1]) * a[1]);
    CHECK(euc == doctest::Approx(direct).epsilon(1e-12));
    if (std::fabs(direct) > 1e-3) CHECK(std::fabs(hyp - direct) / std::fabs(direct) < 1e-4);
  }
}
