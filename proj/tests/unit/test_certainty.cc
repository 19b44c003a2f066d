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
#include <numeric>
#include <random>

#include "doctest.h"
#include "hypsep/certainty.h"
#include "test_util.h"

using namespace hypsep;
using namespace hypsep::certainty;

namespace {

model::EmbeddingField field(std::vector<double> values, std::size_t frames, std::size_t bins, double c) {
  model::EmbeddingField z;
  z.frames = frames;
  z.bins = bins;
  z.dim = 2;
  z.hyperbolic = true;
  z.curvature = c;
  z.values = std::move(values);
  return z;
}

model::EmbeddingField random_field(std::mt19937_64& rng, std::size_t frames, std::size_t bins, double c) {
  std::vector<double> v;
  for (std::size_t i = 0; i < frames * bins; ++i) {
    const auto p = testutil::ball_point(rng, 2, c, 0.99);
    v.insert(v.end(), p.begin(), p.end());
  }
  return field(std::move(v), frames, bins, c);
}

model::Model small_model(std::uint64_t seed) {
  model::ModelConfig c;
  c.hidden = 8;
  return model::Model::initialize(c, seed);
}

double entropy_term(const dsp::MaskTensor& leaf, std::size_t t, std::size_t f) {
  double z = 0.0;
  for (std::size_t k = 0; k < leaf.classes; ++k) {
    const double p = leaf.at(k, t, f);
    if (p > 0.0) z += p * std::log(p);
  }
  return z;
}

}  // namespace

TEST_CASE("hyperbolic certainty maps") {
  const auto origin = field(std::vector<double>(12, 0.0), 2, 3, 0.1);
  for (auto kind : {CertaintyKind::kNorm, CertaintyKind::kDistance})
    for (double v : hyperbolic_certainty_map(origin, kind).values) CHECK(v == 0.0);

  const auto one = field({0.9, 0.0}, 1, 1, 1.0);
  CHECK(hyperbolic_certainty_map(one, CertaintyKind::kDistance).values[0] ==
        doctest::Approx(2.0 * std::atanh(0.9)).epsilon(1e-13));
  CHECK(2.0 * std::atanh(0.9) == doctest::Approx(2.9444).epsilon(1e-4));
  CHECK(hyperbolic_certainty_map(one, CertaintyKind::kNorm).values[0] == doctest::Approx(0.9).epsilon(1e-15));

  std::mt19937_64 rng(1);
  const auto z = random_field(rng, 20, 30, 0.1);
  const auto norm = hyperbolic_certainty_map(z, CertaintyKind::kNorm);
  const auto dist = hyperbolic_certainty_map(z, CertaintyKind::kDistance);
  std::vector<std::size_t> a(600), b(600);
  std::iota(a.begin(), a.end(), 0);
  std::iota(b.begin(), b.end(), 0);
  std::sort(a.begin(), a.end(), [&](auto i, auto j) { return norm.values[i] < norm.values[j]; });
  std::sort(b.begin(), b.end(), [&](auto i, auto j) { return dist.values[i] < dist.values[j]; });
  CHECK(a == b);
  for (double v : norm.values) CHECK((v >= 0.0 && v < 1.0));

  auto euclid = z;
  euclid.hyperbolic = false;
  CHECK_THROWS_AS(hyperbolic_certainty_map(euclid), std::invalid_argument);
}

TEST_CASE("threshold masks") {
  std::mt19937_64 rng(2);
  const auto z = random_field(rng, 10, 12, 0.1);
  const auto norm = hyperbolic_certainty_map(z);
  dsp::MaskTensor m(3, 10, 12);
  for (double& v : m.values) v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

  CHECK(threshold_masks(m, norm, 0.0).values == m.values);
  const double mx = *std::max_element(norm.values.begin(), norm.values.end());
  for (double v : threshold_masks(m, norm, std::nextafter(mx, 1.0)).values) CHECK(v == 0.0);

  std::vector<bool> prev(120, false);
  for (double theta = 0.0; theta < 1.0; theta += 0.05) {
    const auto off = silenced_bins(norm, theta);
    for (std::size_t i = 0; i < off.size(); ++i) CHECK((!prev[i] || off[i]));
    const auto t = threshold_masks(m, norm, theta);
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t i = 0; i < 120; ++i) CHECK(t.values[k * 120 + i] == (off[i] ? 0.0 : m.values[k * 120 + i]));
    prev = off;
  }
  CHECK_THROWS_AS(threshold_masks(m, norm, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(threshold_masks(m, norm, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(threshold_masks(m, hyperbolic_certainty_map(z, CertaintyKind::kDistance), 0.5), std::invalid_argument);
}

TEST_CASE("bayesian certainty") {
  const model::Model m = small_model(3);
  std::mt19937_64 rng(3);
  const auto x = dsp::stft(testutil::noise(rng, 1500));
  const auto stats = model::normalization_stats(x);

  // One pass without dropout: entropy of the deterministic leaf softmax.
  const auto det = model::forward_masks(m, x, stats);
  const auto one = bayesian_certainty(m, x, stats, 1, 0.0, 5);
  for (std::size_t t = 0; t < one.frames; ++t)
    for (std::size_t f = 0; f < one.bins; ++f) CHECK(one.at(t, f) == doctest::Approx(entropy_term(det.leaf, t, f)).epsilon(1e-12));

  // One dropout pass equals an uncached forward pass with the same draws.
  const std::uint64_t pass_seed = std::mt19937_64(11)();
  const auto manual = model::forward_masks(m, x, stats, {0.5, true, pass_seed});
  const auto single = bayesian_certainty(m, x, stats, 1, 0.5, 11);
  for (std::size_t t = 0; t < single.frames; ++t)
    for (std::size_t f = 0; f < single.bins; ++f)
      CHECK(single.at(t, f) == doctest::Approx(entropy_term(manual.leaf, t, f)).epsilon(1e-12));

  const auto a = bayesian_certainty(m, x, stats, 20, 0.5, 7);
  const auto b = bayesian_certainty(m, x, stats, 20, 0.5, 7);
  const auto c = bayesian_certainty(m, x, stats, 20, 0.5, 8);
  CHECK(a.values == b.values);
  CHECK(a.values != c.values);
  for (double v : a.values) CHECK((v >= -std::log(5.0) - 1e-12 && v <= 0.0));
  CHECK_THROWS_AS(bayesian_certainty(m, x, stats, 0, 0.5, 7), std::invalid_argument);
}

TEST_CASE("bayesian certainty of identical hyperplanes is uniform") {
  model::Model m = small_model(4);
  auto& a = m.params().at("head.leaf.a");
  for (std::size_t k = 1; k < a.rows(); ++k)
    for (std::size_t l = 0; l < a.cols(); ++l) a(k, l) = a(0, l);
  std::mt19937_64 rng(4);
  const auto x = dsp::stft(testutil::noise(rng, 800));
  const auto z = bayesian_certainty(m, x, model::normalization_stats(x), 3, 0.5, 1);
  for (double v : z.values) CHECK(v == doctest::Approx(-std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("bayesian certainty stabilizes with many passes") {
  const model::Model m = small_model(5);
  std::mt19937_64 rng(5);
  const auto x = dsp::stft(testutil::noise(rng, 1000));
  const auto stats = model::normalization_stats(x);
  std::vector<CertaintyMap> batches;
  for (std::uint64_t s = 0; s < 5; ++s) batches.push_back(bayesian_certainty(m, x, stats, 100, 0.5, 100 + s));
  double mean_se = 0.0;
  const std::size_t n = batches[0].values.size();
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0, var = 0.0;
    for (const auto& b : batches) mu += b.values[i] / 5.0;
    for (const auto& b : batches) var += (b.values[i] - mu) * (b.values[i] - mu) / 4.0;
    mean_se += std::sqrt(var / 5.0) / static_cast<double>(n);
  }
  CHECK(mean_se < 0.05);
}

TEST_CASE("pearson correlation") {
  std::mt19937_64 rng(6);
  CertaintyMap a{CertaintyKind::kNorm, 4, 5, testutil::uniform_vec(rng, 20, 0.0, 1.0)};
  CertaintyMap b = a, neg = a, other = a;
  for (double& v : neg.values) v = -v;
  other.values = testutil::uniform_vec(rng, 20, -1.0, 1.0);
  CHECK(pearson_correlation(a, b) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pearson_correlation(a, neg) == doctest::Approx(-1.0).epsilon(1e-14));

  long double ma = 0, mo = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    ma += a.values[i] / 20.0L;
    mo += other.values[i] / 20.0L;
  }
  long double sab = 0, saa = 0, soo = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    sab += (a.values[i] - ma) * (other.values[i] - mo);
    saa += (a.values[i] - ma) * (a.values[i] - ma);
    soo += (other.values[i] - mo) * (other.values[i] - mo);
  }
  CHECK(pearson_correlation(a, other) == doctest::Approx(static_cast<double>(sab / std::sqrt(saa * soo))).epsilon(1e-12));

  CertaintyMap flat{CertaintyKind::kNorm, 4, 5, std::vector<double>(20, 0.3)};
  CHECK_THROWS_AS(pearson_correlation(a, flat), std::invalid_argument);
  CertaintyMap small{CertaintyKind::kNorm, 2, 5, std::vector<double>(10, 0.3)};
  CHECK_THROWS_AS(pearson_correlation(a, small), std::invalid_argument);
}

TEST_CASE("norm histograms") {
  const auto origin = field(std::vector<double>(2 * 6 * 2, 0.0), 2, 6, 0.1);
  const std::vector<int> counts{0, 1, 2, 3, 4, 5, 1, 1, 2, 0, 7, 3};
  const auto h = norm_histograms(origin, counts, 10);
  std::size_t total = 0;
  for (std::size_t b = 0; b < kCountBuckets; ++b) {
    total += h.population[b];
    std::size_t in_bins = 0;
    for (std::size_t i = 0; i < 10; ++i) in_bins += h.histograms[b][i];
    CHECK(in_bins == h.population[b]);
    CHECK(in_bins == h.histograms[b][0]);
  }
  CHECK(total == 12);
  CHECK(h.population[4] == 3);  // 4, 5 and 7 active sources
  CHECK(h.population[1] == 3);
  CHECK(bucket_label(4) == "4+");

  std::mt19937_64 rng(7);
  const auto z = random_field(rng, 2, 6, 0.1);
  const auto hz = norm_histograms(z, counts, 20);
  const auto norm = hyperbolic_certainty_map(z);
  double s1 = 0.0, s3 = 0.0;
  int n1 = 0, n3 = 0;
  for (std::size_t i = 0; i < 12; ++i) {
    if (counts[i] == 1) {
      s1 += norm.values[i];
      ++n1;
    }
    if (counts[i] >= 3) {
      s3 += norm.values[i];
      ++n3;
    }
  }
  CHECK(hz.mean(1) == doctest::Approx(s1 / n1).epsilon(1e-14));
  CHECK(hz.mean_from(3) == doctest::Approx(s3 / n3).epsilon(1e-14));

  NormHistogramSet merged;
  merged.merge(hz);
  merged.merge(hz);
  CHECK(merged.population[1] == 2 * hz.population[1]);
  CHECK(merged.mean(1) == doctest::Approx(hz.mean(1)));
  CHECK_THROWS_AS(norm_histograms(z, std::vector<int>(5, 0)), std::invalid_argument);
}
