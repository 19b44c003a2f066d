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

#include "hypsep/certainty.h"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "hypsep/geometry.h"

namespace hypsep::certainty {

std::string to_string(CertaintyKind k) {
  switch (k) {
    case CertaintyKind::kNorm:
      return "norm";
    case CertaintyKind::kDistance:
      return "distance";
    case CertaintyKind::kBayesian:
      return "bayesian";
  }
  return "?";
}

CertaintyMap hyperbolic_certainty_map(const model::EmbeddingField& z, CertaintyKind kind) {
  if (!z.hyperbolic) throw std::invalid_argument("hyperbolic certainty needs hyperbolic embeddings");
  if (kind == CertaintyKind::kBayesian) throw std::invalid_argument("hyperbolic certainty map cannot be of kind bayesian");
  CertaintyMap m;
  m.kind = kind;
  m.frames = z.frames;
  m.bins = z.bins;
  m.values.resize(z.frames * z.bins);
  const double sqrt_c = std::sqrt(z.curvature);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const double r = sqrt_c * std::sqrt(geometry::kernel::squared_norm({z.values.data() + i * z.dim, z.dim}));
    m.values[i] = kind == CertaintyKind::kNorm ? r : 2.0 / sqrt_c * std::atanh(r);
  }
  return m;
}

std::vector<bool> silenced_bins(const CertaintyMap& norm, double theta) {
  if (norm.kind != CertaintyKind::kNorm) throw std::invalid_argument("thresholding needs a normalized-norm map");
  if (!(theta >= 0.0 && theta < 1.0)) throw std::invalid_argument("threshold must lie in [0, 1)");
  std::vector<bool> out(norm.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = norm.values[i] < theta;
  return out;
}

dsp::MaskTensor threshold_masks(const dsp::MaskTensor& masks, const CertaintyMap& norm, double theta) {
  const std::vector<bool> off = silenced_bins(norm, theta);
  if (masks.frames != norm.frames || masks.bins != norm.bins) throw std::invalid_argument("threshold_masks: shape mismatch");
  dsp::MaskTensor out = masks;
  const std::size_t plane = masks.frames * masks.bins;
  for (std::size_t k = 0; k < masks.classes; ++k) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (off[i]) out.values[k * plane + i] = 0.0;
    }
  }
  return out;
}

CertaintyMap bayesian_certainty(const model::Model& model, const dsp::ComplexSpectrogram& x,
                                const model::NormStats& stats, std::size_t n_passes, double rate, std::uint64_t seed) {
  if (n_passes < 1) throw std::invalid_argument("bayesian certainty needs at least one pass");
  const model::ModelConfig& config = model.config();
  const model::Features f = model::make_features(std::span(&x, 1), std::span(&stats, 1));
  const std::size_t bins = config.bins();
  const std::size_t k_leaf = config.hierarchy.leaves.size();
  const model::Dropout drop{rate, true, 0};

  // Output of the first recurrent layer, before dropout.
  Tensor first_layer;
  const bool cache = config.layers >= 2;
  if (cache) {
    ad::Graph g(&model.params());
    std::mt19937_64 unused;
    first_layer = model::encoder_layers(g, config, g.constant(f.values), f.frames, 1, 0, 1, {}, unused).value();
  }

  std::mt19937_64 seeds(seed);
  std::vector<double> mean_p(f.frames * bins * k_leaf, 0.0);
  for (std::size_t pass = 0; pass < n_passes; ++pass) {
    std::mt19937_64 rng(seeds());
    ad::Graph g(&model.params());
    ad::Var h;
    if (cache) {
      h = g.constant(first_layer);
      if (drop.active()) h = model::apply_dropout(g, h, rate, rng);
      h = model::encoder_layers(g, config, h, f.frames, 1, 1, config.layers, drop, rng);
    } else {
      h = model::encoder_layers(g, config, g.constant(f.values), f.frames, 1, 0, config.layers, drop, rng);
    }
    const model::ForwardOutputs out = model::heads(g, config, h, f.frames, 1);
    const Tensor& logits = out.leaf_logits.value();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
      auto row = logits.row(r);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (double v : row) z += std::exp(v - mx);
      for (std::size_t k = 0; k < k_leaf; ++k) mean_p[r * k_leaf + k] += std::exp(row[k] - mx) / z;
    }
  }

  CertaintyMap m;
  m.kind = CertaintyKind::kBayesian;
  m.frames = f.frames;
  m.bins = bins;
  m.values.assign(f.frames * bins, 0.0);
  const double inv = 1.0 / static_cast<double>(n_passes);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    double zeta = 0.0;
    for (std::size_t k = 0; k < k_leaf; ++k) {
      const double p = mean_p[i * k_leaf + k] * inv;
      if (p > 0.0) zeta += p * std::log(p);
    }
    m.values[i] = zeta;
  }
  return m;
}

double pearson_correlation(const CertaintyMap& a, const CertaintyMap& b) {
  if (a.frames != b.frames || a.bins != b.bins || a.values.size() != b.values.size()) {
    throw std::invalid_argument("pearson_correlation: shape mismatch");
  }
  // Compared exactly: the centered sums of a constant map are rounding noise.
  const auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (a.values.empty() || constant(a.values) || constant(b.values)) {
    throw std::invalid_argument("pearson_correlation: constant map");
  }
  const double n = static_cast<double>(a.values.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    ma += a.values[i];
    mb += b.values[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double da = a.values[i] - ma;
    const double db = b.values[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("pearson_correlation: constant map");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double NormHistogramSet::mean(std::size_t bucket) const {
  if (population[bucket] == 0) return std::numeric_limits<double>::quiet_NaN();
  return norm_sum[bucket] / static_cast<double>(population[bucket]);
}

double NormHistogramSet::mean_from(std::size_t first) const {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t b = first; b < kCountBuckets; ++b) {
    s += norm_sum[b];
    n += population[b];
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(n);
}

void NormHistogramSet::merge(const NormHistogramSet& other) {
  if (n_bins == 0) {
    *this = other;
    return;
  }
  if (other.n_bins != n_bins) throw std::invalid_argument("merging histograms with different binning");
  for (std::size_t b = 0; b < kCountBuckets; ++b) {
    for (std::size_t i = 0; i < n_bins; ++i) histograms[b][i] += other.histograms[b][i];
    population[b] += other.population[b];
    norm_sum[b] += other.norm_sum[b];
  }
}

std::string bucket_label(std::size_t bucket) {
  return bucket + 1 < kCountBuckets ? std::to_string(bucket) : std::to_string(bucket) + "+";
}

NormHistogramSet norm_histograms(const model::EmbeddingField& z, const std::vector<int>& counts, std::size_t n_bins) {
  if (counts.size() != z.frames * z.bins) throw std::invalid_argument("norm_histograms: shape mismatch");
  if (n_bins == 0) throw std::invalid_argument("norm_histograms: need at least one histogram bin");
  const CertaintyMap norm = hyperbolic_certainty_map(z, CertaintyKind::kNorm);
  NormHistogramSet h;
  h.n_bins = n_bins;
  for (auto& v : h.histograms) v.assign(n_bins, 0);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const std::size_t bucket = std::min<std::size_t>(static_cast<std::size_t>(std::max(counts[i], 0)), kCountBuckets - 1);
    const double r = norm.values[i];
    const std::size_t bin = std::min(n_bins - 1, static_cast<std::size_t>(r * static_cast<double>(n_bins)));
    ++h.histograms[bucket][bin];
    ++h.population[bucket];
    h.norm_sum[bucket] += r;
  }
  return h;
}

}  // namespace hypsep::certainty
