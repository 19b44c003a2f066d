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

// Certainty maps over T-F bins: hyperbolic (embedding norm / distance to the
// origin) and Bayesian (negative predictive entropy of MC-dropout passes).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hypsep/dsp.h"
#include "hypsep/model.h"

namespace hypsep::certainty {

enum class CertaintyKind {
  kNorm,      // sqrt(c) |z| in [0, 1)
  kDistance,  // d_c(0, z)
  kBayesian,  // sum_k p_k log p_k in [-ln K, 0]
};

std::string to_string(CertaintyKind k);

struct CertaintyMap {
  CertaintyKind kind = CertaintyKind::kNorm;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;  // t * bins + f

  double at(std::size_t t, std::size_t f) const { return values[t * bins + f]; }
};

// Throws std::invalid_argument for euclidean embeddings or kind kBayesian.
CertaintyMap hyperbolic_certainty_map(const model::EmbeddingField& z, CertaintyKind kind = CertaintyKind::kNorm);

// Zeroes every class of the bins whose normalized norm is below theta.
// Throws std::invalid_argument unless theta is in [0, 1) and `norm` is a
// kNorm map of the masks' shape.
dsp::MaskTensor threshold_masks(const dsp::MaskTensor& masks, const CertaintyMap& norm, double theta);

// Bins (t * bins + f) silenced at theta.
std::vector<bool> silenced_bins(const CertaintyMap& norm, double theta);

// Mean leaf softmax over `n_passes` forward passes with dropout `rate` after
// every recurrent layer, reduced to sum_k p log p. Deterministic in `seed`.
// The first recurrent layer is evaluated once and reused across passes.
CertaintyMap bayesian_certainty(const model::Model& model, const dsp::ComplexSpectrogram& x,
                                const model::NormStats& stats, std::size_t n_passes, double rate, std::uint64_t seed);

// Throws std::invalid_argument on shape mismatch or a constant map.
double pearson_correlation(const CertaintyMap& a, const CertaintyMap& b);

inline constexpr std::size_t kCountBuckets = 5;  // 0, 1, 2, 3, 4+

struct NormHistogramSet {
  std::size_t n_bins = 0;  // histogram bins over [0, 1)
  std::array<std::vector<std::size_t>, kCountBuckets> histograms;
  std::array<std::size_t, kCountBuckets> population{};
  std::array<double, kCountBuckets> norm_sum{};

  // NaN for an empty bucket.
  double mean(std::size_t bucket) const;
  // Mean normalized norm over buckets >= first (e.g. 3 for "3 or more").
  double mean_from(std::size_t first) const;
  void merge(const NormHistogramSet& other);
};

std::string bucket_label(std::size_t bucket);

// Groups normalized embedding norms by active-source count.
NormHistogramSet norm_histograms(const model::EmbeddingField& z, const std::vector<int>& counts, std::size_t n_bins = 20);

}  // namespace hypsep::certainty
