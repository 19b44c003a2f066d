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

// Training objectives (as autodiff graphs) and separation metrics.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "hypsep/autodiff.h"
#include "hypsep/dsp.h"
#include "hypsep/hierarchy.h"
#include "json.hpp"

namespace hypsep::objectives {

enum class LossKind { kPsa, kWa, kCe, kCeWeighted };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);  // "psa", "wa", "ce", "ce_w"; throws ConfigError

struct LossConfig {
  LossKind kind = LossKind::kCeWeighted;
  double parent_weight = 1.0;
  double leaf_weight = 1.0;

  void validate() const;  // throws ConfigError
};

// ---- graph losses ----------------------------------------------------------
// Masks and logits are N x K with N = T * B * F rows laid out as
// ((t * B + b) * F + f). Per-item spectrograms are T x F.

// mean over items, classes and bins of |M |X| - clamp(|S| cos(dphi), 0, |X|)|
ad::Var psa_loss(ad::Var masks, std::span<const dsp::ComplexSpectrogram> mixtures,
                 std::span<const std::vector<dsp::ComplexSpectrogram>> sources);

// mean over items and classes of mean_n |istft(M X)[n] - s[n]|
ad::Var wa_loss(ad::Var masks, std::span<const dsp::ComplexSpectrogram> mixtures,
                std::span<const std::vector<dsp::Waveform>> references);

// Cross entropy against the ideal binary mask of `sources`. Unweighted: mean
// over bins. Weighted: per item, bins weighted by |X| / sum |X|; the result
// is averaged over items. Throws DataError for a silent item in weighted mode.
ad::Var ce_loss(ad::Var logits, std::span<const dsp::ComplexSpectrogram> mixtures,
                std::span<const std::vector<dsp::ComplexSpectrogram>> sources, bool weighted);

// w_parent * parent + w_leaf * leaf
ad::Var hierarchical_loss(ad::Var parent_term, ad::Var leaf_term, const LossConfig& cfg);

// Per-bin weights |X| / sum |X| of one spectrogram, row-major T x F.
std::vector<double> ce_weights(const dsp::ComplexSpectrogram& mixture);

// One training example with both levels of targets.
struct Chunk {
  dsp::ComplexSpectrogram mixture;
  std::vector<dsp::ComplexSpectrogram> parents;
  std::vector<dsp::ComplexSpectrogram> leaves;
  std::vector<dsp::Waveform> parent_waves;  // only needed for WA
  std::vector<dsp::Waveform> leaf_waves;
};

// The configured objective on both heads for a batch of chunks.
ad::Var training_loss(ad::Var parent_logits, ad::Var leaf_logits, std::span<const Chunk> batch,
                      const LossConfig& cfg);

// ---- value-level single-track losses ----------------------------------------

double psa_loss(const dsp::MaskTensor& masks, const dsp::ComplexSpectrogram& mixture,
                std::span<const dsp::ComplexSpectrogram> sources);
double wa_loss(const dsp::MaskTensor& masks, const dsp::ComplexSpectrogram& mixture,
               std::span<const dsp::Waveform> references);
// `logits` is (T * F) x K.
double ce_loss(const Tensor& logits, const dsp::ComplexSpectrogram& mixture,
               std::span<const dsp::ComplexSpectrogram> sources, bool weighted);

// ---- metrics ----------------------------------------------------------------

inline constexpr double kMetricCapDb = 100.0;

// 10 log10(|a s|^2 / |a s - s_hat|^2), a = <s_hat, s> / |s|^2, capped at
// +-100 dB. Throws std::invalid_argument on length mismatch or a silent
// reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

struct SirSar {
  double sir = 0.0;
  double sar = 0.0;
};

// Scale-invariant decomposition of the estimate against the span of all
// references. Throws std::invalid_argument when the references are
// linearly dependent.
SirSar si_sir_sar(std::span<const double> estimate, std::span<const std::vector<double>> references,
                  std::size_t target);

struct ClassMetrics {
  double si_sdr = 0.0;
  double si_sir = 0.0;
  double si_sar = 0.0;
};

struct TrackMetrics {
  std::vector<ClassMetrics> parents;  // hierarchy order
  std::vector<ClassMetrics> leaves;
};

// Scores parent estimates against the parent submixes and leaf estimates
// against the leaf sources.
TrackMetrics score_track(std::span<const dsp::Waveform> parent_estimates, std::span<const dsp::Waveform> leaf_estimates,
                         std::span<const dsp::Waveform> parent_refs, std::span<const dsp::Waveform> leaf_refs);

struct MetricReport {
  Hierarchy hierarchy;
  std::map<std::string, ClassMetrics> classes;  // per class, mean over tracks
  ClassMetrics parents;                         // mean over parent classes
  ClassMetrics leaves;                          // mean over leaf classes
  ClassMetrics all;                             // mean over every class
  std::size_t tracks = 0;
};

MetricReport summarize(const Hierarchy& hierarchy, std::span<const TrackMetrics> tracks);

// Plain-text table: one row per class plus the three averages.
std::string render_table(const std::map<std::string, MetricReport>& rows);

void to_json(nlohmann::json& j, const ClassMetrics& m);
void from_json(const nlohmann::json& j, ClassMetrics& m);
void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

}  // namespace hypsep::objectives
