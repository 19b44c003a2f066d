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

// End-to-end workflows shared by the CLI and the acceptance suite: training
// on a generated dataset, the evaluation modes, and UI bundle export.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hypsep/certainty.h"
#include "hypsep/data.h"
#include "hypsep/model.h"
#include "hypsep/objectives.h"
#include "json.hpp"

namespace hypsep::pipeline {

struct TrainConfig {
  std::filesystem::path dataset;
  model::ModelConfig model;
  objectives::LossConfig loss;
  std::size_t epochs = 30;
  std::size_t batch_size = 10;
  double chunk_seconds = 3.2;
  std::size_t chunks_per_track = 2;  // random-offset chunks per track per epoch
  double lr = 1e-3;
  int patience = 10;
  double lr_factor = 0.5;
  double dropout = 0.3;
  std::uint64_t seed = 1;
  std::size_t max_train_tracks = 0;  // 0 = whole split
  std::size_t max_val_tracks = 0;

  void validate() const;  // throws ConfigError
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  model::Model best;  // parameters of the epoch with the lowest validation loss
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<EpochLog> log;
};

TrainResult train(const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch = {});

nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EpochLog& e);

// ---- evaluation ----------------------------------------------------------------

// One test track, separated with the unthresholded masks.
struct SeparatedTrack {
  std::string id;
  data::TrackAudio audio;
  dsp::ComplexSpectrogram mixture;
  std::vector<dsp::ComplexSpectrogram> parent_specs;
  std::vector<dsp::ComplexSpectrogram> leaf_specs;
  model::NormStats stats;
  model::Separation separation;
};

SeparatedTrack separate(const model::Model& model, const data::TrackSpec& spec, const data::TrackAudio& audio);

// Resynthesizes parents and leaves from the given masks and scores them.
objectives::TrackMetrics score_masks(const SeparatedTrack& t, const dsp::MaskTensor& parent,
                                     const dsp::MaskTensor& leaf);

struct EvalOptions {
  std::string split = "test";
  std::size_t max_tracks = 0;  // 0 = whole split
};

struct Report {
  std::string split;
  objectives::MetricReport model;
  objectives::MetricReport no_proc;
  objectives::MetricReport oracle_psf;
  // Normalized-norm histograms by active-source count (hyperbolic only).
  std::optional<certainty::NormHistogramSet> norm_histograms;
};

Report evaluate_report(const model::Model& model, const std::filesystem::path& dataset, const EvalOptions& opts);

// 0, 0.05, ..., 0.95
std::vector<double> default_thetas();

struct ThresholdPoint {
  double theta = 0.0;
  double silenced_fraction = 0.0;
  objectives::MetricReport metrics;
};

struct ThresholdSweep {
  std::vector<ThresholdPoint> points;
  bool nested = true;  // silenced sets grow monotonically on every track
};

ThresholdSweep evaluate_threshold_sweep(const model::Model& model, const std::filesystem::path& dataset,
                                        const EvalOptions& opts, const std::vector<double>& thetas);

struct CertaintyComparison {
  std::vector<std::string> tracks;
  std::vector<double> pearson;
  double mean = 0.0;
  std::size_t passes = 0;
  double rate = 0.0;
};

CertaintyComparison evaluate_certainty(const model::Model& model, const std::filesystem::path& dataset,
                                       const EvalOptions& opts, std::size_t passes, double rate, std::uint64_t seed);

struct GridPoint {
  double curvature = 0.0;
  std::size_t dim = 0;
  objectives::MetricReport metrics;
};

// Retrains `base` at every (c, L) pair and reports test metrics.
std::vector<GridPoint> evaluate_grid(const TrainConfig& base, const std::vector<double>& curvatures,
                                     const std::vector<std::size_t>& dims, const EvalOptions& opts);

nlohmann::json to_json(const Report& r);
nlohmann::json to_json(const ThresholdSweep& s);
nlohmann::json to_json(const CertaintyComparison& c);
nlohmann::json to_json(const std::vector<GridPoint>& g);
nlohmann::json to_json(const certainty::NormHistogramSet& h);

// ---- UI bundle -----------------------------------------------------------------

struct ExportOptions {
  std::string track_id;
  std::vector<double> thetas = default_thetas();
  std::size_t region_grid = 128;  // decision-region raster size (L = 2 only)
  std::size_t bayesian_passes = 0;  // > 0 adds an MC-dropout certainty map
  std::uint64_t seed = 7;
};

// Writes manifest.json, audio/ and maps/ under `out`. Returns the manifest.
nlohmann::json export_bundle(const model::Model& model, const std::filesystem::path& dataset,
                             const std::filesystem::path& out, const ExportOptions& opts);

// "0.05" style directory name of a theta.
std::string theta_label(double theta);

}  // namespace hypsep::pipeline
