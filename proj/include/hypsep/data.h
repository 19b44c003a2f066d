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

// Synthetic hierarchical dataset: five leaf sources in two parent groups,
// summed without gains into a mixture plus one submix per parent.
//
// On-disk layout under a dataset root:
//   manifest.json
//   <track id>/mixture.wav
//   <track id>/parent_<name>.wav
//   <track id>/leaf_<name>.wav
// All audio is mono float32 at the manifest sample rate.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hypsep/dsp.h"
#include "hypsep/hierarchy.h"
#include "json.hpp"

namespace hypsep::data {

inline constexpr int kManifestVersion = 1;

// Generation knobs for one leaf of one track. Which fields matter depends on
// the leaf recipe (see synth_leaf_source).
struct LeafParams {
  double f0_min = 0.0;
  double f0_max = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
  double rate = 0.0;      // notes / onsets / tempo / modulation rate, per recipe
  double decay = 0.0;     // seconds
  double gain_db = 0.0;   // level relative to the reference RMS
  double activity = 1.0;  // probability that a segment is sounding
};

struct TrackSpec {
  std::string id;
  std::uint64_t seed = 0;
  double duration = 0.0;
  std::map<std::string, LeafParams> leaves;
};

struct DatasetManifest {
  int format_version = kManifestVersion;
  int sample_rate = 8000;
  std::uint64_t master_seed = 0;
  Hierarchy hierarchy;
  std::map<std::string, std::vector<TrackSpec>> splits;  // "train", "validation", "test"

  const TrackSpec& find(const std::string& track_id) const;  // throws DataError
};

struct TrackAudio {
  dsp::Waveform mixture;
  std::vector<dsp::Waveform> parents;  // hierarchy.parents order
  std::vector<dsp::Waveform> leaves;   // hierarchy.leaves order
};

// Leaf recipes by name:
//   low_harmonic  harmonic stack, f0 in [f0_min, f0_max] (60-120 Hz), partials below 1.2 kHz
//   mid_harmonic  harmonic syllables, f0 200-400 Hz with vibrato
//   plucked       exponentially decaying tones, f0 300-800 Hz
//   percussive    decaying broadband noise bursts on a tempo grid
//   band_noise    amplitude-modulated noise band inside [band_lo, band_hi] (1-3 kHz)
// Output is deterministic in (spec, leaf), bounded by 0.4 in magnitude and
// quantized to a 2^-23 grid so every partial sum is exact in float32.
dsp::Waveform synth_leaf_source(const TrackSpec& spec, const std::string& leaf, int sample_rate);

// mixture = sum of leaves in leaf order; each parent submix = sum of its leaves.
struct Mix {
  dsp::Waveform mixture;
  std::vector<dsp::Waveform> parents;
};
Mix mix_track(const std::vector<dsp::Waveform>& leaves, const Hierarchy& hierarchy);

TrackAudio synthesize_track(const TrackSpec& spec, const Hierarchy& hierarchy, int sample_rate);

// Draws the manifest only (no audio). Splits are 70/20/10 by track order.
DatasetManifest plan_dataset(std::size_t n_tracks, double duration, std::uint64_t master_seed,
                             int sample_rate = 8000, const Hierarchy& hierarchy = Hierarchy::default_taxonomy());

// Plans the dataset and writes manifest plus audio under `root`.
DatasetManifest build_dataset(const std::filesystem::path& root, std::size_t n_tracks, double duration,
                              std::uint64_t master_seed, int sample_rate = 8000);

DatasetManifest load_manifest(const std::filesystem::path& root);
void save_manifest(const std::filesystem::path& root, const DatasetManifest& manifest);
TrackAudio load_track(const std::filesystem::path& root, const TrackSpec& spec, const Hierarchy& hierarchy);

void to_json(nlohmann::json& j, const LeafParams& p);
void from_json(const nlohmann::json& j, LeafParams& p);
void to_json(nlohmann::json& j, const TrackSpec& t);
void from_json(const nlohmann::json& j, TrackSpec& t);
void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

}  // namespace hypsep::data
