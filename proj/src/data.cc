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

#include "hypsep/data.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hypsep/errors.h"
#include "hypsep/wav.h"

namespace hypsep::data {
namespace {

using nlohmann::json;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Levels are set relative to this RMS before the peak cap.
constexpr double kReferenceRms = 0.05;
constexpr double kPeakCap = 0.4;
// 2^-23: with |leaf| <= 0.4 and five leaves every partial sum stays below 2,
// where float32 spacing is at most 2^-23, so sums are exact in float32 too.
constexpr double kQuantum = 1.0 / 8388608.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool bernoulli(double p) { return uniform(0.0, 1.0) < p; }

 private:
  std::mt19937_64 engine_;
};

// Raised-cosine ramp gain for position i inside a segment of length n.
double ramp(std::size_t i, std::size_t n, std::size_t ramp_len) {
  const std::size_t edge = std::min(i, n - 1 - i);
  if (edge >= ramp_len) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(ramp_len));
}

std::vector<double> low_harmonic(const LeafParams& p, Rng& rng, std::size_t n, double sr) {
  std::vector<double> out(n, 0.0);
  const std::size_t note_len = std::max<std::size_t>(1, static_cast<std::size_t>(sr / p.rate));
  for (std::size_t start = 0; start < n; start += note_len) {
    const std::size_t len = std::min(note_len, n - start);
    const double f0 = rng.uniform(p.f0_min, p.f0_max);
    const double amp = rng.uniform(0.6, 1.0);
    std::vector<double> phase;
    for (int h = 1; h * f0 < 1200.0; ++h) phase.push_back(rng.uniform(0.0, kTwoPi));
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / sr;
      double v = 0.0;
      for (std::size_t h = 0; h < phase.size(); ++h) {
        const double k = static_cast<double>(h + 1);
        v += std::sin(kTwoPi * k * f0 * t + phase[h]) / k;
      }
      out[start + i] = amp * v * ramp(i, len, static_cast<std::size_t>(0.02 * sr));
    }
  }
  return out;
}

std::vector<double> mid_harmonic(const LeafParams& p, Rng& rng, std::size_t n, double sr) {
  std::vector<double> out(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.0, 0.2) * sr);
  while (pos < n) {
    const std::size_t len = std::min(n - pos, static_cast<std::size_t>(rng.uniform(0.6, 1.4) / p.rate * sr));
    const double f0 = rng.uniform(p.f0_min, p.f0_max);
    const double glide = rng.uniform(-0.15, 0.15);
    const double vib_rate = rng.uniform(4.5, 6.5);
    const double vib_phase = rng.uniform(0.0, kTwoPi);
    double phi = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / sr;
      const double frac = static_cast<double>(i) / static_cast<double>(len);
      const double f = f0 * (1.0 + glide * frac) * (1.0 + 0.03 * std::sin(kTwoPi * vib_rate * t + vib_phase));
      phi += kTwoPi * f / sr;
      double v = 0.0;
      for (int h = 1; h * f < 3500.0; ++h) v += std::sin(h * phi) / std::pow(static_cast<double>(h), 1.3);
      out[pos + i] = v * ramp(i, len, static_cast<std::size_t>(0.03 * sr));
    }
    pos += len + static_cast<std::size_t>(rng.uniform(0.05, 0.3) * sr);
  }
  return out;
}

std::vector<double> plucked(const LeafParams& p, Rng& rng, std::size_t n, double sr) {
  std::vector<double> out(n, 0.0);
  double t_onset = rng.uniform(0.0, 1.0 / p.rate);
  const double duration = static_cast<double>(n) / sr;
  while (t_onset < duration) {
    const double f0 = rng.uniform(p.f0_min, p.f0_max);
    const double amp = rng.uniform(0.5, 1.0);
    const std::size_t start = static_cast<std::size_t>(t_onset * sr);
    const std::size_t len = std::min(n - start, static_cast<std::size_t>(6.0 * p.decay * sr));
    for (int h = 1; h * f0 < 4000.0; ++h) {
      const double a = amp * std::pow(0.55, h - 1);
      const double tau = p.decay / (1.0 + 0.5 * (h - 1));
      for (std::size_t i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / sr;
        out[start + i] += a * std::exp(-t / tau) * std::sin(kTwoPi * h * f0 * t);
      }
    }
    t_onset += rng.uniform(0.5, 1.5) / p.rate;
  }
  return out;
}

std::vector<double> percussive(const LeafParams& p, Rng& rng, std::size_t n, double sr) {
  std::vector<double> out(n, 0.0);
  const double beat = 1.0 / p.rate;
  const double duration = static_cast<double>(n) / sr;
  for (double t_hit = rng.uniform(0.0, beat); t_hit < duration; t_hit += beat) {
    if (!rng.bernoulli(0.85)) continue;
    const double accent = rng.uniform(0.4, 1.0);
    const double tau = p.decay * rng.uniform(0.6, 1.4);
    const std::size_t start = static_cast<std::size_t>(t_hit * sr);
    const std::size_t len = std::min(n - start, static_cast<std::size_t>(8.0 * tau * sr));
    for (std::size_t i = 0; i < len; ++i) {
      out[start + i] += accent * std::exp(-static_cast<double>(i) / sr / tau) * rng.normal();
    }
  }
  return out;
}

// Second-order band-pass (constant peak gain) applied twice.
std::vector<double> band_noise(const LeafParams& p, Rng& rng, std::size_t n, double sr) {
  std::vector<double> x(n);
  for (double& v : x) v = rng.normal();
  const double center = std::sqrt(p.band_lo * p.band_hi);
  const double q = center / (p.band_hi - p.band_lo);
  const double w0 = kTwoPi * center / sr;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  for (int pass = 0; pass < 2; ++pass) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
  const double mod_phase = rng.uniform(0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    x[i] *= 0.55 + 0.45 * std::sin(kTwoPi * p.rate * t + mod_phase);
  }
  return x;
}

// Segments of about one second, each sounding with probability `activity`;
// at least one segment always sounds.
void apply_activity(std::vector<double>& x, double activity, Rng& rng, double sr) {
  const std::size_t seg = static_cast<std::size_t>(sr);
  const std::size_t n_seg = (x.size() + seg - 1) / seg;
  std::vector<bool> on(n_seg);
  bool any = false;
  for (std::size_t s = 0; s < n_seg; ++s) any |= (on[s] = rng.bernoulli(activity));
  if (!any) on[static_cast<std::size_t>(rng.uniform(0.0, static_cast<double>(n_seg))) % n_seg] = true;
  const std::size_t ramp_len = static_cast<std::size_t>(0.02 * sr);
  for (std::size_t s = 0; s < n_seg; ++s) {
    const std::size_t begin = s * seg;
    const std::size_t end = std::min(x.size(), begin + seg);
    const bool prev = s > 0 && on[s - 1];
    const bool next = s + 1 < n_seg && on[s + 1];
    for (std::size_t i = begin; i < end; ++i) {
      if (!on[s]) {
        x[i] = 0.0;
        continue;
      }
      double g = 1.0;
      if (!prev && i - begin < ramp_len) g = ramp(i - begin, 2 * ramp_len, ramp_len);
      if (!next && end - 1 - i < ramp_len) g = std::min(g, ramp(end - 1 - i, 2 * ramp_len, ramp_len));
      x[i] *= g;
    }
  }
}

LeafParams draw_params(const std::string& leaf, Rng& rng) {
  LeafParams p;
  p.gain_db = rng.uniform(-3.0, 3.0);
  p.activity = rng.uniform(0.6, 0.95);
  if (leaf == "low_harmonic") {
    p.f0_min = 60.0;
    p.f0_max = 120.0;
    p.rate = rng.uniform(1.0, 3.0);
  } else if (leaf == "mid_harmonic") {
    p.f0_min = 200.0;
    p.f0_max = 400.0;
    p.rate = rng.uniform(2.0, 4.0);
  } else if (leaf == "plucked") {
    p.f0_min = 300.0;
    p.f0_max = 800.0;
    p.rate = rng.uniform(2.0, 5.0);
    p.decay = rng.uniform(0.08, 0.3);
  } else if (leaf == "percussive") {
    p.rate = rng.uniform(2.0, 4.0);
    p.decay = rng.uniform(0.01, 0.04);
  } else if (leaf == "band_noise") {
    p.band_lo = rng.uniform(1000.0, 1400.0);
    p.band_hi = rng.uniform(2200.0, 3000.0);
    p.rate = rng.uniform(1.0, 4.0);
  } else {
    throw ConfigError("no synthesis recipe for leaf class '" + leaf + "'");
  }
  return p;
}

dsp::Waveform sum_of(const std::vector<dsp::Waveform>& leaves, const std::vector<std::size_t>& idx, std::size_t n) {
  dsp::Waveform out;
  out.sample_rate = leaves.front().sample_rate;
  out.samples.assign(n, 0.0);
  for (std::size_t k : idx) {
    for (std::size_t i = 0; i < n; ++i) out.samples[i] += leaves[k].samples[i];
  }
  return out;
}

std::filesystem::path leaf_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / ("leaf_" + name + ".wav");
}
std::filesystem::path parent_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / ("parent_" + name + ".wav");
}

}  // namespace

const TrackSpec& DatasetManifest::find(const std::string& track_id) const {
  for (const auto& [split, tracks] : splits) {
    for (const auto& t : tracks) {
      if (t.id == track_id) return t;
    }
  }
  throw DataError("track '" + track_id + "' is not in the dataset manifest");
}

dsp::Waveform synth_leaf_source(const TrackSpec& spec, const std::string& leaf, int sample_rate) {
  auto it = spec.leaves.find(leaf);
  if (it == spec.leaves.end()) throw std::invalid_argument("track has no parameters for leaf '" + leaf + "'");
  if (!(spec.duration > 0.0)) throw std::invalid_argument("track duration must be positive");
  const LeafParams& p = it->second;
  const double sr = static_cast<double>(sample_rate);
  const std::size_t n = static_cast<std::size_t>(std::llround(spec.duration * sr));

  std::uint64_t leaf_seed = spec.seed;
  for (char ch : leaf) leaf_seed = splitmix64(leaf_seed ^ static_cast<unsigned char>(ch));
  Rng rng(leaf_seed);

  std::vector<double> x;
  if (leaf == "low_harmonic") {
    x = low_harmonic(p, rng, n, sr);
  } else if (leaf == "mid_harmonic") {
    x = mid_harmonic(p, rng, n, sr);
  } else if (leaf == "plucked") {
    x = plucked(p, rng, n, sr);
  } else if (leaf == "percussive") {
    x = percussive(p, rng, n, sr);
  } else if (leaf == "band_noise") {
    x = band_noise(p, rng, n, sr);
  } else {
    throw std::invalid_argument("unknown leaf class '" + leaf + "'");
  }
  apply_activity(x, p.activity, rng, sr);

  double energy = 0.0, peak = 0.0;
  for (double v : x) {
    energy += v * v;
    peak = std::max(peak, std::abs(v));
  }
  const double rms = std::sqrt(energy / static_cast<double>(n));
  double gain = rms > 0.0 ? kReferenceRms * std::pow(10.0, p.gain_db / 20.0) / rms : 0.0;
  if (peak * gain > kPeakCap) gain = kPeakCap / peak;

  dsp::Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double q = std::round(x[i] * gain / kQuantum) * kQuantum;
    w.samples[i] = std::clamp(q, -kPeakCap, kPeakCap);
  }
  return w;
}

Mix mix_track(const std::vector<dsp::Waveform>& leaves, const Hierarchy& hierarchy) {
  if (leaves.size() != hierarchy.leaves.size()) throw std::invalid_argument("mix_track: leaf count does not match hierarchy");
  const std::size_t n = leaves.front().samples.size();
  for (const auto& l : leaves) {
    if (l.samples.size() != n) throw std::invalid_argument("mix_track: leaf lengths differ");
  }
  std::vector<std::size_t> all(leaves.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  Mix m;
  m.mixture = sum_of(leaves, all, n);
  for (std::size_t p = 0; p < hierarchy.parents.size(); ++p) m.parents.push_back(sum_of(leaves, hierarchy.leaves_of(p), n));
  return m;
}

TrackAudio synthesize_track(const TrackSpec& spec, const Hierarchy& hierarchy, int sample_rate) {
  TrackAudio audio;
  for (const auto& leaf : hierarchy.leaves) audio.leaves.push_back(synth_leaf_source(spec, leaf, sample_rate));
  Mix m = mix_track(audio.leaves, hierarchy);
  audio.mixture = std::move(m.mixture);
  audio.parents = std::move(m.parents);
  return audio;
}

DatasetManifest plan_dataset(std::size_t n_tracks, double duration, std::uint64_t master_seed, int sample_rate,
                             const Hierarchy& hierarchy) {
  hierarchy.validate();
  if (n_tracks < 10) throw ConfigError("a dataset needs at least 10 tracks for three non-empty splits");
  if (!(duration > 0.0)) throw ConfigError("track duration must be positive");
  if (sample_rate <= 0) throw ConfigError("sample rate must be positive");

  DatasetManifest m;
  m.sample_rate = sample_rate;
  m.master_seed = master_seed;
  m.hierarchy = hierarchy;
  const auto n_train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n_tracks)));
  const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n_tracks)));
  auto& train = m.splits["train"];
  auto& val = m.splits["validation"];
  auto& test = m.splits["test"];
  for (std::size_t i = 0; i < n_tracks; ++i) {
    TrackSpec t;
    char id[32];
    std::snprintf(id, sizeof id, "track_%04zu", i);
    t.id = id;
    t.seed = splitmix64(master_seed + splitmix64(i));
    t.duration = duration;
    Rng rng(t.seed);
    for (const auto& leaf : hierarchy.leaves) t.leaves[leaf] = draw_params(leaf, rng);
    (i < n_train ? train : i < n_train + n_val ? val : test).push_back(std::move(t));
  }
  return m;
}

DatasetManifest build_dataset(const std::filesystem::path& root, std::size_t n_tracks, double duration,
                              std::uint64_t master_seed, int sample_rate) {
  DatasetManifest m = plan_dataset(n_tracks, duration, master_seed, sample_rate);
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  if (ec) throw DataError("cannot create dataset directory " + root.string() + ": " + ec.message());
  for (const auto& [split, tracks] : m.splits) {
    for (const auto& spec : tracks) {
      const TrackAudio audio = synthesize_track(spec, m.hierarchy, sample_rate);
      const auto dir = root / spec.id;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
      dsp::write_wav(dir / "mixture.wav", audio.mixture);
      for (std::size_t p = 0; p < m.hierarchy.parents.size(); ++p) {
        dsp::write_wav(parent_path(dir, m.hierarchy.parents[p]), audio.parents[p]);
      }
      for (std::size_t k = 0; k < m.hierarchy.leaves.size(); ++k) {
        dsp::write_wav(leaf_path(dir, m.hierarchy.leaves[k]), audio.leaves[k]);
      }
    }
  }
  save_manifest(root, m);
  return m;
}

void save_manifest(const std::filesystem::path& root, const DatasetManifest& manifest) {
  std::ofstream out(root / "manifest.json");
  if (!out) throw DataError("cannot write " + (root / "manifest.json").string());
  out << json(manifest).dump(2) << '\n';
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path);
  if (!in) throw DataError("no dataset manifest at " + path.string());
  try {
    DatasetManifest m = json::parse(in).get<DatasetManifest>();
    if (m.format_version != kManifestVersion) {
      throw DataError("unsupported dataset manifest version " + std::to_string(m.format_version));
    }
    m.hierarchy.validate();
    return m;
  } catch (const json::exception& e) {
    throw DataError("malformed dataset manifest " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("dataset manifest " + path.string() + ": " + e.what());
  }
}

TrackAudio load_track(const std::filesystem::path& root, const TrackSpec& spec, const Hierarchy& hierarchy) {
  const auto dir = root / spec.id;
  TrackAudio audio;
  audio.mixture = dsp::read_wav(dir / "mixture.wav");
  for (const auto& p : hierarchy.parents) audio.parents.push_back(dsp::read_wav(parent_path(dir, p)));
  for (const auto& l : hierarchy.leaves) audio.leaves.push_back(dsp::read_wav(leaf_path(dir, l)));
  const std::size_t n = audio.mixture.samples.size();
  auto check = [&](const dsp::Waveform& w) {
    if (w.samples.size() != n) throw DataError("track " + spec.id + ": stem lengths differ");
  };
  for (const auto& w : audio.parents) check(w);
  for (const auto& w : audio.leaves) check(w);
  return audio;
}

void to_json(json& j, const LeafParams& p) {
  j = json{{"f0_min", p.f0_min}, {"f0_max", p.f0_max}, {"band_lo", p.band_lo}, {"band_hi", p.band_hi},
           {"rate", p.rate},     {"decay", p.decay},   {"gain_db", p.gain_db}, {"activity", p.activity}};
}

void from_json(const json& j, LeafParams& p) {
  j.at("f0_min").get_to(p.f0_min);
  j.at("f0_max").get_to(p.f0_max);
  j.at("band_lo").get_to(p.band_lo);
  j.at("band_hi").get_to(p.band_hi);
  j.at("rate").get_to(p.rate);
  j.at("decay").get_to(p.decay);
  j.at("gain_db").get_to(p.gain_db);
  j.at("activity").get_to(p.activity);
}

void to_json(json& j, const TrackSpec& t) {
  j = json{{"id", t.id}, {"seed", t.seed}, {"duration", t.duration}, {"leaves", t.leaves}};
}

void from_json(const json& j, TrackSpec& t) {
  j.at("id").get_to(t.id);
  j.at("seed").get_to(t.seed);
  j.at("duration").get_to(t.duration);
  j.at("leaves").get_to(t.leaves);
}

void to_json(json& j, const DatasetManifest& m) {
  j = json{{"format_version", m.format_version},
           {"sample_rate", m.sample_rate},
           {"master_seed", m.master_seed},
           {"hierarchy", m.hierarchy},
           {"splits", m.splits}};
}

void from_json(const json& j, DatasetManifest& m) {
  j.at("format_version").get_to(m.format_version);
  j.at("sample_rate").get_to(m.sample_rate);
  j.at("master_seed").get_to(m.master_seed);
  j.at("hierarchy").get_to(m.hierarchy);
  j.at("splits").get_to(m.splits);
}

}  // namespace hypsep::data
