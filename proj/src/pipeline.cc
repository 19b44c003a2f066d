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

#include "hypsep/pipeline.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "hypsep/errors.h"
#include "hypsep/geometry.h"
#include "hypsep/optim.h"
#include "hypsep/wav.h"

namespace hypsep::pipeline {
namespace {

using nlohmann::json;
using objectives::Chunk;

struct LoadedTrack {
  std::string id;
  data::TrackAudio audio;
  model::NormStats stats;
};

std::vector<data::TrackSpec> split_tracks(const data::DatasetManifest& m, const std::string& split, std::size_t limit) {
  auto it = m.splits.find(split);
  if (it == m.splits.end()) throw DataError("dataset has no split '" + split + "'");
  std::vector<data::TrackSpec> tracks = it->second;
  if (tracks.empty()) throw DataError("split '" + split + "' is empty");
  if (limit > 0 && tracks.size() > limit) tracks.resize(limit);
  return tracks;
}

void check_compatible(const data::DatasetManifest& m, const model::ModelConfig& c) {
  if (m.sample_rate != c.stft.sample_rate) {
    throw ConfigError("dataset sample rate " + std::to_string(m.sample_rate) + " does not match the model's " +
                      std::to_string(c.stft.sample_rate));
  }
  if (!(m.hierarchy == c.hierarchy)) throw ConfigError("dataset hierarchy does not match the model's");
}

std::vector<LoadedTrack> load_split(const std::filesystem::path& root, const data::DatasetManifest& m,
                                    const std::string& split, std::size_t limit, const dsp::StftConfig& stft) {
  std::vector<LoadedTrack> out;
  for (const auto& spec : split_tracks(m, split, limit)) {
    LoadedTrack t;
    t.id = spec.id;
    t.audio = data::load_track(root, spec, m.hierarchy);
    t.stats = model::normalization_stats(dsp::stft(t.audio.mixture, stft));
    out.push_back(std::move(t));
  }
  return out;
}

dsp::Waveform slice(const dsp::Waveform& w, std::size_t offset, std::size_t len) {
  dsp::Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                     w.samples.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return out;
}

Chunk make_chunk(const LoadedTrack& t, std::size_t offset, std::size_t len, const dsp::StftConfig& stft) {
  Chunk c;
  c.mixture = dsp::stft(slice(t.audio.mixture, offset, len), stft);
  for (const auto& w : t.audio.parents) {
    c.parent_waves.push_back(slice(w, offset, len));
    c.parents.push_back(dsp::stft(c.parent_waves.back(), stft));
  }
  for (const auto& w : t.audio.leaves) {
    c.leaf_waves.push_back(slice(w, offset, len));
    c.leaves.push_back(dsp::stft(c.leaf_waves.back(), stft));
  }
  return c;
}

struct Batch {
  std::vector<Chunk> chunks;
  std::vector<model::NormStats> stats;
};

// Builds the graph for one batch and returns it with the scalar loss.
struct BatchGraph {
  std::unique_ptr<ad::Graph> graph;
  ad::Var loss;
};

BatchGraph batch_loss(const model::Model& m, const Batch& b, const objectives::LossConfig& loss,
                      const model::Dropout& drop) {
  std::vector<dsp::ComplexSpectrogram> mixtures;
  for (const auto& c : b.chunks) mixtures.push_back(c.mixture);
  const model::Features f = model::make_features(mixtures, b.stats);
  BatchGraph bg{std::make_unique<ad::Graph>(&m.params()), {}};
  const model::ForwardOutputs out = model::build_forward(*bg.graph, m.config(), f, drop);
  bg.loss = objectives::training_loss(out.parent_logits, out.leaf_logits, b.chunks, loss);
  return bg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

dsp::MaskTensor stack_masks(const std::vector<dsp::MaskTensor>& per_class) {
  dsp::MaskTensor m(per_class.size(), per_class[0].frames, per_class[0].bins);
  const std::size_t plane = m.frames * m.bins;
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    std::copy(per_class[k].values.begin(), per_class[k].values.end(), m.values.begin() + static_cast<std::ptrdiff_t>(k * plane));
  }
  return m;
}

dsp::MaskTensor oracle_masks(const dsp::ComplexSpectrogram& x, const std::vector<dsp::ComplexSpectrogram>& sources) {
  std::vector<dsp::MaskTensor> per;
  for (const auto& s : sources) per.push_back(dsp::oracle_psf_mask(s, x));
  return stack_masks(per);
}

std::vector<dsp::Waveform> repeat(const dsp::Waveform& w, std::size_t n) { return std::vector<dsp::Waveform>(n, w); }

double percentile(std::vector<double> v, double p) {
  if (v.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(std::floor(p / 100.0 * static_cast<double>(v.size() - 1)));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

void write_f32(const std::filesystem::path& path, const std::vector<double>& values) {
  std::vector<float> f(values.begin(), values.end());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<double> argmax_map(const dsp::MaskTensor& m) {
  std::vector<double> out(m.frames * m.bins, 0.0);
  for (std::size_t t = 0; t < m.frames; ++t) {
    for (std::size_t f = 0; f < m.bins; ++f) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < m.classes; ++k) {
        if (m.at(k, t, f) > m.at(best, t, f)) best = k;
      }
      out[t * m.bins + f] = static_cast<double>(best);
    }
  }
  return out;
}

// Class argmax of a head over a G x G raster of the unit disk in normalized
// coordinates; -1 outside the disk. Row 0 is the top (y = +1).
std::vector<double> region_raster(const model::Model& m, const std::string& head, std::size_t grid) {
  const double c = m.config().curvature;
  const double sqrt_c = std::sqrt(c);
  const Tensor& p = m.params().at("head." + head + ".p");
  const Tensor& a = m.params().at("head." + head + ".a");
  std::vector<double> out(grid * grid, -1.0);
  std::array<double, 2> z{};
  for (std::size_t r = 0; r < grid; ++r) {
    const double y = 1.0 - (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(grid);
    for (std::size_t col = 0; col < grid; ++col) {
      const double x = -1.0 + (2.0 * static_cast<double>(col) + 1.0) / static_cast<double>(grid);
      if (x * x + y * y >= 1.0) continue;
      z = {x / sqrt_c, y / sqrt_c};
      std::size_t best = 0;
      double best_v = -INFINITY;
      for (std::size_t k = 0; k < p.rows(); ++k) {
        const double v = geometry::kernel::mlr_logit(z, p.row(k), a.row(k), c);
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      out[r * grid + col] = static_cast<double>(best);
    }
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  loss.validate();
  if (dataset.empty()) throw ConfigError("no dataset path given");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(chunk_seconds > 0.0)) throw ConfigError("chunk length must be positive");
  if (chunks_per_track == 0) throw ConfigError("chunks per track must be positive");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (patience < 1 || !(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigError("invalid plateau schedule");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

TrainResult train(const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const data::DatasetManifest manifest = data::load_manifest(cfg.dataset);
  check_compatible(manifest, cfg.model);
  const dsp::StftConfig& stft = cfg.model.stft;
  const auto train_tracks = load_split(cfg.dataset, manifest, "train", cfg.max_train_tracks, stft);
  const auto val_tracks = load_split(cfg.dataset, manifest, "validation", cfg.max_val_tracks, stft);

  const auto chunk_len = static_cast<std::size_t>(std::llround(cfg.chunk_seconds * manifest.sample_rate));
  for (const auto* set : {&train_tracks, &val_tracks}) {
    for (const auto& t : *set) {
      if (t.audio.mixture.samples.size() < chunk_len) {
        throw ConfigError("track " + t.id + " is shorter than the training chunk length");
      }
    }
  }

  // Validation: the first chunk of every validation track, fixed across epochs.
  std::vector<Batch> val_batches;
  for (std::size_t i = 0; i < val_tracks.size(); i += cfg.batch_size) {
    Batch b;
    for (std::size_t j = i; j < std::min(val_tracks.size(), i + cfg.batch_size); ++j) {
      b.chunks.push_back(make_chunk(val_tracks[j], 0, chunk_len, stft));
      b.stats.push_back(val_tracks[j].stats);
    }
    val_batches.push_back(std::move(b));
  }

  std::mt19937_64 rng(cfg.seed);
  model::Model m = model::Model::initialize(cfg.model, rng());
  optim::ParameterOptimizer opt(m.params(), optim::AdamHyper{cfg.lr}, m.ball_params(), cfg.model.curvature);
  optim::PlateauSchedule schedule(cfg.lr, cfg.patience, cfg.lr_factor);

  TrainResult result;
  result.best_val_loss = INFINITY;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::pair<std::size_t, std::size_t>> items;
    for (std::size_t i = 0; i < train_tracks.size(); ++i) {
      const std::size_t span = train_tracks[i].audio.mixture.samples.size() - chunk_len;
      for (std::size_t j = 0; j < cfg.chunks_per_track; ++j) {
        items.emplace_back(i, std::uniform_int_distribution<std::size_t>(0, span)(rng));
      }
    }
    std::shuffle(items.begin(), items.end(), rng);

    double train_sum = 0.0;
    for (std::size_t i = 0; i < items.size(); i += cfg.batch_size) {
      Batch b;
      for (std::size_t j = i; j < std::min(items.size(), i + cfg.batch_size); ++j) {
        const LoadedTrack& t = train_tracks[items[j].first];
        b.chunks.push_back(make_chunk(t, items[j].second, chunk_len, stft));
        b.stats.push_back(t.stats);
      }
      const model::Dropout drop{cfg.dropout, false, rng()};
      BatchGraph bg = batch_loss(m, b, cfg.loss, drop);
      const ad::GradientSet grads = bg.graph->gradient(bg.loss);
      opt.step(m.params(), grads);
      train_sum += bg.loss.value().item() * static_cast<double>(b.chunks.size());
    }

    double val_sum = 0.0;
    std::size_t val_n = 0;
    for (const Batch& b : val_batches) {
      val_sum += batch_loss(m, b, cfg.loss, {}).loss.value().item() * static_cast<double>(b.chunks.size());
      val_n += b.chunks.size();
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = train_sum / static_cast<double>(items.size());
    log.val_loss = val_sum / static_cast<double>(val_n);
    log.lr = schedule.lr();
    if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss)) {
      throw NumericError("non-finite loss in epoch " + std::to_string(epoch));
    }
    if (log.val_loss < result.best_val_loss) {
      result.best_val_loss = log.val_loss;
      result.best_epoch = epoch;
      result.best = m;
    }
    schedule.step(log.val_loss);
    opt.set_lr(schedule.lr());
    log.seconds = seconds_since(t0);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

json to_json(const TrainConfig& c) {
  return json{{"dataset", c.dataset.string()},
              {"model", {{"geometry", model::to_string(c.model.geometry)},
                         {"curvature", c.model.curvature},
                         {"embedding_dim", c.model.embedding_dim},
                         {"hidden", c.model.hidden},
                         {"layers", c.model.layers}}},
              {"loss", objectives::to_string(c.loss.kind)},
              {"parent_weight", c.loss.parent_weight},
              {"leaf_weight", c.loss.leaf_weight},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"chunk_seconds", c.chunk_seconds},
              {"chunks_per_track", c.chunks_per_track},
              {"lr", c.lr},
              {"dropout", c.dropout},
              {"seed", c.seed}};
}

json to_json(const EpochLog& e) {
  return json{{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}, {"lr", e.lr}, {"seconds", e.seconds}};
}

SeparatedTrack separate(const model::Model& model, const data::TrackSpec& spec, const data::TrackAudio& audio) {
  const dsp::StftConfig& stft = model.config().stft;
  SeparatedTrack t;
  t.id = spec.id;
  t.audio = audio;
  t.mixture = dsp::stft(audio.mixture, stft);
  for (const auto& w : audio.parents) t.parent_specs.push_back(dsp::stft(w, stft));
  for (const auto& w : audio.leaves) t.leaf_specs.push_back(dsp::stft(w, stft));
  t.stats = model::normalization_stats(t.mixture);
  t.separation = model::forward_masks(model, t.mixture, t.stats);
  return t;
}

objectives::TrackMetrics score_masks(const SeparatedTrack& t, const dsp::MaskTensor& parent, const dsp::MaskTensor& leaf) {
  const auto parents = dsp::apply_mask_resynth(t.mixture, parent);
  const auto leaves = dsp::apply_mask_resynth(t.mixture, leaf);
  return objectives::score_track(parents, leaves, t.audio.parents, t.audio.leaves);
}

Report evaluate_report(const model::Model& model, const std::filesystem::path& dataset, const EvalOptions& opts) {
  const data::DatasetManifest manifest = data::load_manifest(dataset);
  check_compatible(manifest, model.config());
  const Hierarchy& h = manifest.hierarchy;
  std::vector<objectives::TrackMetrics> m, none, oracle;
  certainty::NormHistogramSet hist;
  const bool hyperbolic = model.config().geometry == model::Geometry::kHyperbolic;
  for (const auto& spec : split_tracks(manifest, opts.split, opts.max_tracks)) {
    const SeparatedTrack t = separate(model, spec, data::load_track(dataset, spec, h));
    m.push_back(score_masks(t, t.separation.parent, t.separation.leaf));
    none.push_back(objectives::score_track(repeat(t.audio.mixture, h.parents.size()),
                                           repeat(t.audio.mixture, h.leaves.size()), t.audio.parents, t.audio.leaves));
    oracle.push_back(score_masks(t, oracle_masks(t.mixture, t.parent_specs), oracle_masks(t.mixture, t.leaf_specs)));
    if (hyperbolic) hist.merge(certainty::norm_histograms(t.separation.embeddings, dsp::active_source_count(t.leaf_specs)));
  }
  Report r;
  r.split = opts.split;
  r.model = objectives::summarize(h, m);
  r.no_proc = objectives::summarize(h, none);
  r.oracle_psf = objectives::summarize(h, oracle);
  if (hyperbolic) r.norm_histograms = hist;
  return r;
}

std::vector<double> default_thetas() {
  std::vector<double> t;
  for (int i = 0; i < 20; ++i) t.push_back(0.05 * i);
  return t;
}

std::string theta_label(double theta) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", theta);
  return buf;
}

ThresholdSweep evaluate_threshold_sweep(const model::Model& model, const std::filesystem::path& dataset,
                                        const EvalOptions& opts, const std::vector<double>& thetas) {
  if (thetas.empty()) throw ConfigError("threshold grid is empty");
  if (!std::is_sorted(thetas.begin(), thetas.end())) throw ConfigError("threshold grid must be ascending");
  if (model.config().geometry != model::Geometry::kHyperbolic) {
    throw ConfigError("threshold sweeps need a hyperbolic model");
  }
  const data::DatasetManifest manifest = data::load_manifest(dataset);
  check_compatible(manifest, model.config());
  const Hierarchy& h = manifest.hierarchy;
  std::vector<std::vector<objectives::TrackMetrics>> per_theta(thetas.size());
  std::vector<double> silenced(thetas.size(), 0.0);
  ThresholdSweep sweep;
  std::size_t n_tracks = 0;
  for (const auto& spec : split_tracks(manifest, opts.split, opts.max_tracks)) {
    const SeparatedTrack t = separate(model, spec, data::load_track(dataset, spec, h));
    const certainty::CertaintyMap norm = certainty::hyperbolic_certainty_map(t.separation.embeddings);
    std::vector<bool> prev(norm.values.size(), false);
    for (std::size_t i = 0; i < thetas.size(); ++i) {
      const std::vector<bool> off = certainty::silenced_bins(norm, thetas[i]);
      std::size_t count = 0;
      for (std::size_t b = 0; b < off.size(); ++b) {
        if (prev[b] && !off[b]) sweep.nested = false;
        count += off[b] ? 1 : 0;
      }
      prev = off;
      silenced[i] += static_cast<double>(count) / static_cast<double>(off.size());
      per_theta[i].push_back(score_masks(t, certainty::threshold_masks(t.separation.parent, norm, thetas[i]),
                                         certainty::threshold_masks(t.separation.leaf, norm, thetas[i])));
    }
    ++n_tracks;
  }
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    sweep.points.push_back({thetas[i], silenced[i] / static_cast<double>(n_tracks), objectives::summarize(h, per_theta[i])});
  }
  return sweep;
}

CertaintyComparison evaluate_certainty(const model::Model& model, const std::filesystem::path& dataset,
                                       const EvalOptions& opts, std::size_t passes, double rate, std::uint64_t seed) {
  if (model.config().geometry != model::Geometry::kHyperbolic) {
    throw ConfigError("certainty comparison needs a hyperbolic model");
  }
  const data::DatasetManifest manifest = data::load_manifest(dataset);
  check_compatible(manifest, model.config());
  CertaintyComparison c;
  c.passes = passes;
  c.rate = rate;
  std::size_t index = 0;
  for (const auto& spec : split_tracks(manifest, opts.split, opts.max_tracks)) {
    const SeparatedTrack t = separate(model, spec, data::load_track(dataset, spec, manifest.hierarchy));
    const auto hyp = certainty::hyperbolic_certainty_map(t.separation.embeddings, certainty::CertaintyKind::kDistance);
    const auto bayes = certainty::bayesian_certainty(model, t.mixture, t.stats, passes, rate, seed + index++);
    c.tracks.push_back(t.id);
    c.pearson.push_back(certainty::pearson_correlation(hyp, bayes));
  }
  double s = 0.0;
  for (double v : c.pearson) s += v;
  c.mean = s / static_cast<double>(c.pearson.size());
  return c;
}

std::vector<GridPoint> evaluate_grid(const TrainConfig& base, const std::vector<double>& curvatures,
                                     const std::vector<std::size_t>& dims, const EvalOptions& opts) {
  std::vector<GridPoint> out;
  for (double c : curvatures) {
    for (std::size_t dim : dims) {
      TrainConfig cfg = base;
      cfg.model.curvature = c;
      cfg.model.embedding_dim = dim;
      const TrainResult r = train(cfg);
      out.push_back({c, dim, evaluate_report(r.best, cfg.dataset, opts).model});
    }
  }
  return out;
}

json to_json(const certainty::NormHistogramSet& h) {
  json buckets = json::array();
  for (std::size_t b = 0; b < certainty::kCountBuckets; ++b) {
    const double mean = h.mean(b);
    buckets.push_back({{"active_sources", certainty::bucket_label(b)},
                       {"population", h.population[b]},
                       {"mean_norm", std::isnan(mean) ? json(nullptr) : json(mean)},
                       {"histogram", h.histograms[b]}});
  }
  return json{{"bins", h.n_bins}, {"buckets", buckets}};
}

json to_json(const Report& r) {
  json j{{"split", r.split},
         {"rows", {{"model", r.model}, {"no_proc", r.no_proc}, {"oracle_psf", r.oracle_psf}}}};
  if (r.norm_histograms) j["norm_histograms"] = to_json(*r.norm_histograms);
  return j;
}

json to_json(const ThresholdSweep& s) {
  json points = json::array();
  for (const auto& p : s.points) {
    points.push_back({{"theta", p.theta}, {"silenced_fraction", p.silenced_fraction}, {"metrics", p.metrics}});
  }
  return json{{"nested", s.nested}, {"points", points}};
}

json to_json(const CertaintyComparison& c) {
  json tracks = json::array();
  for (std::size_t i = 0; i < c.tracks.size(); ++i) tracks.push_back({{"track", c.tracks[i]}, {"pearson", c.pearson[i]}});
  return json{{"passes", c.passes}, {"dropout_rate", c.rate}, {"mean_pearson", c.mean}, {"tracks", tracks}};
}

json to_json(const std::vector<GridPoint>& g) {
  json out = json::array();
  for (const auto& p : g) out.push_back({{"curvature", p.curvature}, {"embedding_dim", p.dim}, {"metrics", p.metrics}});
  return out;
}

json export_bundle(const model::Model& model, const std::filesystem::path& dataset, const std::filesystem::path& out,
                   const ExportOptions& opts) {
  if (opts.thetas.empty() || opts.thetas.front() != 0.0 || !std::is_sorted(opts.thetas.begin(), opts.thetas.end())) {
    throw ConfigError("threshold grid must be ascending and start at 0");
  }
  const model::ModelConfig& cfg = model.config();
  if (cfg.geometry != model::Geometry::kHyperbolic) throw ConfigError("bundles need a hyperbolic model");
  const data::DatasetManifest manifest = data::load_manifest(dataset);
  check_compatible(manifest, cfg);
  const data::TrackSpec& spec = manifest.find(opts.track_id);
  const Hierarchy& h = manifest.hierarchy;
  const SeparatedTrack t = separate(model, spec, data::load_track(dataset, spec, h));
  const certainty::CertaintyMap norm = certainty::hyperbolic_certainty_map(t.separation.embeddings);

  std::error_code ec;
  std::filesystem::create_directories(out / "audio", ec);
  if (!ec) std::filesystem::create_directories(out / "maps", ec);
  if (ec) throw DataError("cannot create bundle directory " + out.string() + ": " + ec.message());

  dsp::write_wav(out / "audio" / "mixture.wav", t.audio.mixture);
  json stems = json::object();
  json metrics = json::array();
  for (double theta : opts.thetas) {
    const std::string label = theta_label(theta);
    const auto parent = certainty::threshold_masks(t.separation.parent, norm, theta);
    const auto leaf = certainty::threshold_masks(t.separation.leaf, norm, theta);
    const auto parent_est = dsp::apply_mask_resynth(t.mixture, parent);
    const auto leaf_est = dsp::apply_mask_resynth(t.mixture, leaf);
    std::filesystem::create_directories(out / "audio" / label, ec);
    if (ec) throw DataError("cannot create " + (out / "audio" / label).string());
    json files = json::object();
    for (std::size_t p = 0; p < h.parents.size(); ++p) {
      const std::string rel = "audio/" + label + "/" + h.parents[p] + ".wav";
      dsp::write_wav(out / rel, parent_est[p]);
      files[h.parents[p]] = rel;
    }
    for (std::size_t k = 0; k < h.leaves.size(); ++k) {
      const std::string rel = "audio/" + label + "/" + h.leaves[k] + ".wav";
      dsp::write_wav(out / rel, leaf_est[k]);
      files[h.leaves[k]] = rel;
    }
    stems[label] = files;
    const objectives::TrackMetrics tm = objectives::score_track(parent_est, leaf_est, t.audio.parents, t.audio.leaves);
    const objectives::MetricReport r = objectives::summarize(h, std::span(&tm, 1));
    std::size_t off = 0;
    for (double v : norm.values) off += v < theta ? 1 : 0;
    json mj = r;
    metrics.push_back({{"theta", theta},
                       {"label", label},
                       {"silenced_fraction", static_cast<double>(off) / static_cast<double>(norm.values.size())},
                       {"classes", mj["classes"]},
                       {"averages", mj["averages"]}});
  }

  const std::size_t frames = t.mixture.frames();
  const std::size_t bins = t.mixture.bins();
  json maps = json::object();
  auto add_map = [&](const std::string& name, const std::vector<double>& values, std::vector<std::size_t> shape,
                     bool display) {
    const std::string rel = "maps/" + name + ".bin";
    write_f32(out / rel, values);
    json d{{"path", rel}, {"shape", shape}, {"dtype", "float32"}, {"byte_order", "little"}};
    if (display) d["display_range"] = {percentile(values, 30.0), percentile(values, 95.0)};
    maps[name] = d;
  };
  add_map("embeddings", t.separation.embeddings.values, {frames, bins, cfg.embedding_dim}, false);
  add_map("norm", norm.values, {frames, bins}, true);
  add_map("distance",
          certainty::hyperbolic_certainty_map(t.separation.embeddings, certainty::CertaintyKind::kDistance).values,
          {frames, bins}, true);
  add_map("leaf_argmax", argmax_map(t.separation.leaf), {frames, bins}, false);
  add_map("parent_argmax", argmax_map(t.separation.parent), {frames, bins}, false);
  if (cfg.embedding_dim == 2) {
    add_map("regions_leaf", region_raster(model, "leaf", opts.region_grid), {opts.region_grid, opts.region_grid}, false);
    add_map("regions_parent", region_raster(model, "parent", opts.region_grid), {opts.region_grid, opts.region_grid},
            false);
  }
  if (opts.bayesian_passes > 0) {
    add_map("bayesian",
            certainty::bayesian_certainty(model, t.mixture, t.stats, opts.bayesian_passes, 0.5, opts.seed).values,
            {frames, bins}, true);
  }

  json m{{"format_version", 1},
         {"track_id", t.id},
         {"sample_rate", manifest.sample_rate},
         {"frames", frames},
         {"bins", bins},
         {"embedding_dim", cfg.embedding_dim},
         {"curvature", cfg.curvature},
         {"geometry", model::to_string(cfg.geometry)},
         {"classes", {{"parents", h.parents}, {"leaves", h.leaves}, {"leaf_parent", h.leaf_parent}}},
         {"thresholds", opts.thetas},
         {"audio", {{"mixture", "audio/mixture.wav"}, {"stems", stems}}},
         {"metrics", metrics},
         {"maps", maps}};
  std::ofstream mf(out / "manifest.json");
  if (!mf) throw DataError("cannot write " + (out / "manifest.json").string());
  mf << m.dump(2) << '\n';
  return m;
}

}  // namespace hypsep::pipeline
