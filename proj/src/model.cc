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

#include "hypsep/model.h"

#include <cmath>
#include <stdexcept>

#include "hypsep/errors.h"
#include "hypsep/geometry.h"

namespace hypsep::model {
namespace {

using ad::Graph;
using ad::Var;

constexpr double kLogFloor = 1e-8;

Tensor uniform(std::size_t rows, std::size_t cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

// One direction of a tanh recurrence over time-major rows.
Var recurrence(Graph& g, const std::string& prefix, Var projected, std::size_t frames, std::size_t batch,
               bool reverse) {
  Var w_hh = g.parameter(prefix + ".w_hh");
  std::vector<Var> steps(frames);
  Var h;
  for (std::size_t i = 0; i < frames; ++i) {
    const std::size_t t = reverse ? frames - 1 - i : i;
    Var pre = ad::slice_rows(projected, t * batch, batch);
    if (i > 0) pre = ad::add(pre, ad::matmul(h, w_hh));
    h = ad::tanh(pre);
    steps[t] = h;
  }
  return ad::concat_rows(steps);
}

Var bidirectional_layer(Graph& g, const std::string& prefix, Var x, std::size_t frames, std::size_t batch) {
  std::vector<Var> dirs;
  for (const char* dir : {"fwd", "bwd"}) {
    const std::string p = prefix + "." + dir;
    Var projected = ad::add_bias(ad::matmul(x, g.parameter(p + ".w_ih")), g.parameter(p + ".b"));
    dirs.push_back(recurrence(g, p, projected, frames, batch, std::string(dir) == "bwd"));
  }
  return ad::concat_cols(dirs);
}

std::size_t layer_input_dim(const ModelConfig& c, std::size_t layer) { return layer == 0 ? c.bins() : 2 * c.hidden; }

ad::MlrMode mlr_mode(Geometry g) { return g == Geometry::kHyperbolic ? ad::MlrMode::kHyperbolic : ad::MlrMode::kEuclidean; }

// Expected parameter shapes, by name.
std::map<std::string, std::pair<std::size_t, std::size_t>> parameter_shapes(const ModelConfig& c) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> s;
  for (std::size_t l = 0; l < c.layers; ++l) {
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string p = layer_prefix(l) + "." + dir;
      s[p + ".w_ih"] = {layer_input_dim(c, l), c.hidden};
      s[p + ".w_hh"] = {c.hidden, c.hidden};
      s[p + ".b"] = {1, c.hidden};
    }
  }
  s["dense.w"] = {2 * c.hidden, c.bins() * c.embedding_dim};
  s["dense.b"] = {1, c.bins() * c.embedding_dim};
  s["head.parent.p"] = s["head.parent.a"] = {c.hierarchy.parents.size(), c.embedding_dim};
  s["head.leaf.p"] = s["head.leaf.a"] = {c.hierarchy.leaves.size(), c.embedding_dim};
  return s;
}

Features single(const dsp::ComplexSpectrogram& x, const NormStats& stats) {
  return make_features(std::span(&x, 1), std::span(&stats, 1));
}

}  // namespace

void ModelConfig::validate() const {
  hierarchy.validate();
  if (!(curvature > 0.0) || !std::isfinite(curvature)) throw ConfigError("curvature must be positive");
  if (embedding_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (hidden == 0 || layers == 0) throw ConfigError("encoder needs at least one layer with one unit");
  try {
    stft.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::string to_string(Geometry g) { return g == Geometry::kHyperbolic ? "hyperbolic" : "euclidean"; }

Geometry geometry_from_string(const std::string& s) {
  if (s == "hyperbolic") return Geometry::kHyperbolic;
  if (s == "euclidean") return Geometry::kEuclidean;
  throw ConfigError("unknown geometry '" + s + "' (expected hyperbolic or euclidean)");
}

NormStats normalization_stats(const dsp::ComplexSpectrogram& x) {
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& v : x.values()) {
    const double f = std::log(std::abs(v) + kLogFloor);
    sum += f;
    sum_sq += f * f;
  }
  const double n = static_cast<double>(x.values().size());
  NormStats s;
  s.mean = sum / n;
  s.stddev = std::sqrt(std::max(sum_sq / n - s.mean * s.mean, 0.0));
  if (s.stddev < 1e-8) s.stddev = 1.0;
  return s;
}

Features make_features(std::span<const dsp::ComplexSpectrogram> batch, std::span<const NormStats> stats) {
  if (batch.empty() || batch.size() != stats.size()) throw std::invalid_argument("make_features: batch/stats size mismatch");
  const std::size_t frames = batch[0].frames();
  const std::size_t bins = batch[0].bins();
  for (const auto& x : batch) {
    if (x.frames() != frames || x.bins() != bins) throw std::invalid_argument("make_features: ragged batch");
  }
  Features f;
  f.frames = frames;
  f.batch = batch.size();
  f.values = Tensor(frames * f.batch, bins);
  for (std::size_t b = 0; b < f.batch; ++b) {
    for (std::size_t t = 0; t < frames; ++t) {
      auto row = f.values.row(t * f.batch + b);
      auto frame = batch[b].frame(t);
      for (std::size_t k = 0; k < bins; ++k) {
        row[k] = (std::log(std::abs(frame[k]) + kLogFloor) - stats[b].mean) / stats[b].stddev;
      }
    }
  }
  return f;
}

Model::Model(ModelConfig config, ad::ParameterSet params) : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
  check_params();
}

Model Model::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ad::ParameterSet p;
  // Fixed iteration order (std::map) keeps initialization reproducible.
  for (const auto& [name, shape] : parameter_shapes(config)) {
    const auto [rows, cols] = shape;
    if (name.ends_with(".p")) {
      p[name] = Tensor(rows, cols);
    } else if (name.ends_with(".a")) {
      std::normal_distribution<double> normal(0.0, 0.01);
      Tensor a(rows, cols);
      for (double& v : a.values()) v = normal(rng);
      p[name] = std::move(a);
    } else if (name.starts_with("dense")) {
      p[name] = uniform(rows, cols, 1.0 / std::sqrt(2.0 * static_cast<double>(config.hidden)), rng);
    } else {
      // Recurrent weights and biases: fan-in of the input projection for
      // w_ih, of the hidden state otherwise.
      const double fan_in = name.ends_with(".w_ih") ? static_cast<double>(rows) : static_cast<double>(config.hidden);
      p[name] = uniform(rows, cols, 1.0 / std::sqrt(fan_in), rng);
    }
  }
  return Model(config, std::move(p));
}

std::set<std::string> Model::ball_params() const {
  if (config_.geometry != Geometry::kHyperbolic) return {};
  return {"head.parent.p", "head.leaf.p"};
}

void Model::check_params() const {
  for (const auto& [name, shape] : parameter_shapes(config_)) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("model parameter '" + name + "' is missing");
    if (it->second.rows() != shape.first || it->second.cols() != shape.second) {
      throw std::invalid_argument("model parameter '" + name + "' has the wrong shape");
    }
  }
  if (params_.size() != parameter_shapes(config_).size()) throw std::invalid_argument("model has unexpected parameters");
}

std::string layer_prefix(std::size_t layer) { return "enc.l" + std::to_string(layer); }

Var apply_dropout(Graph& g, Var x, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must be in [0, 1)");
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Tensor mask(x.rows(), x.cols());
  for (double& v : mask.values()) v = keep(rng) ? scale : 0.0;
  return ad::mul(x, g.constant(std::move(mask)));
}

Var encoder_layers(Graph& g, const ModelConfig& config, Var x, std::size_t frames, std::size_t batch, std::size_t first,
                   std::size_t last, const Dropout& drop, std::mt19937_64& rng) {
  for (std::size_t l = first; l < last; ++l) {
    x = bidirectional_layer(g, layer_prefix(l), x, frames, batch);
    const bool is_last = l + 1 == config.layers;
    if (drop.active() && (!is_last || drop.after_last)) x = apply_dropout(g, x, drop.rate, rng);
  }
  return x;
}

ForwardOutputs heads(Graph& g, const ModelConfig& config, Var encoded, std::size_t frames, std::size_t batch) {
  const std::size_t bins = config.bins();
  const std::size_t dim = config.embedding_dim;
  Var dense = ad::add_bias(ad::matmul(encoded, g.parameter("dense.w")), g.parameter("dense.b"));
  Var z = ad::reshape(dense, frames * batch * bins, dim);
  const double c = config.curvature;
  if (config.geometry == Geometry::kHyperbolic) z = ad::exp0_rows(z, c);
  const ad::MlrMode mode = mlr_mode(config.geometry);
  ForwardOutputs out;
  out.embeddings = z;
  out.parent_logits = ad::mlr_logits(z, g.parameter("head.parent.p"), g.parameter("head.parent.a"), c, mode);
  out.leaf_logits = ad::mlr_logits(z, g.parameter("head.leaf.p"), g.parameter("head.leaf.a"), c, mode);
  out.frames = frames;
  out.batch = batch;
  out.bins = bins;
  return out;
}

ForwardOutputs build_forward(Graph& g, const ModelConfig& config, const Features& features, const Dropout& drop) {
  if (features.values.cols() != config.bins()) throw std::invalid_argument("features do not match the model's bin count");
  std::mt19937_64 rng(drop.seed);
  Var x = g.constant(features.values);
  x = encoder_layers(g, config, x, features.frames, features.batch, 0, config.layers, drop, rng);
  return heads(g, config, x, features.frames, features.batch);
}

EmbeddingField encode(const Model& model, const dsp::ComplexSpectrogram& x, const NormStats& stats,
                      const Dropout& drop) {
  const ModelConfig& config = model.config();
  const Features f = single(x, stats);
  Graph g(&model.params());
  std::mt19937_64 rng(drop.seed);
  Var h = encoder_layers(g, config, g.constant(f.values), f.frames, 1, 0, config.layers, drop, rng);
  Var dense = ad::add_bias(ad::matmul(h, g.parameter("dense.w")), g.parameter("dense.b"));
  EmbeddingField z;
  z.frames = f.frames;
  z.bins = config.bins();
  z.dim = config.embedding_dim;
  z.curvature = config.curvature;
  z.values = dense.value().values();
  return z;
}

EmbeddingField embed(const EmbeddingField& z, const Model& model) {
  EmbeddingField out = z;
  if (model.config().geometry != Geometry::kHyperbolic) return out;
  out.hyperbolic = true;
  out.curvature = model.config().curvature;
  for (std::size_t i = 0; i < z.frames * z.bins; ++i) {
    std::span<const double> in(z.values.data() + i * z.dim, z.dim);
    std::span<double> dst(out.values.data() + i * z.dim, z.dim);
    geometry::kernel::exp0(in, out.curvature, dst);
    geometry::kernel::project(dst, out.curvature);
  }
  return out;
}

dsp::MaskTensor masks_from_logits(const Tensor& logits, std::size_t frames, std::size_t bins) {
  if (logits.rows() != frames * bins) throw std::invalid_argument("masks_from_logits: row count mismatch");
  const std::size_t k_classes = logits.cols();
  dsp::MaskTensor m(k_classes, frames, bins);
  std::vector<double> e(k_classes);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins; ++f) {
      auto row = logits.row(t * bins + f);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0.0;
      for (std::size_t k = 0; k < k_classes; ++k) z += (e[k] = std::exp(row[k] - mx));
      for (std::size_t k = 0; k < k_classes; ++k) m.at(k, t, f) = e[k] / z;
    }
  }
  return m;
}

Separation forward_masks(const Model& model, const dsp::ComplexSpectrogram& x, const NormStats& stats,
                         const Dropout& drop) {
  const ModelConfig& config = model.config();
  const Features f = single(x, stats);
  Graph g(&model.params());
  const ForwardOutputs out = build_forward(g, config, f, drop);
  Separation s;
  s.parent = masks_from_logits(out.parent_logits.value(), f.frames, out.bins);
  s.leaf = masks_from_logits(out.leaf_logits.value(), f.frames, out.bins);
  if (config.compose_heads) {
    const Hierarchy& h = config.hierarchy;
    const Tensor& leaf_logits = out.leaf_logits.value();
    for (std::size_t p = 0; p < h.parents.size(); ++p) {
      const auto group = h.leaves_of(p);
      for (std::size_t t = 0; t < f.frames; ++t) {
        for (std::size_t b = 0; b < out.bins; ++b) {
          auto row = leaf_logits.row(t * out.bins + b);
          double mx = -INFINITY;
          for (std::size_t k : group) mx = std::max(mx, row[k]);
          double z = 0.0;
          for (std::size_t k : group) z += std::exp(row[k] - mx);
          for (std::size_t k : group) s.leaf.at(k, t, b) = s.parent.at(p, t, b) * std::exp(row[k] - mx) / z;
        }
      }
    }
  }
  s.embeddings.frames = f.frames;
  s.embeddings.bins = out.bins;
  s.embeddings.dim = config.embedding_dim;
  s.embeddings.hyperbolic = config.geometry == Geometry::kHyperbolic;
  s.embeddings.curvature = config.curvature;
  s.embeddings.values = out.embeddings.value().values();
  return s;
}

}  // namespace hypsep::model
