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

// Separation network: per-frame log-magnitude features -> stacked
// bidirectional tanh recurrences -> dense layer to F x L embeddings ->
// (hyperbolic mode) exp0 onto the ball -> parent and leaf MLR heads.
//
// Batches are laid out time-major: row t * B + b of every encoder tensor is
// frame t of item b, and row (t * B + b) * F + f of the embedding/logit
// tensors is bin f of that frame.

#include <cstdint>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hypsep/autodiff.h"
#include "hypsep/dsp.h"
#include "hypsep/hierarchy.h"

namespace hypsep::model {

enum class Geometry { kHyperbolic, kEuclidean };

struct ModelConfig {
  Hierarchy hierarchy = Hierarchy::default_taxonomy();
  Geometry geometry = Geometry::kHyperbolic;
  double curvature = 0.1;
  std::size_t embedding_dim = 2;
  std::size_t hidden = 64;  // per direction
  std::size_t layers = 2;
  dsp::StftConfig stft;
  // Inference only: leaf mask = parent mask x softmax of the leaf logits
  // within that parent's group.
  bool compose_heads = false;

  std::size_t bins() const { return stft.bins(); }
  // Throws ConfigError.
  void validate() const;
};

std::string to_string(Geometry g);
Geometry geometry_from_string(const std::string& s);  // throws ConfigError

struct Dropout {
  double rate = 0.0;
  // Training drops after every recurrent layer except the last; MC dropout
  // drops after all of them.
  bool after_last = false;
  std::uint64_t seed = 0;

  bool active() const { return rate > 0.0; }
};

// Normalized log-magnitude input for a batch of equally long spectrograms.
struct Features {
  Tensor values;  // (T * B) x F
  std::size_t frames = 0;
  std::size_t batch = 0;
};

struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
};

// Mean / standard deviation of log(|X| + 1e-8) over all bins of a track.
NormStats normalization_stats(const dsp::ComplexSpectrogram& x);
Features make_features(std::span<const dsp::ComplexSpectrogram> batch, std::span<const NormStats> stats);

struct ForwardOutputs {
  ad::Var embeddings;     // N x L, on the ball in hyperbolic mode
  ad::Var parent_logits;  // N x K_parent
  ad::Var leaf_logits;    // N x K_leaf
  std::size_t frames = 0;
  std::size_t batch = 0;
  std::size_t bins = 0;
};

class Model {
 public:
  Model() = default;
  Model(ModelConfig config, ad::ParameterSet params);

  // Weights uniform in +-1/sqrt(fan_in), normals N(0, 0.01^2), offsets at
  // the origin.
  static Model initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const ad::ParameterSet& params() const { return params_; }
  ad::ParameterSet& params() { return params_; }

  // Names of the parameters that live on the ball (the MLR offsets in
  // hyperbolic mode; empty otherwise).
  std::set<std::string> ball_params() const;

  // Throws std::invalid_argument if a parameter is missing or misshapen.
  void check_params() const;

 private:
  ModelConfig config_;
  ad::ParameterSet params_;
};

// ---- graph building blocks ------------------------------------------------
// `g` must be bound to the model's parameters.

std::string layer_prefix(std::size_t layer);

// Inverted dropout: multiplies by a constant 0 / (1 - rate) mask.
ad::Var apply_dropout(ad::Graph& g, ad::Var x, double rate, std::mt19937_64& rng);

// Recurrent layers [first, last) on a (T * B) x D input, each followed by
// dropout per `dropout`.
ad::Var encoder_layers(ad::Graph& g, const ModelConfig& config, ad::Var x, std::size_t frames, std::size_t batch,
                       std::size_t first, std::size_t last, const Dropout& dropout, std::mt19937_64& rng);

// Dense projection, ball map and both heads on the last encoder output.
ForwardOutputs heads(ad::Graph& g, const ModelConfig& config, ad::Var encoded, std::size_t frames,
                     std::size_t batch);

ForwardOutputs build_forward(ad::Graph& g, const ModelConfig& config, const Features& features,
                             const Dropout& dropout = {});

// ---- value-level inference on one track -----------------------------------

struct EmbeddingField {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t dim = 0;
  bool hyperbolic = false;
  double curvature = 0.0;
  std::vector<double> values;  // (t * bins + f) * dim + l

  std::span<const double> at(std::size_t t, std::size_t f) const {
    return {values.data() + (t * bins + f) * dim, dim};
  }
};

struct Separation {
  dsp::MaskTensor parent;
  dsp::MaskTensor leaf;
  EmbeddingField embeddings;
};

// Euclidean embeddings f_theta(X) (before the ball map).
EmbeddingField encode(const Model& model, const dsp::ComplexSpectrogram& x, const NormStats& stats,
                      const Dropout& dropout = {});
// exp0 + projection in hyperbolic mode; identity in euclidean mode.
EmbeddingField embed(const EmbeddingField& z, const Model& model);

Separation forward_masks(const Model& model, const dsp::ComplexSpectrogram& x, const NormStats& stats,
                         const Dropout& dropout = {});

// Row-wise softmax of N x K logits into a K x T x F mask.
dsp::MaskTensor masks_from_logits(const Tensor& logits, std::size_t frames, std::size_t bins);

}  // namespace hypsep::model
