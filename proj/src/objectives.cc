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

#include "hypsep/objectives.h"

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hypsep/errors.h"

namespace hypsep::objectives {
namespace {

using ad::Graph;
using ad::Var;
using nlohmann::json;

struct Layout {
  std::size_t frames;
  std::size_t batch;
  std::size_t bins;
  std::size_t row(std::size_t b, std::size_t t, std::size_t f) const { return (t * batch + b) * bins + f; }
};

Layout check_layout(const Tensor& v, std::span<const dsp::ComplexSpectrogram> mixtures, std::size_t classes,
                    const char* op) {
  if (mixtures.empty()) throw std::invalid_argument(std::string(op) + ": empty batch");
  Layout l{mixtures[0].frames(), mixtures.size(), mixtures[0].bins()};
  for (const auto& x : mixtures) {
    if (x.frames() != l.frames || x.bins() != l.bins) throw std::invalid_argument(std::string(op) + ": ragged batch");
  }
  if (v.rows() != l.frames * l.batch * l.bins || v.cols() != classes) {
    throw std::invalid_argument(std::string(op) + ": prediction shape does not match the targets");
  }
  return l;
}

template <typename T>
std::size_t class_count(std::span<const std::vector<T>> per_item, const char* op) {
  if (per_item.empty() || per_item[0].empty()) throw std::invalid_argument(std::string(op) + ": no sources");
  for (const auto& s : per_item) {
    if (s.size() != per_item[0].size()) throw std::invalid_argument(std::string(op) + ": class count differs");
  }
  return per_item[0].size();
}

double cap_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kMetricCapDb : -kMetricCapDb;
  if (num <= 0.0) return -kMetricCapDb;
  return std::clamp(10.0 * std::log10(num / den), -kMetricCapDb, kMetricCapDb);
}

double energy(std::span<const double> x) { return std::inner_product(x.begin(), x.end(), x.begin(), 0.0); }

Tensor mask_tensor_rows(const dsp::MaskTensor& m) {
  Tensor t(m.frames * m.bins, m.classes);
  for (std::size_t k = 0; k < m.classes; ++k) {
    for (std::size_t tf = 0; tf < m.frames * m.bins; ++tf) t(tf, k) = m.values[k * m.frames * m.bins + tf];
  }
  return t;
}

ClassMetrics mean_of(const std::vector<ClassMetrics>& v) {
  ClassMetrics m;
  for (const auto& c : v) {
    m.si_sdr += c.si_sdr;
    m.si_sir += c.si_sir;
    m.si_sar += c.si_sar;
  }
  const double n = static_cast<double>(v.size());
  m.si_sdr /= n;
  m.si_sir /= n;
  m.si_sar /= n;
  return m;
}

}  // namespace

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::kPsa:
      return "psa";
    case LossKind::kWa:
      return "wa";
    case LossKind::kCe:
      return "ce";
    case LossKind::kCeWeighted:
      return "ce_w";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "psa") return LossKind::kPsa;
  if (s == "wa") return LossKind::kWa;
  if (s == "ce") return LossKind::kCe;
  if (s == "ce_w") return LossKind::kCeWeighted;
  throw ConfigError("unknown loss '" + s + "' (expected psa, wa, ce or ce_w)");
}

void LossConfig::validate() const {
  if (!(parent_weight >= 0.0) || !(leaf_weight >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (parent_weight == 0.0 && leaf_weight == 0.0) throw ConfigError("loss weights cannot both be zero");
}

Var psa_loss(Var masks, std::span<const dsp::ComplexSpectrogram> mixtures,
             std::span<const std::vector<dsp::ComplexSpectrogram>> sources) {
  if (sources.size() != mixtures.size()) throw std::invalid_argument("psa_loss: batch size mismatch");
  const std::size_t k_classes = class_count(sources, "psa_loss");
  const Layout l = check_layout(masks.value(), mixtures, k_classes, "psa_loss");
  Tensor mag(masks.rows(), k_classes);
  Tensor target(masks.rows(), k_classes);
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t k = 0; k < k_classes; ++k) {
      if (!sources[b][k].same_layout(mixtures[b])) throw std::invalid_argument("psa_loss: source shape mismatch");
    }
    for (std::size_t t = 0; t < l.frames; ++t) {
      for (std::size_t f = 0; f < l.bins; ++f) {
        const dsp::Complex x = mixtures[b].at(t, f);
        const double ax = std::abs(x);
        const std::size_t r = l.row(b, t, f);
        for (std::size_t k = 0; k < k_classes; ++k) {
          mag(r, k) = ax;
          // |S| cos(angle S - angle X) = Re(S conj X) / |X|
          const double proj = ax > 0.0 ? (sources[b][k].at(t, f) * std::conj(x)).real() / ax : 0.0;
          target(r, k) = std::clamp(proj, 0.0, ax);
        }
      }
    }
  }
  Graph& g = masks.graph();
  return ad::mean(ad::abs(ad::sub(ad::mul(masks, g.constant(std::move(mag))), g.constant(std::move(target)))));
}

Var wa_loss(Var masks, std::span<const dsp::ComplexSpectrogram> mixtures,
            std::span<const std::vector<dsp::Waveform>> references) {
  if (references.size() != mixtures.size()) throw std::invalid_argument("wa_loss: batch size mismatch");
  const std::size_t k_classes = class_count(references, "wa_loss");
  const Layout l = check_layout(masks.value(), mixtures, k_classes, "wa_loss");
  const Tensor& m = masks.value();

  // residual signs per (item, class), needed by the backward pass
  auto signs = std::make_shared<std::vector<std::vector<double>>>(l.batch * k_classes);
  double total = 0.0;
  for (std::size_t b = 0; b < l.batch; ++b) {
    const std::size_t len = mixtures[b].signal_length();
    for (std::size_t k = 0; k < k_classes; ++k) {
      const auto& ref = references[b][k].samples;
      if (ref.size() + mixtures[b].config().hop < len || len + mixtures[b].config().hop < ref.size()) {
        throw std::invalid_argument("wa_loss: reference length differs from the mixture by more than one frame");
      }
      dsp::ComplexSpectrogram masked = mixtures[b];
      for (std::size_t t = 0; t < l.frames; ++t) {
        for (std::size_t f = 0; f < l.bins; ++f) masked.at(t, f) *= m(l.row(b, t, f), k);
      }
      const dsp::Waveform est = dsp::istft(masked);
      auto& sg = (*signs)[b * k_classes + k];
      sg.assign(len, 0.0);
      double acc = 0.0;
      for (std::size_t n = 0; n < len; ++n) {
        const double d = est.samples[n] - (n < ref.size() ? ref[n] : 0.0);
        acc += std::abs(d);
        sg[n] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      total += acc / static_cast<double>(len);
    }
  }
  const double norm = static_cast<double>(l.batch * k_classes);
  std::vector<dsp::ComplexSpectrogram> mix(mixtures.begin(), mixtures.end());
  return masks.graph().record(
      "wa_loss", Tensor::scalar(total / norm), {masks.id()},
      [signs, mix = std::move(mix), l, k_classes, norm](ad::BackwardContext& ctx) {
        const double g = ctx.grad()[0];
        Tensor& gm = ctx.input_grad(0);
        std::vector<double> grad_mask;
        for (std::size_t b = 0; b < l.batch; ++b) {
          for (std::size_t k = 0; k < k_classes; ++k) {
            std::vector<double> gw = (*signs)[b * k_classes + k];
            const double s = g / (norm * static_cast<double>(gw.size()));
            for (double& v : gw) v *= s;
            grad_mask.assign(l.frames * l.bins, 0.0);
            dsp::masked_istft_adjoint(mix[b], gw, grad_mask);
            for (std::size_t t = 0; t < l.frames; ++t) {
              for (std::size_t f = 0; f < l.bins; ++f) gm(l.row(b, t, f), k) += grad_mask[t * l.bins + f];
            }
          }
        }
      });
}

std::vector<double> ce_weights(const dsp::ComplexSpectrogram& mixture) {
  std::vector<double> w(mixture.values().size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] = std::abs(mixture.values()[i]));
  if (!(total > 0.0)) throw DataError("weighted cross entropy on a silent mixture");
  for (double& v : w) v /= total;
  return w;
}

Var ce_loss(Var logits, std::span<const dsp::ComplexSpectrogram> mixtures,
            std::span<const std::vector<dsp::ComplexSpectrogram>> sources, bool weighted) {
  if (sources.size() != mixtures.size()) throw std::invalid_argument("ce_loss: batch size mismatch");
  const std::size_t k_classes = class_count(sources, "ce_loss");
  const Layout l = check_layout(logits.value(), mixtures, k_classes, "ce_loss");
  // coeff(r, k) = -w_r for the IBM class, 0 elsewhere; loss = sum coeff * log p
  Tensor coeff(logits.rows(), k_classes);
  const double uniform_w = 1.0 / static_cast<double>(logits.rows());
  for (std::size_t b = 0; b < l.batch; ++b) {
    const dsp::MaskTensor ibm = dsp::ideal_binary_mask(sources[b]);
    if (ibm.frames != l.frames || ibm.bins != l.bins) throw std::invalid_argument("ce_loss: source shape mismatch");
    std::vector<double> w;
    if (weighted) w = ce_weights(mixtures[b]);
    for (std::size_t t = 0; t < l.frames; ++t) {
      for (std::size_t f = 0; f < l.bins; ++f) {
        const double wt = weighted ? w[t * l.bins + f] / static_cast<double>(l.batch) : uniform_w;
        for (std::size_t k = 0; k < k_classes; ++k) {
          if (ibm.at(k, t, f) == 1.0) coeff(l.row(b, t, f), k) = -wt;
        }
      }
    }
  }
  Graph& g = logits.graph();
  return ad::sum(ad::mul(ad::log_softmax_rows(logits), g.constant(std::move(coeff))));
}

Var hierarchical_loss(Var parent_term, Var leaf_term, const LossConfig& cfg) {
  cfg.validate();
  if (cfg.leaf_weight == 0.0) return ad::scale(parent_term, cfg.parent_weight);
  if (cfg.parent_weight == 0.0) return ad::scale(leaf_term, cfg.leaf_weight);
  return ad::add(ad::scale(parent_term, cfg.parent_weight), ad::scale(leaf_term, cfg.leaf_weight));
}

Var training_loss(Var parent_logits, Var leaf_logits, std::span<const Chunk> batch, const LossConfig& cfg) {
  std::vector<dsp::ComplexSpectrogram> mixtures;
  std::vector<std::vector<dsp::ComplexSpectrogram>> parents, leaves;
  std::vector<std::vector<dsp::Waveform>> parent_waves, leaf_waves;
  for (const Chunk& c : batch) {
    mixtures.push_back(c.mixture);
    parents.push_back(c.parents);
    leaves.push_back(c.leaves);
    parent_waves.push_back(c.parent_waves);
    leaf_waves.push_back(c.leaf_waves);
  }
  auto term = [&](Var logits, const auto& specs, const auto& waves) {
    switch (cfg.kind) {
      case LossKind::kPsa:
        return psa_loss(ad::softmax_rows(logits), mixtures, specs);
      case LossKind::kWa:
        return wa_loss(ad::softmax_rows(logits), mixtures, waves);
      case LossKind::kCe:
        return ce_loss(logits, mixtures, specs, false);
      case LossKind::kCeWeighted:
        break;
    }
    return ce_loss(logits, mixtures, specs, true);
  };
  return hierarchical_loss(term(parent_logits, parents, parent_waves), term(leaf_logits, leaves, leaf_waves), cfg);
}

double psa_loss(const dsp::MaskTensor& masks, const dsp::ComplexSpectrogram& mixture,
                std::span<const dsp::ComplexSpectrogram> sources) {
  Graph g;
  std::vector<std::vector<dsp::ComplexSpectrogram>> s{std::vector(sources.begin(), sources.end())};
  return psa_loss(g.constant(mask_tensor_rows(masks)), std::span(&mixture, 1), s).value().item();
}

double wa_loss(const dsp::MaskTensor& masks, const dsp::ComplexSpectrogram& mixture,
               std::span<const dsp::Waveform> references) {
  Graph g;
  std::vector<std::vector<dsp::Waveform>> r{std::vector(references.begin(), references.end())};
  return wa_loss(g.constant(mask_tensor_rows(masks)), std::span(&mixture, 1), r).value().item();
}

double ce_loss(const Tensor& logits, const dsp::ComplexSpectrogram& mixture,
               std::span<const dsp::ComplexSpectrogram> sources, bool weighted) {
  Graph g;
  std::vector<std::vector<dsp::ComplexSpectrogram>> s{std::vector(sources.begin(), sources.end())};
  return ce_loss(g.constant(logits), std::span(&mixture, 1), s, weighted).value().item();
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw std::invalid_argument("si_sdr: length mismatch");
  const double ref_energy = energy(reference);
  if (!(ref_energy > 0.0)) throw std::invalid_argument("si_sdr: silent reference");
  const double alpha = std::inner_product(estimate.begin(), estimate.end(), reference.begin(), 0.0) / ref_energy;
  double target = 0.0, err = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    target += s * s;
    err += (s - estimate[i]) * (s - estimate[i]);
  }
  return cap_db(target, err);
}

SirSar si_sir_sar(std::span<const double> estimate, std::span<const std::vector<double>> references,
                  std::size_t target) {
  const std::size_t k = references.size();
  if (target >= k) throw std::invalid_argument("si_sir_sar: target index out of range");
  const std::size_t n = estimate.size();
  for (const auto& r : references) {
    if (r.size() != n) throw std::invalid_argument("si_sir_sar: length mismatch");
  }
  Eigen::MatrixXd refs(n, k);
  for (std::size_t j = 0; j < k; ++j) refs.col(j) = Eigen::Map<const Eigen::VectorXd>(references[j].data(), n);
  const Eigen::Map<const Eigen::VectorXd> est(estimate.data(), n);

  const Eigen::MatrixXd gram = refs.transpose() * refs;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(k)) throw std::invalid_argument("si_sir_sar: references are linearly dependent");
  const Eigen::VectorXd coef = qr.solve(refs.transpose() * est);
  const Eigen::VectorXd in_span = refs * coef;

  const Eigen::VectorXd s = refs.col(static_cast<Eigen::Index>(target));
  const Eigen::VectorXd target_part = (est.dot(s) / s.squaredNorm()) * s;
  const Eigen::VectorXd interference = in_span - target_part;
  const Eigen::VectorXd artifacts = est - in_span;
  return {cap_db(target_part.squaredNorm(), interference.squaredNorm()),
          cap_db(in_span.squaredNorm(), artifacts.squaredNorm())};
}

TrackMetrics score_track(std::span<const dsp::Waveform> parent_estimates, std::span<const dsp::Waveform> leaf_estimates,
                         std::span<const dsp::Waveform> parent_refs, std::span<const dsp::Waveform> leaf_refs) {
  auto score = [](std::span<const dsp::Waveform> est, std::span<const dsp::Waveform> refs) {
    if (est.size() != refs.size()) throw std::invalid_argument("score_track: estimate/reference count mismatch");
    std::vector<std::vector<double>> r;
    for (const auto& w : refs) r.push_back(w.samples);
    std::vector<ClassMetrics> out;
    for (std::size_t k = 0; k < est.size(); ++k) {
      ClassMetrics m;
      m.si_sdr = si_sdr(est[k].samples, refs[k].samples);
      const SirSar d = si_sir_sar(est[k].samples, r, k);
      m.si_sir = d.sir;
      m.si_sar = d.sar;
      out.push_back(m);
    }
    return out;
  };
  return {score(parent_estimates, parent_refs), score(leaf_estimates, leaf_refs)};
}

MetricReport summarize(const Hierarchy& hierarchy, std::span<const TrackMetrics> tracks) {
  if (tracks.empty()) throw std::invalid_argument("summarize: no tracks");
  MetricReport r;
  r.hierarchy = hierarchy;
  r.tracks = tracks.size();
  std::vector<ClassMetrics> parent_means, leaf_means;
  for (std::size_t p = 0; p < hierarchy.parents.size(); ++p) {
    std::vector<ClassMetrics> v;
    for (const auto& t : tracks) v.push_back(t.parents.at(p));
    parent_means.push_back(r.classes[hierarchy.parents[p]] = mean_of(v));
  }
  for (std::size_t k = 0; k < hierarchy.leaves.size(); ++k) {
    std::vector<ClassMetrics> v;
    for (const auto& t : tracks) v.push_back(t.leaves.at(k));
    leaf_means.push_back(r.classes[hierarchy.leaves[k]] = mean_of(v));
  }
  r.parents = mean_of(parent_means);
  r.leaves = mean_of(leaf_means);
  std::vector<ClassMetrics> all = parent_means;
  all.insert(all.end(), leaf_means.begin(), leaf_means.end());
  r.all = mean_of(all);
  return r;
}

std::string render_table(const std::map<std::string, MetricReport>& rows) {
  if (rows.empty()) return {};
  const Hierarchy& h = rows.begin()->second.hierarchy;
  std::vector<std::string> cols = h.parents;
  cols.insert(cols.end(), h.leaves.begin(), h.leaves.end());
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-12s", "SI-SDR [dB]");
  out << buf;
  for (const auto& c : cols) {
    std::snprintf(buf, sizeof buf, " %13s", c.c_str());
    out << buf;
  }
  out << "       parents        leaves           all\n";
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-12s", name.c_str());
    out << buf;
    for (const auto& c : cols) {
      std::snprintf(buf, sizeof buf, " %13.2f", r.classes.at(c).si_sdr);
      out << buf;
    }
    for (double v : {r.parents.si_sdr, r.leaves.si_sdr, r.all.si_sdr}) {
      std::snprintf(buf, sizeof buf, " %13.2f", v);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

void to_json(json& j, const ClassMetrics& m) {
  j = json{{"si_sdr", m.si_sdr}, {"si_sir", m.si_sir}, {"si_sar", m.si_sar}};
}

void from_json(const json& j, ClassMetrics& m) {
  j.at("si_sdr").get_to(m.si_sdr);
  j.at("si_sir").get_to(m.si_sir);
  j.at("si_sar").get_to(m.si_sar);
}

void to_json(json& j, const MetricReport& r) {
  j = json{{"hierarchy", r.hierarchy},
           {"tracks", r.tracks},
           {"classes", r.classes},
           {"averages", {{"parents", r.parents}, {"leaves", r.leaves}, {"all", r.all}}}};
}

void from_json(const json& j, MetricReport& r) {
  j.at("hierarchy").get_to(r.hierarchy);
  j.at("tracks").get_to(r.tracks);
  j.at("classes").get_to(r.classes);
  j.at("averages").at("parents").get_to(r.parents);
  j.at("averages").at("leaves").get_to(r.leaves);
  j.at("averages").at("all").get_to(r.all);
}

}  // namespace hypsep::objectives
