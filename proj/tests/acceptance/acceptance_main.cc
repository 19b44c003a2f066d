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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
//
//   hypsep_acceptance [work_dir]
//
// The desk-scale stages generate a 200-track dataset and train two models
// under work_dir (default: <tmp>/hypsep_acceptance), which takes on the
// order of half an hour on one core.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "hypsep/autodiff.h"
#include "hypsep/data.h"
#include "hypsep/dsp.h"
#include "hypsep/geometry.h"
#include "hypsep/objectives.h"
#include "hypsep/pipeline.h"

using namespace hypsep;
namespace fs = std::filesystem;
namespace k = hypsep::geometry::kernel;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::vector<double> ball_point(std::mt19937_64& rng, std::size_t dim, double c, double max_r = 0.95) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(dim);
  double s = 0.0;
  for (double& x : v) {
    x = n(rng);
    s += x * x;
  }
  const double r = max_r * std::pow(u(rng), 1.0 / static_cast<double>(dim)) / std::sqrt(c);
  for (double& x : v) x *= r / std::sqrt(s);
  return v;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// ---- geometry ------------------------------------------------------------------

void geometry_suite() {
  const auto t0 = Clock::now();
  constexpr int kSamples = 10000;
  std::mt19937_64 rng(1);
  double mobius_err = 0.0, inverse_err = 0.0, axiom_err = 0.0, mlr_rel = 0.0;
  for (double c : {0.1, 1.0}) {
    const double scale = 1.0 / std::sqrt(c);
    for (int s = 0; s < kSamples; ++s) {
      const std::size_t dim = 2 + static_cast<std::size_t>(s % 15);
      const auto x = ball_point(rng, dim, c), y = ball_point(rng, dim, c), z = ball_point(rng, dim, c);
      std::vector<double> zero(dim, 0.0), neg_x(dim), xy(dim), back(dim), yx(dim), t(dim), v(dim);
      for (std::size_t i = 0; i < dim; ++i) neg_x[i] = -x[i];

      // 0 (+) x = x, x (+) (-x) = 0, left cancellation, |x (+) y| = |y (+) x|.
      k::mobius_add(zero, x, c, t);
      mobius_err = std::max(mobius_err, max_abs_diff(t, x) / scale);
      k::mobius_add(x, neg_x, c, t);
      mobius_err = std::max(mobius_err, max_abs_diff(t, zero) / scale);
      k::mobius_add(x, y, c, xy);
      k::mobius_add(neg_x, xy, c, back);
      mobius_err = std::max(mobius_err, max_abs_diff(back, y) / scale);
      k::mobius_add(y, x, c, yx);
      mobius_err = std::max(mobius_err, std::fabs(std::sqrt(k::squared_norm(xy)) - std::sqrt(k::squared_norm(yx))) / scale);

      // exp0 / log0 are inverse on both sides.
      std::normal_distribution<double> n(0.0, 1.0);
      std::vector<double> u(dim);
      for (double& e : u) e = n(rng);
      const double un = std::sqrt(k::squared_norm(u));
      const double r = 5.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng) / std::sqrt(c);
      for (double& e : u) e *= r / un;
      k::exp0(u, c, t);
      k::log0(t, c, v);
      inverse_err = std::max(inverse_err, max_abs_diff(v, u) / std::max(1.0, r));
      k::log0(x, c, v);
      k::exp0(v, c, t);
      inverse_err = std::max(inverse_err, max_abs_diff(t, x) / scale);

      // Metric axioms.
      const double dxy = k::distance(x, y, c), dyx = k::distance(y, x, c);
      const double dxz = k::distance(x, z, c), dyz = k::distance(y, z, c);
      axiom_err = std::max(axiom_err, std::fabs(k::distance(x, x, c)));
      axiom_err = std::max(axiom_err, std::fabs(dxy - dyx));
      axiom_err = std::max(axiom_err, std::max(0.0, dxz - (dxy + dyz)));
      if (!(dxy > 0.0)) axiom_err = std::max(axiom_err, 1.0);
    }
  }
  // c -> 0: the hyperbolic logit approaches 4 <z - p, a>. The error is
  // measured over the whole sample set; pointwise ratios are also bounded,
  // except next to a zero crossing of the logit (within 1% of 4 |z - p| |a|)
  // where the true O(c) deviation divided by a vanishing logit is unbounded.
  double err2 = 0.0, ref2 = 0.0, pointwise = 0.0;
  for (int s = 0; s < kSamples; ++s) {
    const std::size_t dim = 2 + static_cast<std::size_t>(s % 15);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> z(dim), p(dim), a(dim), d(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      z[i] = n(rng);
      p[i] = n(rng);
      a[i] = n(rng);
      d[i] = z[i] - p[i];
    }
    const double h = k::mlr_logit(z, p, a, 1e-8), e = k::euclidean_logit(z, p, a);
    err2 += (h - e) * (h - e);
    ref2 += e * e;
    const double scale = 4.0 * std::sqrt(k::squared_norm(d) * k::squared_norm(a));
    if (std::fabs(e) > 1e-2 * scale) pointwise = std::max(pointwise, std::fabs(h - e) / std::fabs(e));
  }
  mlr_rel = std::sqrt(err2 / ref2);
  const double secs = seconds_since(t0);
  const bool pass = mobius_err < 1e-9 && inverse_err < 1e-9 && axiom_err < 1e-9 && mlr_rel < 1e-4 && pointwise < 1e-4 &&
                    secs < 10.0;
  report("geometry identity suite", pass,
         fmt("mobius %.2e, exp0/log0 %.2e, metric %.2e, ", mobius_err, inverse_err, axiom_err) +
             fmt("c->0 MLR rel %.2e (pointwise %.2e), %.2f s (limit 10 s)", mlr_rel, pointwise, secs));
}

// ---- gradients -----------------------------------------------------------------

Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c) {
  Tensor t(r, c);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.values()) v = n(rng);
  return t;
}

Tensor ball_rows(std::mt19937_64& rng, std::size_t n, std::size_t l, double c) {
  Tensor t(n, l);
  for (std::size_t r = 0; r < n; ++r) {
    const auto p = ball_point(rng, l, c, 0.9);
    for (std::size_t j = 0; j < l; ++j) t(r, j) = p[j];
  }
  return t;
}

// Tiny STFT so the finite-difference sweep stays cheap: 4 x 4 spectrograms.
struct Toy {
  std::vector<dsp::Waveform> waves;
  std::vector<dsp::ComplexSpectrogram> specs;
  dsp::ComplexSpectrogram x;
};

Toy toy(std::uint64_t seed) {
  dsp::StftConfig cfg;
  cfg.fft_size = 6;
  cfg.hop = 3;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Toy t;
  dsp::Waveform mix;
  mix.samples.assign(9, 0.0);
  for (int s = 0; s < 2; ++s) {
    dsp::Waveform w;
    for (int i = 0; i < 9; ++i) w.samples.push_back(n(rng));
    for (int i = 0; i < 9; ++i) mix.samples[i] += w.samples[i];
    t.specs.push_back(dsp::stft(w, cfg));
    t.waves.push_back(std::move(w));
  }
  t.x = dsp::stft(mix, cfg);
  return t;
}

objectives::Chunk chunk(const Toy& t) {
  objectives::Chunk c;
  c.mixture = t.x;
  c.leaves = c.parents = t.specs;
  c.leaf_waves = c.parent_waves = t.waves;
  return c;
}

void gradient_suite() {
  using namespace objectives;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const std::string& name, const ad::GraphFn& fn, const ad::ParameterSet& p) {
    const double e = ad::finite_diff_check(fn, p);
    if (!(e <= worst)) {
      worst = e;
      worst_name = name;
    }
  };

  const Toy a = toy(5), b = toy(8);
  const std::size_t n = a.x.frames() * a.x.bins();
  const ad::ParameterSet p{{"leaf", random_tensor(rng, n, 2)}};
  const std::vector<dsp::ComplexSpectrogram> mixtures{a.x};
  const std::vector<std::vector<dsp::ComplexSpectrogram>> sources{a.specs};
  const std::vector<std::vector<dsp::Waveform>> refs{a.waves};
  check("psa", [&](ad::Graph& g) { return psa_loss(ad::softmax_rows(g.parameter("leaf")), mixtures, sources); }, p);
  check("wa", [&](ad::Graph& g) { return wa_loss(ad::softmax_rows(g.parameter("leaf")), mixtures, refs); }, p);
  check("ce", [&](ad::Graph& g) { return ce_loss(g.parameter("leaf"), mixtures, sources, false); }, p);
  check("ce_w", [&](ad::Graph& g) { return ce_loss(g.parameter("leaf"), mixtures, sources, true); }, p);

  const std::vector<Chunk> batch{chunk(a), chunk(b)};
  const ad::ParameterSet pb{{"leaf", random_tensor(rng, 2 * n, 2)}, {"parent", random_tensor(rng, 2 * n, 2)}};
  for (LossKind kind : {LossKind::kPsa, LossKind::kWa, LossKind::kCe, LossKind::kCeWeighted}) {
    LossConfig cfg;
    cfg.kind = kind;
    cfg.parent_weight = 0.7;
    cfg.leaf_weight = 1.3;
    check("hierarchical " + to_string(kind),
          [&](ad::Graph& g) { return training_loss(g.parameter("parent"), g.parameter("leaf"), batch, cfg); }, pb);
  }

  for (double c : {0.1, 1.0}) {
    for (std::size_t l : {2, 16}) {
      const ad::ParameterSet pm{{"z", ball_rows(rng, 6, l, c)}, {"p", ball_rows(rng, 5, l, c)}, {"a", random_tensor(rng, 5, l)}};
      const Tensor w = random_tensor(rng, 6, 5);
      check("mlr logits c=" + std::to_string(c) + " L=" + std::to_string(l),
            [&](ad::Graph& g) {
              const auto logits = ad::mlr_logits(g.parameter("z"), g.parameter("p"), g.parameter("a"), c, ad::MlrMode::kHyperbolic);
              return ad::sum(ad::mul(logits, g.constant(w)));
            },
            pm);
    }
  }
  const double secs = seconds_since(t0);
  report("gradient correctness", worst < 1e-4 && secs < 60.0,
         "worst relative error " + fmt("%.2e", worst) + " (" + worst_name + ")" + fmt(", %.2f s (limit 60 s)", secs));
}

// ---- STFT ----------------------------------------------------------------------

double snr_db(const std::vector<double>& ref, const std::vector<double>& est) {
  double s = 0.0, e = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    s += ref[i] * ref[i];
    e += (ref[i] - est[i]) * (ref[i] - est[i]);
  }
  return e == 0.0 ? 400.0 : 10.0 * std::log10(s / e);
}

void stft_suite() {
  std::vector<std::pair<std::string, dsp::Waveform>> signals;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  dsp::Waveform noise, tone;
  for (int i = 0; i < 24000; ++i) {
    noise.samples.push_back(n(rng));
    tone.samples.push_back(0.5 * std::sin(2.0 * M_PI * 440.0 * i / 8000.0));
  }
  signals.emplace_back("noise", noise);
  signals.emplace_back("tone", tone);
  const auto spec = data::plan_dataset(10, 3.0, 17).splits.at("train").front();
  for (const auto& leaf : Hierarchy::default_taxonomy().leaves)
    signals.emplace_back(leaf, data::synth_leaf_source(spec, leaf, 8000));
  double worst = 1e9;
  std::string worst_name;
  for (const auto& [name, w] : signals) {
    const double snr = snr_db(w.samples, dsp::istft(dsp::stft(w)).samples);
    if (snr < worst) {
      worst = snr;
      worst_name = name;
    }
  }
  report("stft round trip", worst > 100.0, fmt("min SNR %.1f dB", worst) + " (" + worst_name + "), limit 100 dB");
}

// ---- desk-scale training and the trained-model checks -----------------------------

pipeline::TrainConfig desk_config(const fs::path& dataset, objectives::LossKind kind) {
  pipeline::TrainConfig c;
  c.dataset = dataset;
  c.loss.kind = kind;
  c.epochs = 30;
  return c;
}

void log_epoch(const char* tag, const pipeline::EpochLog& e) {
  std::fprintf(stderr, "[%s] epoch %zu train %.5f val %.5f (%.1f s)\n", tag, e.epoch, e.train_loss, e.val_loss, e.seconds);
}

void determinism_suite(const fs::path& work) {
  // Two independent runs of the whole pipeline from the same seeds.
  std::vector<std::string> reports;
  for (const char* run : {"a", "b"}) {
    const fs::path ds = work / "determinism" / run;
    fs::remove_all(ds);
    data::build_dataset(ds, 20, 4.0, 31);
    pipeline::TrainConfig c;
    c.dataset = ds;
    c.epochs = 3;
    c.chunk_seconds = 1.6;
    c.seed = 5;
    const auto model = pipeline::train(c).best;
    const pipeline::EvalOptions opts{"test", 0};
    nlohmann::json j{{"report", pipeline::to_json(pipeline::evaluate_report(model, ds, opts))},
                     {"sweep", pipeline::to_json(pipeline::evaluate_threshold_sweep(model, ds, opts, pipeline::default_thetas()))},
                     {"certainty", pipeline::to_json(pipeline::evaluate_certainty(model, ds, opts, 8, 0.5, 7))}};
    reports.push_back(j.dump());
  }
  report("determinism", reports[0] == reports[1],
         reports[0] == reports[1] ? "dataset, training and all evaluation modes reproduce byte-identical JSON"
                                  : "reports differ between identical runs");
}

void desk_suite(const fs::path& work) {
  using objectives::LossKind;
  const fs::path ds = work / "desk";
  const auto t0 = Clock::now();
  fs::remove_all(ds);
  data::build_dataset(ds, 200, 6.0, 2024);
  std::fprintf(stderr, "dataset: %.1f s\n", seconds_since(t0));

  const auto weighted = pipeline::train(desk_config(ds, LossKind::kCeWeighted),
                                        [](const pipeline::EpochLog& e) { log_epoch("ce_w", e); });
  const pipeline::EvalOptions test{"test", 0};
  const auto r_w = pipeline::evaluate_report(weighted.best, ds, test);
  const double desk_secs = seconds_since(t0);

  const auto plain = pipeline::train(desk_config(ds, LossKind::kCe), [](const pipeline::EpochLog& e) { log_epoch("ce", e); });
  const auto r_ce = pipeline::evaluate_report(plain.best, ds, test);

  const double model_w = r_w.model.leaves.si_sdr, model_ce = r_ce.model.leaves.si_sdr;
  const double none = r_w.no_proc.leaves.si_sdr, oracle = r_w.oracle_psf.leaves.si_sdr;
  report("desk training: leaf SI-SDR over No-Proc", model_w - none >= 3.0,
         fmt("model %.2f dB, No-Proc %.2f dB, improvement %.2f dB (limit 3 dB)", model_w, none, model_w - none));
  report("desk training: wall clock", desk_secs < 45.0 * 60.0,
         fmt("dataset + training + evaluation %.1f min (limit 45 min)", desk_secs / 60.0));
  bool oracle_ok = true;
  for (const auto* r : {&r_w, &r_ce})
    for (const auto& [name, m] : r->model.classes) oracle_ok = oracle_ok && r->oracle_psf.classes.at(name).si_sdr >= m.si_sdr;
  oracle_ok = oracle_ok && oracle >= model_w && oracle >= model_ce;
  report("desk training: Oracle-PSF bounds every model", oracle_ok,
         fmt("oracle leaves %.2f dB, ce_w %.2f dB, ce %.2f dB", oracle, model_w, model_ce) + ", every class checked");
  report("desk training: weighted CE vs CE", model_w >= model_ce - 0.5,
         fmt("ce_w %.2f dB, ce %.2f dB (slack 0.5 dB)", model_w, model_ce));

  // Certainty semantics on the weighted model's test split.
  const auto& h = *r_w.norm_histograms;
  const double one = h.mean(1), many = h.mean_from(3);
  report("certainty semantics", one > many,
         fmt("mean normalized norm: 1 active %.4f (n=%.0f), 3+ active %.4f (n=%.0f)", one,
             static_cast<double>(h.population[1]), many,
             static_cast<double>(h.population[3] + h.population[4])));

  const auto sweep = pipeline::evaluate_threshold_sweep(weighted.best, ds, test, pipeline::default_thetas());
  const auto& at0 = sweep.points.front().metrics.leaves;
  const pipeline::ThresholdPoint* p9 = nullptr;
  for (const auto& p : sweep.points)
    if (std::fabs(p.theta - 0.9) < 1e-12) p9 = &p;
  const bool trade = p9 && p9->metrics.leaves.si_sir > at0.si_sir && p9->metrics.leaves.si_sar < at0.si_sar;
  report("threshold trade-off", trade && sweep.nested,
         fmt("leaf SIR %.2f -> %.2f dB, leaf SAR %.2f -> %.2f dB", at0.si_sir, p9 ? p9->metrics.leaves.si_sir : NAN, at0.si_sar,
             p9 ? p9->metrics.leaves.si_sar : NAN) +
             (sweep.nested ? ", nesting exact" : ", nesting violated"));

  const auto t1 = Clock::now();
  const auto cmp = pipeline::evaluate_certainty(weighted.best, ds, {"test", 10}, 1000, 0.5, 7);
  const double bayes_secs = seconds_since(t1);
  double lowest = 1.0;
  for (double r : cmp.pearson) lowest = std::min(lowest, r);
  report("bayesian comparison", cmp.tracks.size() >= 10 && lowest > 0.0 && cmp.mean > 0.3 && bayes_secs < 20.0 * 60.0,
         fmt("%.0f tracks, min rho %.3f, mean rho %.3f, %.1f min (limit 20 min)", static_cast<double>(cmp.tracks.size()),
             lowest, cmp.mean, bayes_secs / 60.0));
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "hypsep_acceptance";
  fs::create_directories(work);
  try {
    geometry_suite();
    gradient_suite();
    stft_suite();
    determinism_suite(work);
    desk_suite(work);
  } catch (const std::exception& e) {
    report("acceptance run", false, std::string("aborted: ") + e.what());
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
