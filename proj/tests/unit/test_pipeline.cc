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

#include <cstring>
#include <fstream>

#include "doctest.h"
#include "hypsep/checkpoint.h"
#include "hypsep/errors.h"
#include "hypsep/pipeline.h"
#include "hypsep/serve.h"
#include "hypsep/wav.h"
#include "test_util.h"

using namespace hypsep;
using namespace hypsep::pipeline;

namespace {

TrainConfig smoke_config(const std::filesystem::path& dataset) {
  TrainConfig c;
  c.dataset = dataset;
  c.model.hidden = 16;
  c.epochs = 2;
  c.batch_size = 4;
  c.chunk_seconds = 1.6;
  c.seed = 3;
  return c;
}

// A 10-track dataset and a 2-epoch model, shared by the cases below.
struct Smoke {
  std::filesystem::path dataset;
  TrainResult result;
};

const Smoke& smoke() {
  static const Smoke s = [] {
    Smoke out;
    out.dataset = testutil::scratch_dir("pipeline") / "ds";
    data::build_dataset(out.dataset, 10, 4.0, 99);
    out.result = train(smoke_config(out.dataset));
    return out;
  }();
  return s;
}

bool same_params(const model::Model& a, const model::Model& b) {
  if (a.params().size() != b.params().size()) return false;
  for (const auto& [name, t] : a.params()) {
    const Tensor& u = b.params().at(name);
    if (u.size() != t.size() || std::memcmp(u.data(), t.data(), t.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("smoke training writes a loadable checkpoint") {
  const Smoke& s = smoke();
  REQUIRE(s.result.log.size() == 2);
  for (const auto& e : s.result.log) {
    CHECK(std::isfinite(e.train_loss));
    CHECK(std::isfinite(e.val_loss));
  }
  CHECK(s.result.best_epoch >= 1);
  CHECK(s.result.best_val_loss == s.result.log[s.result.best_epoch - 1].val_loss);

  const auto path = testutil::scratch_dir("pipeline_ckpt") / "m.ckpt";
  checkpoint::save(path, s.result.best);
  CHECK(same_params(checkpoint::load(path), s.result.best));
}

TEST_CASE("training is deterministic in the seed") {
  const Smoke& s = smoke();
  const TrainResult again = train(smoke_config(s.dataset));
  CHECK(again.log.back().val_loss == s.result.log.back().val_loss);
  CHECK(same_params(again.best, s.result.best));
}

TEST_CASE("training config validation") {
  TrainConfig c = smoke_config(smoke().dataset);
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = smoke_config(smoke().dataset);
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = smoke_config(testutil::scratch_dir("pipeline_none") / "missing");
  CHECK_THROWS(train(c));
}

TEST_CASE("report rows") {
  const Smoke& s = smoke();
  const Report r = evaluate_report(s.result.best, s.dataset, {"test", 0});
  CHECK(r.model.tracks >= 1);
  CHECK(r.model.tracks == r.no_proc.tracks);

  // No-Proc: the mixture itself scored against every reference.
  const auto manifest = data::load_manifest(s.dataset);
  const auto& h = manifest.hierarchy;
  double expected = 0.0;
  std::size_t n = 0;
  for (const auto& spec : manifest.splits.at("test")) {
    const auto audio = data::load_track(s.dataset, spec, h);
    for (const auto& leaf : audio.leaves) {
      expected += objectives::si_sdr(audio.mixture.samples, leaf.samples);
      ++n;
    }
  }
  CHECK(r.no_proc.leaves.si_sdr == doctest::Approx(expected / static_cast<double>(n)).epsilon(1e-12));

  CHECK(r.oracle_psf.leaves.si_sdr >= r.model.leaves.si_sdr);
  CHECK(r.oracle_psf.parents.si_sdr >= r.model.parents.si_sdr);
  REQUIRE(r.norm_histograms.has_value());

  const Report again = evaluate_report(s.result.best, s.dataset, {"test", 0});
  CHECK(to_json(again).dump() == to_json(r).dump());
}

TEST_CASE("threshold sweep starts at the report") {
  const Smoke& s = smoke();
  const Report r = evaluate_report(s.result.best, s.dataset, {"test", 0});
  const ThresholdSweep sweep = evaluate_threshold_sweep(s.result.best, s.dataset, {"test", 0}, default_thetas());
  REQUIRE(sweep.points.size() == 20);
  CHECK(sweep.nested);
  CHECK(sweep.points[0].theta == 0.0);
  CHECK(sweep.points[0].silenced_fraction == 0.0);
  const nlohmann::json at0 = sweep.points[0].metrics, report = r.model;
  CHECK(at0 == report);
  for (std::size_t i = 1; i < sweep.points.size(); ++i)
    CHECK(sweep.points[i].silenced_fraction >= sweep.points[i - 1].silenced_fraction);
  CHECK(default_thetas().back() == doctest::Approx(0.95));
  CHECK(theta_label(0.05) == "0.05");
  CHECK(theta_label(0.0) == "0.00");
}

TEST_CASE("certainty comparison") {
  const Smoke& s = smoke();
  const auto c = evaluate_certainty(s.result.best, s.dataset, {"test", 0}, 4, 0.5, 7);
  REQUIRE(!c.tracks.empty());
  CHECK(c.pearson.size() == c.tracks.size());
  double mean = 0.0;
  for (double p : c.pearson) {
    CHECK((p >= -1.0 && p <= 1.0));
    mean += p / static_cast<double>(c.pearson.size());
  }
  CHECK(c.mean == doctest::Approx(mean));
  CHECK(to_json(c)["passes"] == 4);
}

TEST_CASE("bundle export") {
  const Smoke& s = smoke();
  const auto manifest = data::load_manifest(s.dataset);
  const auto& spec = manifest.splits.at("test").front();
  const auto out = testutil::scratch_dir("pipeline_bundle") / "b";
  ExportOptions opts;
  opts.track_id = spec.id;
  opts.region_grid = 16;
  const auto m = export_bundle(s.result.best, s.dataset, out, opts);
  CHECK(serve::validate_bundle(out).empty());

  std::size_t wavs = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(out / "audio"))
    if (e.path().extension() == ".wav") ++wavs;
  CHECK(wavs == 141);
  CHECK(m["thresholds"].size() == 20);

  // theta = 0 stems are the unthresholded separation, after float32 storage.
  const SeparatedTrack t = separate(s.result.best, spec, data::load_track(s.dataset, spec, manifest.hierarchy));
  const auto leaves = dsp::apply_mask_resynth(t.mixture, t.separation.leaf);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto w = dsp::read_wav(out / "audio" / "0.00" / (manifest.hierarchy.leaves[k] + ".wav"));
    REQUIRE(w.samples.size() == leaves[k].samples.size());
    bool exact = true;
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      exact = exact && w.samples[i] == static_cast<double>(static_cast<float>(leaves[k].samples[i]));
    CHECK(exact);
  }

  // Maps are raw float32 with the advertised shape.
  const auto& norm = m["maps"]["norm"];
  const std::size_t frames = m["frames"], bins = m["bins"];
  CHECK(std::filesystem::file_size(out / norm["path"].get<std::string>()) == frames * bins * 4);
  const auto ref = certainty::hyperbolic_certainty_map(t.separation.embeddings);
  std::ifstream in(out / norm["path"].get<std::string>(), std::ios::binary);
  std::vector<float> raw(frames * bins);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
  bool same = true;
  for (std::size_t i = 0; i < raw.size(); ++i) same = same && raw[i] == static_cast<float>(ref.values[i]);
  CHECK(same);

  opts.track_id = "no_such_track";
  CHECK_THROWS_AS(export_bundle(s.result.best, s.dataset, out, opts), DataError);
}
