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

// hypsep command line: dataset | train | evaluate | export | serve
//
// Every flag can also be given in a TOML/INI file passed with --config;
// subcommand options live in a section named after the subcommand, e.g.
//
//   [train]
//   dataset = "data"
//   curvature = 0.1
//
// Flags on the command line override the file.

#include <csignal>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "hypsep/checkpoint.h"
#include "hypsep/errors.h"
#include "hypsep/pipeline.h"
#include "hypsep/serve.h"
#include "json.hpp"

namespace {

using nlohmann::json;
using namespace hypsep;

struct ModelFlags {
  std::string geometry = "hyperbolic";
  double curvature = 0.1;
  std::size_t dim = 2;
  std::size_t hidden = 64;
  std::size_t layers = 2;
};

struct TrainFlags {
  std::string dataset;
  std::string out = "model.ckpt";
  std::string log;
  std::string loss = "ce_w";
  double parent_weight = 1.0;
  double leaf_weight = 1.0;
  std::size_t epochs = 30;
  std::size_t batch = 10;
  double chunk = 3.2;
  std::size_t chunks_per_track = 2;
  double lr = 1e-3;
  double dropout = 0.3;
  std::uint64_t seed = 1;
  std::size_t max_tracks = 0;
  ModelFlags model;
};

pipeline::TrainConfig to_config(const TrainFlags& f) {
  pipeline::TrainConfig c;
  c.dataset = f.dataset;
  c.model.geometry = model::geometry_from_string(f.model.geometry);
  c.model.curvature = f.model.curvature;
  c.model.embedding_dim = f.model.dim;
  c.model.hidden = f.model.hidden;
  c.model.layers = f.model.layers;
  c.loss.kind = objectives::loss_kind_from_string(f.loss);
  c.loss.parent_weight = f.parent_weight;
  c.loss.leaf_weight = f.leaf_weight;
  c.epochs = f.epochs;
  c.batch_size = f.batch;
  c.chunk_seconds = f.chunk;
  c.chunks_per_track = f.chunks_per_track;
  c.lr = f.lr;
  c.dropout = f.dropout;
  c.seed = f.seed;
  c.max_train_tracks = f.max_tracks;
  return c;
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--dataset", f.dataset, "Dataset root (from `hypsep dataset`)")->required();
  cmd->add_option("--loss", f.loss, "psa | wa | ce | ce_w")->capture_default_str();
  cmd->add_option("--parent-weight", f.parent_weight, "Weight of the parent-head loss")->capture_default_str();
  cmd->add_option("--leaf-weight", f.leaf_weight, "Weight of the leaf-head loss")->capture_default_str();
  cmd->add_option("--geometry", f.model.geometry, "hyperbolic | euclidean")->capture_default_str();
  cmd->add_option("--curvature", f.model.curvature, "Ball curvature c")->capture_default_str();
  cmd->add_option("--dim", f.model.dim, "Embedding dimension L")->capture_default_str();
  cmd->add_option("--hidden", f.model.hidden, "Recurrent units per direction")->capture_default_str();
  cmd->add_option("--layers", f.model.layers, "Bidirectional recurrent layers")->capture_default_str();
  cmd->add_option("--epochs", f.epochs)->capture_default_str();
  cmd->add_option("--batch-size", f.batch)->capture_default_str();
  cmd->add_option("--chunk-seconds", f.chunk)->capture_default_str();
  cmd->add_option("--chunks-per-track", f.chunks_per_track, "Random chunks per track per epoch")->capture_default_str();
  cmd->add_option("--lr", f.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--dropout", f.dropout, "Training dropout between recurrent layers")->capture_default_str();
  cmd->add_option("--seed", f.seed)->capture_default_str();
  cmd->add_option("--max-tracks", f.max_tracks, "Use only the first N training tracks (0 = all)")->capture_default_str();
}

void write_json(const std::string& path, const json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

std::vector<double> parse_thetas(const std::vector<double>& given) {
  return given.empty() ? pipeline::default_thetas() : given;
}

hypsep::serve::BundleServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int run(int argc, char** argv) {
  CLI::App app{"Hierarchical audio source separation on the Poincare ball"};
  app.set_config("--config", "", "TOML/INI file with default flag values");
  app.require_subcommand(1);

  // dataset
  std::string ds_out = "data";
  std::size_t ds_tracks = 200;
  double ds_duration = 6.0;
  std::uint64_t ds_seed = 2024;
  auto* ds = app.add_subcommand("dataset", "Generate the synthetic hierarchical dataset");
  ds->add_option("--out", ds_out, "Output directory")->capture_default_str();
  ds->add_option("--tracks", ds_tracks)->capture_default_str();
  ds->add_option("--duration", ds_duration, "Seconds per track")->capture_default_str();
  ds->add_option("--seed", ds_seed, "Master seed")->capture_default_str();

  // train
  TrainFlags tf;
  auto* tr = app.add_subcommand("train", "Train a separation model");
  add_train_flags(tr, tf);
  tr->add_option("--out", tf.out, "Checkpoint path (best validation epoch)")->capture_default_str();
  tr->add_option("--log", tf.log, "Per-epoch JSON log path");

  // evaluate
  std::string ev_ckpt, ev_dataset, ev_mode = "report", ev_split = "test", ev_out, ev_table;
  std::size_t ev_max = 0, ev_passes = 1000;
  double ev_rate = 0.5;
  std::uint64_t ev_seed = 7;
  std::vector<double> ev_thetas, ev_curvatures{0.1, 1.0};
  std::vector<std::size_t> ev_dims{2, 16, 128};
  TrainFlags grid_tf;
  auto* ev = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", ev_ckpt);
  ev->add_option("--dataset", ev_dataset)->required();
  ev->add_option("--mode", ev_mode, "report | threshold-sweep | certainty-compare | curvature-dim-grid")
      ->check(CLI::IsMember({"report", "threshold-sweep", "certainty-compare", "curvature-dim-grid"}))
      ->capture_default_str();
  ev->add_option("--split", ev_split)->capture_default_str();
  ev->add_option("--max-tracks", ev_max, "Evaluate only the first N tracks (0 = all)")->capture_default_str();
  ev->add_option("--out", ev_out, "JSON report path (default: stdout)");
  ev->add_option("--table", ev_table, "Also write a plain-text table (report mode)");
  ev->add_option("--thetas", ev_thetas, "Threshold grid (default 0, 0.05, ..., 0.95)");
  ev->add_option("--passes", ev_passes, "MC-dropout passes")->capture_default_str();
  ev->add_option("--rate", ev_rate, "MC-dropout rate")->capture_default_str();
  ev->add_option("--seed", ev_seed, "MC-dropout seed")->capture_default_str();
  ev->add_option("--curvatures", ev_curvatures, "Grid curvatures")->capture_default_str();
  ev->add_option("--dims", ev_dims, "Grid embedding dimensions")->capture_default_str();
  ev->add_option("--loss", grid_tf.loss, "Grid training loss")->capture_default_str();
  ev->add_option("--epochs", grid_tf.epochs, "Grid training epochs")->capture_default_str();
  ev->add_option("--train-seed", grid_tf.seed, "Grid training seed")->capture_default_str();

  // export
  std::string ex_ckpt, ex_dataset, ex_track, ex_out = "bundle";
  std::vector<double> ex_thetas;
  std::size_t ex_passes = 0;
  auto* ex = app.add_subcommand("export", "Export a UI bundle for one track");
  ex->add_option("--checkpoint", ex_ckpt)->required();
  ex->add_option("--dataset", ex_dataset)->required();
  ex->add_option("--track", ex_track, "Track id, e.g. track_0180")->required();
  ex->add_option("--out", ex_out)->capture_default_str();
  ex->add_option("--thetas", ex_thetas, "Threshold grid (default 0, 0.05, ..., 0.95)");
  ex->add_option("--bayesian-passes", ex_passes, "Add an MC-dropout certainty map")->capture_default_str();

  // serve
  std::string sv_bundle = "bundle", sv_host = "127.0.0.1";
  int sv_port = 8080;
  auto* sv = app.add_subcommand("serve", "Serve a bundle read-only over HTTP");
  sv->add_option("--bundle", sv_bundle)->capture_default_str();
  sv->add_option("--host", sv_host)->capture_default_str();
  sv->add_option("--port", sv_port)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCategory::kConfig);
  }

  if (ds->parsed()) {
    const auto m = data::build_dataset(ds_out, ds_tracks, ds_duration, ds_seed);
    std::cerr << "wrote " << ds_tracks << " tracks to " << ds_out << " (train " << m.splits.at("train").size()
              << ", validation " << m.splits.at("validation").size() << ", test " << m.splits.at("test").size()
              << ")\n";
  } else if (tr->parsed()) {
    const pipeline::TrainConfig cfg = to_config(tf);
    json log = {{"config", pipeline::to_json(cfg)}, {"epochs", json::array()}};
    const auto result = pipeline::train(cfg, [&](const pipeline::EpochLog& e) {
      std::cerr << "epoch " << e.epoch << "  train " << e.train_loss << "  val " << e.val_loss << "  lr " << e.lr
                << "  (" << e.seconds << " s)\n";
      log["epochs"].push_back(pipeline::to_json(e));
      if (!tf.log.empty()) write_json(tf.log, log);
    });
    log["best_epoch"] = result.best_epoch;
    log["best_val_loss"] = result.best_val_loss;
    if (!tf.log.empty()) write_json(tf.log, log);
    checkpoint::save(tf.out, result.best, {{"train", pipeline::to_json(cfg)}, {"best_epoch", result.best_epoch}});
    std::cerr << "best epoch " << result.best_epoch << " (val " << result.best_val_loss << ") -> " << tf.out << '\n';
  } else if (ev->parsed()) {
    const pipeline::EvalOptions opts{ev_split, ev_max};
    if (ev_mode == "curvature-dim-grid") {
      grid_tf.dataset = ev_dataset;
      write_json(ev_out, pipeline::to_json(pipeline::evaluate_grid(to_config(grid_tf), ev_curvatures, ev_dims, opts)));
      return 0;
    }
    if (ev_ckpt.empty()) throw ConfigError("--checkpoint is required for mode " + ev_mode);
    const model::Model m = checkpoint::load(ev_ckpt);
    if (ev_mode == "report") {
      const auto r = pipeline::evaluate_report(m, ev_dataset, opts);
      write_json(ev_out, pipeline::to_json(r));
      if (!ev_table.empty()) {
        std::ofstream t(ev_table);
        if (!t) throw DataError("cannot write " + ev_table);
        t << objectives::render_table({{"model", r.model}, {"no_proc", r.no_proc}, {"oracle_psf", r.oracle_psf}});
      }
    } else if (ev_mode == "threshold-sweep") {
      write_json(ev_out, pipeline::to_json(pipeline::evaluate_threshold_sweep(m, ev_dataset, opts, parse_thetas(ev_thetas))));
    } else {
      write_json(ev_out, pipeline::to_json(pipeline::evaluate_certainty(m, ev_dataset, opts, ev_passes, ev_rate, ev_seed)));
    }
  } else if (ex->parsed()) {
    pipeline::ExportOptions opts;
    opts.track_id = ex_track;
    opts.thetas = parse_thetas(ex_thetas);
    opts.bayesian_passes = ex_passes;
    pipeline::export_bundle(checkpoint::load(ex_ckpt), ex_dataset, ex_out, opts);
    const auto problems = serve::validate_bundle(ex_out);
    if (!problems.empty()) throw DataError("exported bundle does not validate: " + problems.front());
    std::cerr << "bundle written to " << ex_out << '\n';
  } else if (sv->parsed()) {
    serve::BundleServer server(sv_bundle);
    const int port = server.bind(sv_host, sv_port);
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "serving " << sv_bundle << " on http://" << sv_host << ":" << port << "/\n";
    server.listen();
    g_server = nullptr;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hypsep::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
