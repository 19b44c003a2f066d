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

#include "hypsep/serve.h"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "hypsep/errors.h"
#include "httplib.h"
#include "json.hpp"

namespace hypsep::serve {
namespace {

using nlohmann::json;

const char kPlaceholder[] =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>hypsep bundle</title></head>"
    "<body><p>No UI is installed in this bundle. Data endpoints: <a href=\"/manifest\">/manifest</a>, "
    "/audio/&lt;theta&gt;/&lt;class&gt;.wav, /maps/&lt;kind&gt;.bin</p></body></html>";

bool read_file(const std::filesystem::path& path, std::string& out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

void check_file(const std::filesystem::path& dir, const std::string& rel, std::uintmax_t expected_size,
                std::vector<std::string>& problems) {
  if (rel.find("..") != std::string::npos || rel.empty() || rel.front() == '/') {
    problems.push_back("unsafe path in manifest: " + rel);
    return;
  }
  std::error_code ec;
  const auto size = std::filesystem::file_size(dir / rel, ec);
  if (ec) {
    problems.push_back("missing file: " + rel);
  } else if (expected_size > 0 && size != expected_size) {
    problems.push_back("file " + rel + " has " + std::to_string(size) + " bytes, expected " + std::to_string(expected_size));
  }
}

}  // namespace

std::vector<std::string> validate_bundle(const std::filesystem::path& dir) {
  std::vector<std::string> problems;
  std::string text;
  if (!read_file(dir / "manifest.json", text)) return {"no manifest.json in " + dir.string()};
  json m;
  try {
    m = json::parse(text);
  } catch (const json::exception& e) {
    return {std::string("manifest.json is not valid JSON: ") + e.what()};
  }
  try {
    if (m.at("format_version").get<int>() != 1) problems.push_back("unsupported format_version");
    const auto frames = m.at("frames").get<std::size_t>();
    const auto bins = m.at("bins").get<std::size_t>();
    const auto dim = m.at("embedding_dim").get<std::size_t>();
    if (!(m.at("curvature").get<double>() > 0.0)) problems.push_back("curvature must be positive");
    const auto parents = m.at("classes").at("parents").get<std::vector<std::string>>();
    const auto leaves = m.at("classes").at("leaves").get<std::vector<std::string>>();
    std::vector<std::string> classes = parents;
    classes.insert(classes.end(), leaves.begin(), leaves.end());

    const auto thetas = m.at("thresholds").get<std::vector<double>>();
    if (thetas.empty() || thetas.front() != 0.0) problems.push_back("threshold grid must start at 0");
    for (std::size_t i = 1; i < thetas.size(); ++i) {
      if (!(thetas[i] > thetas[i - 1])) problems.push_back("threshold grid must be strictly ascending");
    }
    for (double t : thetas) {
      if (!(t >= 0.0 && t < 1.0)) problems.push_back("threshold outside [0, 1)");
    }

    check_file(dir, m.at("audio").at("mixture").get<std::string>(), 0, problems);
    const json& stems = m.at("audio").at("stems");
    if (stems.size() != thetas.size()) problems.push_back("stems do not cover the threshold grid");
    const json& metrics = m.at("metrics");
    if (metrics.size() != thetas.size()) problems.push_back("metrics do not cover the threshold grid");
    for (std::size_t i = 0; i < thetas.size() && i < metrics.size(); ++i) {
      const json& entry = metrics[i];
      if (entry.at("theta").get<double>() != thetas[i]) problems.push_back("metrics out of threshold order");
      const std::string label = entry.at("label").get<std::string>();
      if (!stems.contains(label)) {
        problems.push_back("no stems for threshold " + label);
        continue;
      }
      for (const auto& c : classes) {
        if (!stems.at(label).contains(c)) {
          problems.push_back("threshold " + label + " has no stem for " + c);
        } else {
          check_file(dir, stems.at(label).at(c).get<std::string>(), 0, problems);
        }
        if (!entry.at("classes").contains(c)) problems.push_back("threshold " + label + " has no metrics for " + c);
      }
      for (const char* avg : {"parents", "leaves", "all"}) {
        for (const char* key : {"si_sdr", "si_sir", "si_sar"}) {
          if (!entry.at("averages").at(avg).at(key).is_number()) problems.push_back("non-numeric average metric");
        }
      }
    }

    const json& maps = m.at("maps");
    for (const char* required : {"embeddings", "norm", "distance", "leaf_argmax"}) {
      if (!maps.contains(required)) problems.push_back(std::string("missing map ") + required);
    }
    for (const auto& [name, d] : maps.items()) {
      if (d.at("dtype").get<std::string>() != "float32" || d.at("byte_order").get<std::string>() != "little") {
        problems.push_back("map " + name + " must be little-endian float32");
      }
      std::uintmax_t count = 1;
      for (std::size_t s : d.at("shape").get<std::vector<std::size_t>>()) count *= s;
      check_file(dir, d.at("path").get<std::string>(), count * 4, problems);
    }
    if (maps.contains("embeddings") &&
        maps["embeddings"].at("shape").get<std::vector<std::size_t>>() != std::vector<std::size_t>{frames, bins, dim}) {
      problems.push_back("embedding map shape does not match frames x bins x embedding_dim");
    }
  } catch (const json::exception& e) {
    problems.push_back(std::string("manifest.json: ") + e.what());
  }
  return problems;
}

struct BundleServer::Impl {
  std::filesystem::path root;
  httplib::Server server;
};

BundleServer::BundleServer(std::filesystem::path bundle) : impl_(std::make_unique<Impl>()) {
  const auto problems = validate_bundle(bundle);
  if (!problems.empty()) throw DataError("invalid bundle " + bundle.string() + ": " + problems.front());
  impl_->root = std::move(bundle);
  const std::filesystem::path root = impl_->root;
  auto& svr = impl_->server;

  auto send_file = [root](const std::filesystem::path& rel, const char* type, httplib::Response& res) {
    std::string body;
    if (!read_file(root / rel, body)) {
      res.status = 404;
      res.set_content("not found", "text/plain");
      return;
    }
    res.set_content(body, type);
  };

  svr.Get("/manifest", [send_file](const httplib::Request&, httplib::Response& res) {
    send_file("manifest.json", "application/json", res);
  });
  svr.Get("/audio/mixture.wav", [send_file](const httplib::Request&, httplib::Response& res) {
    send_file(std::filesystem::path("audio") / "mixture.wav", "audio/wav", res);
  });
  svr.Get(R"(/audio/([0-9]\.[0-9]{2})/([A-Za-z0-9_]+)\.wav)", [send_file](const httplib::Request& req, httplib::Response& res) {
    send_file(std::filesystem::path("audio") / req.matches[1].str() / (req.matches[2].str() + ".wav"), "audio/wav", res);
  });
  svr.Get(R"(/maps/([A-Za-z0-9_]+)\.bin)", [send_file](const httplib::Request& req, httplib::Response& res) {
    send_file(std::filesystem::path("maps") / (req.matches[1].str() + ".bin"), "application/octet-stream", res);
  });
  if (std::filesystem::is_directory(root / "ui")) {
    svr.set_mount_point("/", (root / "ui").string());
  } else {
    svr.Get("/", [](const httplib::Request&, httplib::Response& res) { res.set_content(kPlaceholder, "text/html"); });
  }
  // Everything is read-only.
  auto deny = [](const httplib::Request&, httplib::Response& res) {
    res.status = 405;
    res.set_content("read-only", "text/plain");
  };
  svr.Post(".*", deny);
  svr.Put(".*", deny);
  svr.Delete(".*", deny);
  svr.Patch(".*", deny);
}

BundleServer::~BundleServer() { stop(); }

int BundleServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = impl_->server.bind_to_any_port(host);
    if (bound < 0) throw DataError("cannot bind to " + host);
    return bound;
  }
  if (!impl_->server.bind_to_port(host, port)) throw DataError("cannot bind to " + host + ":" + std::to_string(port));
  return port;
}

void BundleServer::listen() { impl_->server.listen_after_bind(); }

void BundleServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace hypsep::serve
