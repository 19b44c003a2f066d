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

#include "hypsep/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include "hypsep/errors.h"

namespace hypsep::checkpoint {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'H', 'Y', 'P', 'S', 'E', 'P', 'C', 'K'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw DataError("truncated checkpoint " + path.string());
  return v;
}

struct Header {
  json doc;
  std::streamoff payload_offset = 0;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw DataError(path.string() + " is not a model checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kFormatVersion) throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto len = get<std::uint64_t>(in, path);
  if (len > (1u << 26)) throw DataError("implausible checkpoint header length in " + path.string());
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("truncated checkpoint " + path.string());
  Header h;
  try {
    h.doc = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  h.payload_offset = in.tellg();
  return h;
}

}  // namespace

json config_to_json(const model::ModelConfig& c) {
  return json{{"hierarchy", c.hierarchy},
              {"geometry", model::to_string(c.geometry)},
              {"curvature", c.curvature},
              {"embedding_dim", c.embedding_dim},
              {"hidden", c.hidden},
              {"layers", c.layers},
              {"compose_heads", c.compose_heads},
              {"stft", {{"sample_rate", c.stft.sample_rate}, {"fft_size", c.stft.fft_size}, {"hop", c.stft.hop}}}};
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig c;
  j.at("hierarchy").get_to(c.hierarchy);
  c.geometry = model::geometry_from_string(j.at("geometry").get<std::string>());
  j.at("curvature").get_to(c.curvature);
  j.at("embedding_dim").get_to(c.embedding_dim);
  j.at("hidden").get_to(c.hidden);
  j.at("layers").get_to(c.layers);
  c.compose_heads = j.value("compose_heads", false);
  const json& s = j.at("stft");
  s.at("sample_rate").get_to(c.stft.sample_rate);
  s.at("fft_size").get_to(c.stft.fft_size);
  s.at("hop").get_to(c.stft.hop);
  return c;
}

void save(const std::filesystem::path& path, const model::Model& model, const json& extra) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : model.params()) {
    tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
    offset += t.size();
  }
  json header{{"config", config_to_json(model.config())}, {"tensors", tensors}, {"extra", extra}};
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kFormatVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : model.params()) {
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw DataError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

model::Model load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  const Header h = read_header(in, path);
  try {
    model::ModelConfig config = config_from_json(h.doc.at("config"));
    ad::ParameterSet params;
    for (const json& t : h.doc.at("tensors")) {
      const auto rows = t.at("rows").get<std::size_t>();
      const auto cols = t.at("cols").get<std::size_t>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      Tensor v(rows, cols);
      in.seekg(h.payload_offset + static_cast<std::streamoff>(offset * sizeof(double)));
      if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)))) {
        throw DataError("truncated checkpoint payload in " + path.string());
      }
      params[t.at("name").get<std::string>()] = std::move(v);
    }
    return model::Model(std::move(config), std::move(params));
  } catch (const json::exception& e) {
    throw DataError("malformed checkpoint header in " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError("inconsistent checkpoint " + path.string() + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("checkpoint " + path.string() + " has an invalid config: " + e.what());
  }
}

json load_extra(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return read_header(in, path).doc.value("extra", json::object());
}

}  // namespace hypsep::checkpoint
