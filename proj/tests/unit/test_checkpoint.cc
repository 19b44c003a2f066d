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
#include "test_util.h"

using namespace hypsep;

namespace {

model::ModelConfig odd_config() {
  model::ModelConfig c;
  c.geometry = model::Geometry::kEuclidean;
  c.curvature = 0.37;
  c.embedding_dim = 3;
  c.hidden = 5;
  c.layers = 3;
  c.compose_heads = true;
  return c;
}

}  // namespace

TEST_CASE("round trip is bit-exact") {
  const auto dir = testutil::scratch_dir("ckpt");
  model::Model m = model::Model::initialize(odd_config(), 9);
  // Values that a lossy text format would mangle.
  m.params().at("dense.b")[0] = 1.0 / 3.0;
  m.params().at("dense.b")[1] = -0.0;
  m.params().at("dense.b")[2] = 4.9406564584124654e-324;
  const nlohmann::json extra = {{"best_epoch", 7}, {"note", "x"}};
  checkpoint::save(dir / "m.ckpt", m, extra);

  const model::Model r = checkpoint::load(dir / "m.ckpt");
  REQUIRE(r.params().size() == m.params().size());
  for (const auto& [name, t] : m.params()) {
    const Tensor& u = r.params().at(name);
    CHECK(u.rows() == t.rows());
    CHECK(u.cols() == t.cols());
    CHECK(std::memcmp(u.data(), t.data(), t.size() * sizeof(double)) == 0);
  }
  CHECK(checkpoint::config_to_json(r.config()) == checkpoint::config_to_json(m.config()));
  CHECK(r.config().layers == 3);
  CHECK(r.config().geometry == model::Geometry::kEuclidean);
  CHECK(r.config().compose_heads);
  CHECK(checkpoint::load_extra(dir / "m.ckpt") == extra);
  CHECK_FALSE(std::filesystem::exists(dir / "m.ckpt.tmp"));

  // Saving the reloaded model reproduces the file byte for byte.
  checkpoint::save(dir / "n.ckpt", r, extra);
  std::ifstream a(dir / "m.ckpt", std::ios::binary), b(dir / "n.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  CHECK(sa.substr(0, 8) == "HYPSEPCK");
}

TEST_CASE("damaged files are data errors") {
  const auto dir = testutil::scratch_dir("ckpt_bad");
  CHECK_THROWS_AS(checkpoint::load(dir / "missing.ckpt"), DataError);

  std::ofstream(dir / "junk.ckpt") << "not a checkpoint at all";
  CHECK_THROWS_AS(checkpoint::load(dir / "junk.ckpt"), DataError);

  checkpoint::save(dir / "ok.ckpt", model::Model::initialize(model::ModelConfig{}, 1));
  const auto size = std::filesystem::file_size(dir / "ok.ckpt");
  std::filesystem::copy_file(dir / "ok.ckpt", dir / "short.ckpt");
  std::filesystem::resize_file(dir / "short.ckpt", size - 16);
  CHECK_THROWS_AS(checkpoint::load(dir / "short.ckpt"), DataError);

  // Wrong format version.
  std::filesystem::copy_file(dir / "ok.ckpt", dir / "ver.ckpt");
  {
    std::fstream f(dir / "ver.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const char v[4] = {9, 0, 0, 0};
    f.write(v, 4);
  }
  CHECK_THROWS_AS(checkpoint::load(dir / "ver.ckpt"), DataError);
}
