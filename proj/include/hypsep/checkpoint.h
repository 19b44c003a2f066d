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

// Model checkpoint container:
//   8 bytes   magic "HYPSEPCK"
//   u32 LE    format version
//   u64 LE    header length H
//   H bytes   JSON header: model config (hierarchy, geometry, curvature,
//             dimensions, stft) and the tensor manifest {name, rows, cols,
//             offset}, offsets counted in doubles from the payload start
//   payload   little-endian IEEE-754 doubles, tensors back to back
// Round trips are bit-exact.

#include <filesystem>

#include "hypsep/model.h"
#include "json.hpp"

namespace hypsep::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

void save(const std::filesystem::path& path, const model::Model& model, const nlohmann::json& extra = {});
// Throws DataError on unreadable, truncated or inconsistent files.
model::Model load(const std::filesystem::path& path);
// The free-form "extra" object stored alongside the model (training info).
nlohmann::json load_extra(const std::filesystem::path& path);

nlohmann::json config_to_json(const model::ModelConfig& c);
model::ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace hypsep::checkpoint
