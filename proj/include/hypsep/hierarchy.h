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

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace hypsep {

// Two-level class taxonomy: every leaf class belongs to exactly one parent.
struct Hierarchy {
  std::vector<std::string> parents;
  std::vector<std::string> leaves;
  std::vector<std::size_t> leaf_parent;

  // tonal -> {low_harmonic, mid_harmonic, plucked}; noisy -> {percussive, band_noise}
  static Hierarchy default_taxonomy();

  // Throws ConfigError when the invariants do not hold.
  void validate() const;

  std::vector<std::size_t> leaves_of(std::size_t parent) const;

  friend bool operator==(const Hierarchy&, const Hierarchy&) = default;
};

void to_json(nlohmann::json& j, const Hierarchy& h);
void from_json(const nlohmann::json& j, Hierarchy& h);

}  // namespace hypsep
