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

#include "hypsep/hierarchy.h"

#include <set>

#include "hypsep/errors.h"

namespace hypsep {

Hierarchy Hierarchy::default_taxonomy() {
  return Hierarchy{{"tonal", "noisy"},
                   {"low_harmonic", "mid_harmonic", "plucked", "percussive", "band_noise"},
                   {0, 0, 0, 1, 1}};
}

void Hierarchy::validate() const {
  if (parents.empty()) throw ConfigError("hierarchy needs at least one parent class");
  if (leaves.size() < parents.size()) throw ConfigError("hierarchy needs at least as many leaves as parents");
  if (leaf_parent.size() != leaves.size()) throw ConfigError("every leaf needs exactly one parent");
  std::set<std::size_t> used;
  for (std::size_t p : leaf_parent) {
    if (p >= parents.size()) throw ConfigError("leaf assigned to an unknown parent");
    used.insert(p);
  }
  if (used.size() != parents.size()) throw ConfigError("every parent needs at least one leaf");
  std::set<std::string> names(parents.begin(), parents.end());
  names.insert(leaves.begin(), leaves.end());
  if (names.size() != parents.size() + leaves.size()) throw ConfigError("class names must be unique");
}

std::vector<std::size_t> Hierarchy::leaves_of(std::size_t parent) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    if (leaf_parent[k] == parent) out.push_back(k);
  }
  return out;
}

void to_json(nlohmann::json& j, const Hierarchy& h) {
  j = nlohmann::json{{"parents", h.parents}, {"leaves", h.leaves}, {"leaf_parent", h.leaf_parent}};
}

void from_json(const nlohmann::json& j, Hierarchy& h) {
  j.at("parents").get_to(h.parents);
  j.at("leaves").get_to(h.leaves);
  j.at("leaf_parent").get_to(h.leaf_parent);
}

}  // namespace hypsep
