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

// Read-only HTTP access to an exported UI bundle:
//   GET /manifest                     manifest.json
//   GET /audio/mixture.wav            the input mixture
//   GET /audio/<theta>/<class>.wav    thresholded stems, theta as "0.05"
//   GET /maps/<kind>.bin              float32 little-endian grids
//   GET /                             ui/index.html of the bundle, or a
//                                     placeholder page when no UI is built

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace hypsep::serve {

// Checks a bundle directory against its manifest: required fields, a sorted
// threshold grid starting at 0, and that every referenced file exists with
// the expected size. Returns the problems found (empty when valid).
std::vector<std::string> validate_bundle(const std::filesystem::path& dir);

class BundleServer {
 public:
  // Throws DataError if the bundle does not validate.
  explicit BundleServer(std::filesystem::path bundle);
  ~BundleServer();
  BundleServer(const BundleServer&) = delete;
  BundleServer& operator=(const BundleServer&) = delete;

  // Port 0 picks a free port. Returns the bound port; throws DataError.
  int bind(const std::string& host, int port);
  // Serves until stop(); call after bind().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hypsep::serve
