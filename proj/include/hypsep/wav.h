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

#include <filesystem>

#include "hypsep/dsp.h"

namespace hypsep::dsp {

enum class WavFormat { kFloat32, kPcm16 };

// Mono little-endian RIFF/WAVE. Reads PCM 16-bit and IEEE float 32-bit.
// Throws DataError on unreadable or unsupported files.
Waveform read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const Waveform& w, WavFormat format = WavFormat::kFloat32);

}  // namespace hypsep::dsp
