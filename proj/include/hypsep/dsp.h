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

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace hypsep::dsp {

using Complex = std::complex<double>;

// 32 ms frames with 50% overlap at the desk-scale rate of 8 kHz.
struct StftConfig {
  int sample_rate = 8000;
  std::size_t fft_size = 256;
  std::size_t hop = 128;

  std::size_t bins() const { return fft_size / 2 + 1; }
  // Throws std::invalid_argument unless fft_size is even and hop = fft_size / 2.
  void validate() const;

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 8000;
};

class ComplexSpectrogram {
 public:
  ComplexSpectrogram() = default;
  ComplexSpectrogram(std::size_t frames, const StftConfig& config, std::size_t signal_length);

  std::size_t frames() const { return frames_; }
  std::size_t bins() const { return bins_; }
  const StftConfig& config() const { return config_; }
  // Length of the analysed waveform; istft trims its output to this.
  std::size_t signal_length() const { return signal_length_; }

  Complex& at(std::size_t t, std::size_t f) { return data_[t * bins_ + f]; }
  const Complex& at(std::size_t t, std::size_t f) const { return data_[t * bins_ + f]; }
  std::span<Complex> frame(std::size_t t) { return {data_.data() + t * bins_, bins_}; }
  std::span<const Complex> frame(std::size_t t) const { return {data_.data() + t * bins_, bins_}; }
  std::vector<Complex>& values() { return data_; }
  const std::vector<Complex>& values() const { return data_; }

  bool same_layout(const ComplexSpectrogram& other) const;

 private:
  std::size_t frames_ = 0;
  std::size_t bins_ = 0;
  StftConfig config_;
  std::size_t signal_length_ = 0;
  std::vector<Complex> data_;
};

// K x T x F real masks.
struct MaskTensor {
  MaskTensor() = default;
  MaskTensor(std::size_t classes, std::size_t frames, std::size_t bins, double fill = 0.0)
      : classes(classes), frames(frames), bins(bins), values(classes * frames * bins, fill) {}

  double& at(std::size_t k, std::size_t t, std::size_t f) { return values[(k * frames + t) * bins + f]; }
  double at(std::size_t k, std::size_t t, std::size_t f) const { return values[(k * frames + t) * bins + f]; }

  std::size_t classes = 0;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<double> values;
};

// Periodic square-root Hann window; w[n]^2 + w[n + N/2]^2 = 1.
std::vector<double> sqrt_hann(std::size_t n);

// Frames start half a frame before the signal (zero prefix) and the tail is
// zero-padded, so every sample is covered by exactly two frames and
// istft(stft(w)) reproduces w.
ComplexSpectrogram stft(const Waveform& w, const StftConfig& config = {});
Waveform istft(const ComplexSpectrogram& s);

// Per class k: istft(M^k . X), i.e. resynthesis with the mixture phase.
std::vector<Waveform> apply_mask_resynth(const ComplexSpectrogram& mixture, const MaskTensor& masks);

// One-hot per bin on the loudest source, ties to the lowest index.
MaskTensor ideal_binary_mask(std::span<const ComplexSpectrogram> sources);

// clamp(|S|/|X| cos(angle S - angle X), 0, 1); 0 where |X| < 1e-12.
// Returns a single-class mask.
MaskTensor oracle_psf_mask(const ComplexSpectrogram& source, const ComplexSpectrogram& mixture);

// T x F row-major count of active sources. A source is active at a bin when
// its energy is within 20 dB of its own file-wide peak bin energy and its
// share of the summed source magnitudes exceeds 0.1.
std::vector<int> active_source_count(std::span<const ComplexSpectrogram> sources);

// Vector-Jacobian product of M -> istft(M . X) for a single class: given the
// gradient with respect to the output waveform, accumulates the gradient with
// respect to the T x F mask into grad_mask.
void masked_istft_adjoint(const ComplexSpectrogram& mixture, std::span<const double> grad_wave,
                          std::span<double> grad_mask);

}  // namespace hypsep::dsp
