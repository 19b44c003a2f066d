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

#include "hypsep/dsp.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "hypsep/errors.h"

namespace hypsep::dsp {
namespace {

// FFTW plans for one transform size. Planning is not thread-safe, so plans are
// created once under a lock; the new-array execute calls are.
struct FftPlans {
  explicit FftPlans(std::size_t n) : n(n) {
    std::vector<double> re(n);
    std::vector<Complex> cx(n / 2 + 1);
    auto* cplx = reinterpret_cast<fftw_complex*>(cx.data());
    const int size = static_cast<int>(n);
    forward = fftw_plan_dft_r2c_1d(size, re.data(), cplx, FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse = fftw_plan_dft_c2r_1d(size, cplx, re.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~FftPlans() {
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
  FftPlans(const FftPlans&) = delete;
  FftPlans& operator=(const FftPlans&) = delete;

  std::size_t n;
  fftw_plan forward;
  fftw_plan inverse;
};

const FftPlans& plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<FftPlans>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlans>(n);
  return *slot;
}

void rfft(const FftPlans& p, std::vector<double>& in, std::span<Complex> out) {
  fftw_execute_dft_r2c(p.forward, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
}

// Unnormalized inverse; `in` is clobbered by FFTW.
void irfft(const FftPlans& p, std::vector<Complex>& in, std::vector<double>& out) {
  fftw_execute_dft_c2r(p.inverse, reinterpret_cast<fftw_complex*>(in.data()), out.data());
}

std::size_t frame_count(std::size_t length, std::size_t hop) { return (length + hop - 1) / hop + 1; }

void require_same_layout(const ComplexSpectrogram& a, const ComplexSpectrogram& b, const char* what) {
  if (!a.same_layout(b)) throw std::invalid_argument(std::string(what) + ": spectrogram shapes differ");
}

}  // namespace

void StftConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("sample rate must be positive");
  if (fft_size < 4 || fft_size % 2 != 0) throw std::invalid_argument("fft size must be even");
  if (hop * 2 != fft_size) throw std::invalid_argument("hop must be half the fft size");
}

ComplexSpectrogram::ComplexSpectrogram(std::size_t frames, const StftConfig& config, std::size_t signal_length)
    : frames_(frames),
      bins_(config.bins()),
      config_(config),
      signal_length_(signal_length),
      data_(frames * config.bins()) {}

bool ComplexSpectrogram::same_layout(const ComplexSpectrogram& other) const {
  return frames_ == other.frames_ && bins_ == other.bins_ && config_ == other.config_;
}

std::vector<double> sqrt_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
  }
  return w;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& config) {
  config.validate();
  if (w.samples.empty()) throw std::invalid_argument("stft of an empty waveform");
  for (double v : w.samples) {
    if (!std::isfinite(v)) throw NumericError("stft: non-finite sample");
  }
  const std::size_t n = config.fft_size;
  const std::size_t hop = config.hop;
  const std::size_t length = w.samples.size();
  const std::size_t frames = frame_count(length, hop);
  const auto window = sqrt_hann(n);
  const FftPlans& plans = plans_for(n);

  ComplexSpectrogram spec(frames, config, length);
  std::vector<double> buf(n);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t m = 0; m < n; ++m) {
      // padded index t*hop + m maps to signal index t*hop + m - hop
      const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * hop + m) - static_cast<std::ptrdiff_t>(hop);
      const double x = (idx >= 0 && static_cast<std::size_t>(idx) < length) ? w.samples[idx] : 0.0;
      buf[m] = x * window[m];
    }
    rfft(plans, buf, spec.frame(t));
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& s) {
  const StftConfig& config = s.config();
  config.validate();
  const std::size_t n = config.fft_size;
  const std::size_t hop = config.hop;
  if (s.bins() != config.bins()) throw std::invalid_argument("istft: bin count does not match the fft size");
  if (s.frames() == 0) throw std::invalid_argument("istft: spectrogram has no frames");
  const auto window = sqrt_hann(n);
  const FftPlans& plans = plans_for(n);

  std::vector<double> padded((s.frames() + 1) * hop, 0.0);
  std::vector<Complex> spec(s.bins());
  std::vector<double> frame(n);
  const double norm = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < s.frames(); ++t) {
    std::copy(s.frame(t).begin(), s.frame(t).end(), spec.begin());
    irfft(plans, spec, frame);
    for (std::size_t m = 0; m < n; ++m) padded[t * hop + m] += frame[m] * norm * window[m];
  }
  std::size_t length = s.signal_length();
  if (length == 0 || length + hop > padded.size()) length = padded.size() - hop;
  Waveform out;
  out.sample_rate = config.sample_rate;
  out.samples.assign(padded.begin() + static_cast<std::ptrdiff_t>(hop),
                     padded.begin() + static_cast<std::ptrdiff_t>(hop + length));
  return out;
}

std::vector<Waveform> apply_mask_resynth(const ComplexSpectrogram& mixture, const MaskTensor& masks) {
  if (masks.frames != mixture.frames() || masks.bins != mixture.bins()) {
    throw std::invalid_argument("apply_mask_resynth: mask shape does not match the spectrogram");
  }
  for (double v : masks.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("apply_mask_resynth: mask value outside [0, 1]");
  }
  std::vector<Waveform> out;
  out.reserve(masks.classes);
  for (std::size_t k = 0; k < masks.classes; ++k) {
    ComplexSpectrogram masked = mixture;
    for (std::size_t t = 0; t < mixture.frames(); ++t) {
      for (std::size_t f = 0; f < mixture.bins(); ++f) masked.at(t, f) *= masks.at(k, t, f);
    }
    out.push_back(istft(masked));
  }
  return out;
}

MaskTensor ideal_binary_mask(std::span<const ComplexSpectrogram> sources) {
  if (sources.empty()) throw std::invalid_argument("ideal_binary_mask: no sources");
  for (const auto& s : sources) require_same_layout(s, sources[0], "ideal_binary_mask");
  const std::size_t frames = sources[0].frames();
  const std::size_t bins = sources[0].bins();
  MaskTensor m(sources.size(), frames, bins);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins; ++f) {
      std::size_t best = 0;
      double best_mag = std::abs(sources[0].at(t, f));
      for (std::size_t k = 1; k < sources.size(); ++k) {
        const double mag = std::abs(sources[k].at(t, f));
        if (mag > best_mag) {
          best = k;
          best_mag = mag;
        }
      }
      m.at(best, t, f) = 1.0;
    }
  }
  return m;
}

MaskTensor oracle_psf_mask(const ComplexSpectrogram& source, const ComplexSpectrogram& mixture) {
  require_same_layout(source, mixture, "oracle_psf_mask");
  MaskTensor m(1, mixture.frames(), mixture.bins());
  for (std::size_t t = 0; t < mixture.frames(); ++t) {
    for (std::size_t f = 0; f < mixture.bins(); ++f) {
      const Complex x = mixture.at(t, f);
      const double mag2 = std::norm(x);
      if (std::sqrt(mag2) < 1e-12) continue;
      // |S| cos(dphi) / |X| = Re(S conj X) / |X|^2
      m.at(0, t, f) = std::clamp((source.at(t, f) * std::conj(x)).real() / mag2, 0.0, 1.0);
    }
  }
  return m;
}

std::vector<int> active_source_count(std::span<const ComplexSpectrogram> sources) {
  if (sources.empty()) throw std::invalid_argument("active_source_count: no sources");
  for (const auto& s : sources) require_same_layout(s, sources[0], "active_source_count");
  const std::size_t frames = sources[0].frames();
  const std::size_t bins = sources[0].bins();
  const double floor_ratio = std::pow(10.0, -20.0 / 10.0);

  std::vector<double> peak(sources.size(), 0.0);
  for (std::size_t k = 0; k < sources.size(); ++k) {
    for (const Complex& v : sources[k].values()) peak[k] = std::max(peak[k], std::norm(v));
  }
  std::vector<int> counts(frames * bins, 0);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t f = 0; f < bins; ++f) {
      double total = 0.0;
      for (const auto& s : sources) total += std::abs(s.at(t, f));
      if (total <= 0.0) continue;
      int active = 0;
      for (std::size_t k = 0; k < sources.size(); ++k) {
        const Complex v = sources[k].at(t, f);
        const bool loud = peak[k] > 0.0 && std::norm(v) >= peak[k] * floor_ratio;
        const bool dominant = std::abs(v) / total > 0.1;
        if (loud && dominant) ++active;
      }
      counts[t * bins + f] = active;
    }
  }
  return counts;
}

void masked_istft_adjoint(const ComplexSpectrogram& mixture, std::span<const double> grad_wave,
                          std::span<double> grad_mask) {
  const StftConfig& config = mixture.config();
  const std::size_t n = config.fft_size;
  const std::size_t hop = config.hop;
  const std::size_t bins = mixture.bins();
  const std::size_t length = grad_wave.size();
  if (grad_mask.size() != mixture.frames() * bins) throw std::invalid_argument("masked_istft_adjoint: mask size");
  const auto window = sqrt_hann(n);
  const FftPlans& plans = plans_for(n);

  std::vector<double> buf(n);
  std::vector<Complex> spec(bins);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < mixture.frames(); ++t) {
    for (std::size_t m = 0; m < n; ++m) {
      const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(t * hop + m) - static_cast<std::ptrdiff_t>(hop);
      buf[m] = (idx >= 0 && static_cast<std::size_t>(idx) < length) ? grad_wave[idx] * window[m] : 0.0;
    }
    rfft(plans, buf, spec);
    for (std::size_t f = 0; f < bins; ++f) {
      const double weight = (f == 0 || f == bins - 1) ? inv_n : 2.0 * inv_n;
      grad_mask[t * bins + f] += weight * (mixture.at(t, f) * std::conj(spec[f])).real();
    }
  }
}

}  // namespace hypsep::dsp
