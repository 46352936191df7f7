// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Radix-2 FFT, magnitude spectrograms, and a differentiable spectrogram op.
// FFT sizes are required to be powers of two.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <vector>

#include "tokentts/ops.hpp"

namespace tts {

struct STFTConfig {
  int fft_size = 1024;
  int hop = 256;
  int window = 1024;

  void validate() const {
    check(fft_size > 0 && hop > 0 && window > 0, "STFTConfig: all fields must be positive");
    check(hop <= window && window <= fft_size, "STFTConfig: need hop <= window <= fft_size");
    check((fft_size & (fft_size - 1)) == 0, "STFTConfig: fft_size must be a power of two");
  }
  int bins() const { return fft_size / 2 + 1; }
};

// frames x bins magnitude matrix, plain data
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<float> mag;  // row-major [frames][bins]
  float at(int f, int b) const { return mag[static_cast<size_t>(f) * bins + b]; }
};

namespace fft_detail {

inline const std::vector<std::complex<float>>& twiddles(int n) {
  static std::map<int, std::vector<std::complex<float>>> cache;
  auto it = cache.find(n);
  if (it == cache.end()) {
    std::vector<std::complex<float>> tw(n / 2);
    for (int k = 0; k < n / 2; ++k) {
      double a = -2.0 * M_PI * k / n;
      tw[k] = {static_cast<float>(std::cos(a)), static_cast<float>(std::sin(a))};
    }
    it = cache.emplace(n, std::move(tw)).first;
  }
  return it->second;
}

// in-place iterative radix-2, forward transform (e^{-i2pikn/N})
inline void fft_inplace(std::vector<std::complex<float>>& a) {
  const int n = static_cast<int>(a.size());
  check(n > 0 && (n & (n - 1)) == 0, "fft: size must be a power of two");
  for (int i = 1, j = 0; i < n; ++i) {
    int bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const auto& tw = twiddles(n);
  for (int len = 2; len <= n; len <<= 1) {
    const int step = n / len;
    for (int i = 0; i < n; i += len) {
      for (int j = 0; j < len / 2; ++j) {
        auto u = a[i + j];
        auto v = a[i + j + len / 2] * tw[static_cast<size_t>(j) * step];
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
      }
    }
  }
}

}  // namespace fft_detail

// real-input FFT: fills re/im for bins 0..N/2
inline void rfft(const float* x, int n, std::vector<float>& re, std::vector<float>& im) {
  std::vector<std::complex<float>> buf(n);
  for (int i = 0; i < n; ++i) buf[i] = {x[i], 0.0f};
  fft_detail::fft_inplace(buf);
  re.resize(n / 2 + 1);
  im.resize(n / 2 + 1);
  for (int k = 0; k <= n / 2; ++k) {
    re[k] = buf[k].real();
    im[k] = buf[k].imag();
  }
}

// adjoint of rfft viewed as a real-linear map R^n -> (re, im) pairs:
// g[t] = sum_k gre[k] cos(2pi k t / n) - gim[k] sin(2pi k t / n)
inline void rfft_adjoint(const std::vector<float>& gre, const std::vector<float>& gim, int n,
                         std::vector<float>& out) {
  std::vector<std::complex<float>> buf(n, {0.0f, 0.0f});
  for (int k = 0; k <= n / 2; ++k) buf[k] = {gre[k], -gim[k]};  // conj
  fft_detail::fft_inplace(buf);
  out.resize(n);
  for (int t = 0; t < n; ++t) out[t] = buf[t].real();  // conj again, take real
}

inline std::vector<float> hann_window(int n) {
  std::vector<float> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5f * (1.0f - std::cos(2.0f * static_cast<float>(M_PI) * i / n));
  return w;
}

inline int stft_num_frames(int length, const STFTConfig& cfg) {
  return (length - cfg.window) / cfg.hop + 1;
}

// Magnitude spectrogram of a mono signal. Hann window, no center padding.
inline Spectrogram stft_magnitude(const std::vector<float>& x, const STFTConfig& cfg) {
  cfg.validate();
  check(static_cast<int>(x.size()) >= cfg.fft_size, "stft_magnitude: input shorter than fft_size");
  const int frames = stft_num_frames(static_cast<int>(x.size()), cfg);
  const auto win = hann_window(cfg.window);
  Spectrogram out;
  out.frames = frames;
  out.bins = cfg.bins();
  out.mag.resize(static_cast<size_t>(frames) * out.bins);
  std::vector<float> frame(cfg.fft_size, 0.0f), re, im;
  for (int f = 0; f < frames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0f);
    for (int i = 0; i < cfg.window; ++i) frame[i] = x[f * cfg.hop + i] * win[i];
    rfft(frame.data(), cfg.fft_size, re, im);
    for (int b = 0; b < out.bins; ++b)
      out.mag[static_cast<size_t>(f) * out.bins + b] = std::hypot(re[b], im[b]);
  }
  return out;
}

// Differentiable magnitude spectrogram of x [T,1] -> [frames, bins].
inline Tensor stft_mag_t(const Tensor& x, const STFTConfig& cfg) {
  cfg.validate();
  const int T = x.rows();
  check(x.cols() == 1, "stft_mag_t: expected a [T,1] signal");
  check(T >= cfg.fft_size, "stft_mag_t: input shorter than fft_size");
  const int frames = stft_num_frames(T, cfg);
  const int bins = cfg.bins();
  const auto win = hann_window(cfg.window);

  std::vector<float> mag(static_cast<size_t>(frames) * bins);
  std::vector<float> res(static_cast<size_t>(frames) * bins);
  std::vector<float> ims(static_cast<size_t>(frames) * bins);
  std::vector<float> frame(cfg.fft_size, 0.0f), re, im;
  for (int f = 0; f < frames; ++f) {
    std::fill(frame.begin(), frame.end(), 0.0f);
    for (int i = 0; i < cfg.window; ++i) frame[i] = x.data()[f * cfg.hop + i] * win[i];
    rfft(frame.data(), cfg.fft_size, re, im);
    for (int b = 0; b < bins; ++b) {
      const size_t idx = static_cast<size_t>(f) * bins + b;
      res[idx] = re[b];
      ims[idx] = im[b];
      mag[idx] = std::hypot(re[b], im[b]);
    }
  }

  return make_op(frames, bins, std::move(mag), {x},
                 [cfg, win, res = std::move(res), ims = std::move(ims)](detail::Node& self) {
                   auto& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   px.ensure_grad();
                   const int bins = self.cols;
                   std::vector<float> gre(bins), gim(bins), gframe;
                   for (int f = 0; f < self.rows; ++f) {
                     for (int b = 0; b < bins; ++b) {
                       const size_t idx = static_cast<size_t>(f) * bins + b;
                       const float m = self.value[idx];
                       const float g = self.grad[idx];
                       if (m > 1e-12f) {
                         gre[b] = g * res[idx] / m;
                         gim[b] = g * ims[idx] / m;
                       } else {
                         gre[b] = 0.0f;
                         gim[b] = 0.0f;
                       }
                     }
                     rfft_adjoint(gre, gim, cfg.fft_size, gframe);
                     for (int i = 0; i < cfg.window; ++i)
                       px.grad[f * cfg.hop + i] += gframe[i] * win[i];
                   }
                 });
}

// Frequency (Hz) of the strongest rfft bin over the whole signal, the content
// oracle used by the synthetic corpus tests.
inline double dominant_frequency(const std::vector<float>& x, int sample_rate) {
  check(!x.empty(), "dominant_frequency: empty signal");
  int n = 1;
  while (n < static_cast<int>(x.size())) n <<= 1;
  std::vector<float> padded(n, 0.0f);
  std::copy(x.begin(), x.end(), padded.begin());
  std::vector<float> re, im;
  rfft(padded.data(), n, re, im);
  int best = 0;
  double best_mag = -1.0;
  for (int k = 0; k < static_cast<int>(re.size()); ++k) {
    const double m = std::hypot(static_cast<double>(re[k]), static_cast<double>(im[k]));
    if (m > best_mag) {
      best_mag = m;
      best = k;
    }
  }
  return static_cast<double>(best) * sample_rate / n;
}

}  // namespace tts
