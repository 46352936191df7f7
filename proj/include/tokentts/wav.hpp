// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Mono waveform container and PCM16 WAV I/O. The pipeline runs at a fixed
// 16 kHz; files at other rates are rejected instead of resampled so frame
// arithmetic stays exact.

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "tokentts/common.hpp"

namespace tts {

constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = kSampleRate;

  int length() const { return static_cast<int>(samples.size()); }
  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate; }

  void validate() const {
    check(sample_rate > 0, "Waveform: sample_rate must be positive");
    for (float s : samples)
      check(std::isfinite(s) && s >= -1.0f && s <= 1.0f, "Waveform: sample outside [-1, 1]");
  }
};

namespace wav_detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}
inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}
inline void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace wav_detail

// Reads a PCM16 mono WAV. Errors: unreadable file, non-PCM16, non-mono input,
// unsupported sample rate (anything other than 16 kHz; no silent resampling).
inline Waveform load_waveform(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "unreadable file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  check(bytes.size() >= 44, "unreadable file (truncated WAV header): " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  check(std::memcmp(p, "RIFF", 4) == 0 && std::memcmp(p + 8, "WAVE", 4) == 0,
        "unreadable file (not a RIFF/WAVE): " + path);

  int channels = -1, rate = -1, bits = -1, format = -1;
  size_t data_off = 0, data_len = 0;
  size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const char* id = bytes.data() + off;
    const uint32_t sz = wav_detail::read_u32(p + off + 4);
    const size_t body = off + 8;
    if (std::memcmp(id, "fmt ", 4) == 0 && body + 16 <= bytes.size()) {
      format = wav_detail::read_u16(p + body);
      channels = wav_detail::read_u16(p + body + 2);
      rate = static_cast<int>(wav_detail::read_u32(p + body + 4));
      bits = wav_detail::read_u16(p + body + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(sz, bytes.size() - body);
    }
    off = body + sz + (sz & 1);
  }
  check(format == 1 && bits == 16, "unsupported WAV encoding (need PCM16): " + path);
  check(channels == 1, "non-mono input: " + path);
  check(rate == kSampleRate,
        "unsupported sample rate " + std::to_string(rate) + " (need 16000): " + path);
  check(data_off != 0, "unreadable file (no data chunk): " + path);

  Waveform w;
  w.sample_rate = rate;
  const size_t n = data_len / 2;
  w.samples.resize(n);
  for (size_t i = 0; i < n; ++i) {
    const int16_t s = static_cast<int16_t>(
        static_cast<uint16_t>(p[data_off + 2 * i] | (p[data_off + 2 * i + 1] << 8)));
    w.samples[i] = static_cast<float>(s) / 32768.0f;
  }
  return w;
}

inline void save_waveform(const Waveform& w, const std::string& path) {
  check(w.sample_rate > 0, "save_waveform: bad sample rate");
  std::string out;
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  out.reserve(44 + 2 * n);
  out += "RIFF";
  wav_detail::put_u32(out, 36 + 2 * n);
  out += "WAVEfmt ";
  wav_detail::put_u32(out, 16);
  wav_detail::put_u16(out, 1);  // PCM
  wav_detail::put_u16(out, 1);  // mono
  wav_detail::put_u32(out, static_cast<uint32_t>(w.sample_rate));
  wav_detail::put_u32(out, static_cast<uint32_t>(w.sample_rate * 2));
  wav_detail::put_u16(out, 2);
  wav_detail::put_u16(out, 16);
  out += "data";
  wav_detail::put_u32(out, 2 * n);
  for (float s : w.samples) {
    float v = std::max(-1.0f, std::min(1.0f, s));
    int q = static_cast<int>(std::lround(v * 32768.0f));
    q = std::max(-32768, std::min(32767, q));
    wav_detail::put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
  }
  write_text_file(path, out);
}

}  // namespace tts
