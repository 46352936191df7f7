// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tts {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Deterministic RNG. std::mt19937 stream plus hand-rolled float draws so the
// byte stream never depends on the standard library's distribution impls.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : gen_(static_cast<uint32_t>(seed ^ (seed >> 32))) {}

  uint32_t next_u32() { return gen_(); }

  // uniform in [0, 1)
  float uniform() {
    return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f);
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller
  float normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    float r = std::sqrt(-2.0f * std::log(u1));
    float a = 6.28318530717958648f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // uniform integer in [0, n)
  int uniform_int(int n) {
    if (n <= 0) throw Error("uniform_int: n must be positive");
    return static_cast<int>(next_u32() % static_cast<uint32_t>(n));
  }

 private:
  std::mt19937 gen_;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), "cannot open file for writing: " + path);
  out << text;
  check(out.good(), "write failed: " + path);
}

inline bool file_exists(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return in.good();
}

inline bool all_finite(const std::vector<float>& v) {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace tts
