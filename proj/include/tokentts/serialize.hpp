// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Checkpoint container: named float tensors plus (stage, iteration, seed) and
// the full model config as a JSON string. Binary little-endian layout; loads
// are bit-exact. Header layout:
//   magic "TTSC" | u32 version | u8-len stage | u64 iteration | u64 seed |
//   u32 config_len | config bytes | u32 tensor_count |
//   per tensor: u16 name_len | name | u32 rows | u32 cols | f32 data

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "tokentts/nn.hpp"

namespace tts {

struct CheckpointError : Error {
  using Error::Error;
};

struct NamedTensor {
  int rows = 0;
  int cols = 0;
  std::vector<float> data;
};

struct Checkpoint {
  std::string stage;
  uint64_t iteration = 0;
  uint64_t seed = 0;
  std::string config_json;
  std::map<std::string, NamedTensor> tensors;

  uint64_t config_hash() const { return fnv1a64(config_json); }

  void put_params(const ParamList& params) {
    for (const auto& p : params)
      tensors[p.name] = {p.tensor.rows(), p.tensor.cols(), p.tensor.data()};
  }

  // Fills params by name; every param must be present with matching shape.
  void load_params(ParamList& params) const {
    for (auto& p : params) {
      auto it = tensors.find(p.name);
      check(it != tensors.end(), "checkpoint: missing tensor " + p.name);
      check(it->second.rows == p.tensor.rows() && it->second.cols == p.tensor.cols(),
            "checkpoint: shape mismatch for " + p.name);
      p.tensor.data() = it->second.data;
    }
  }
};

namespace ckpt_detail {

template <typename T>
void put_raw(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take_raw(const std::string& in, size_t& off) {
  if (off + sizeof(T) > in.size()) throw CheckpointError("checkpoint: truncated payload");
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

inline std::string take_bytes(const std::string& in, size_t& off, size_t n) {
  if (off + n > in.size()) throw CheckpointError("checkpoint: truncated payload");
  std::string s = in.substr(off, n);
  off += n;
  return s;
}

}  // namespace ckpt_detail

constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  using namespace ckpt_detail;
  std::string out = "TTSC";
  put_raw<uint32_t>(out, kCheckpointVersion);
  check(c.stage.size() < 256, "checkpoint: stage name too long");
  out.push_back(static_cast<char>(c.stage.size()));
  out += c.stage;
  put_raw<uint64_t>(out, c.iteration);
  put_raw<uint64_t>(out, c.seed);
  put_raw<uint32_t>(out, static_cast<uint32_t>(c.config_json.size()));
  out += c.config_json;
  put_raw<uint32_t>(out, static_cast<uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    check(name.size() < 65536, "checkpoint: tensor name too long");
    put_raw<uint16_t>(out, static_cast<uint16_t>(name.size()));
    out += name;
    put_raw<uint32_t>(out, static_cast<uint32_t>(t.rows));
    put_raw<uint32_t>(out, static_cast<uint32_t>(t.cols));
    const size_t n = t.data.size() * sizeof(float);
    const size_t pos = out.size();
    out.resize(pos + n);
    std::memcpy(out.data() + pos, t.data.data(), n);
  }
  write_text_file(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) throw CheckpointError("checkpoint: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  size_t off = 0;
  if (take_bytes(bytes, off, 4) != "TTSC") throw CheckpointError("checkpoint: bad magic");
  const uint32_t version = take_raw<uint32_t>(bytes, off);
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint: version mismatch (got " + std::to_string(version) + ")");
  Checkpoint c;
  const uint8_t stage_len = take_raw<uint8_t>(bytes, off);
  c.stage = take_bytes(bytes, off, stage_len);
  c.iteration = take_raw<uint64_t>(bytes, off);
  c.seed = take_raw<uint64_t>(bytes, off);
  const uint32_t cfg_len = take_raw<uint32_t>(bytes, off);
  c.config_json = take_bytes(bytes, off, cfg_len);
  const uint32_t count = take_raw<uint32_t>(bytes, off);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = take_raw<uint16_t>(bytes, off);
    const std::string name = take_bytes(bytes, off, name_len);
    NamedTensor t;
    t.rows = static_cast<int>(take_raw<uint32_t>(bytes, off));
    t.cols = static_cast<int>(take_raw<uint32_t>(bytes, off));
    const size_t n = static_cast<size_t>(t.rows) * t.cols;
    const std::string raw = take_bytes(bytes, off, n * sizeof(float));
    t.data.resize(n);
    std::memcpy(t.data.data(), raw.data(), n * sizeof(float));
    c.tensors[name] = std::move(t);
  }
  return c;
}

}  // namespace tts
