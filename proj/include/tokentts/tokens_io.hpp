// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Self-describing binary token files, shared by coarse sequences (n_q = 1)
// and fine grids (n_q = layers). Layout, little-endian:
//   magic "STOK" | u32 version | f32 frame_rate | u32 n_q | u32 K |
//   u32 length(frames) | length*n_q u16 token ids (frame-major)
// Header is 24 bytes; file size = 24 + 2*T*n_q. Read a written file and you
// get the sequence back exactly; bad magic, version mismatch, and truncated
// payloads are distinct errors.

#include <cstring>
#include <fstream>

#include "tokentts/coarse_codec.hpp"
#include "tokentts/fine_codec.hpp"

namespace tts {

struct TokensIoError : Error {
  enum class Kind { kBadMagic, kVersionMismatch, kTruncated };
  Kind kind;
  TokensIoError(Kind kind, const std::string& msg) : Error(msg), kind(kind) {}
};

constexpr uint32_t kTokenFileVersion = 1;
constexpr size_t kTokenFileHeaderSize = 24;

struct TokenFile {
  float frame_rate = 16000.0f / kFrameLen;
  int n_q = 1;
  int K = 2;
  std::vector<uint16_t> ids;  // [T][n_q]

  int frames() const { return n_q == 0 ? 0 : static_cast<int>(ids.size()) / n_q; }

  void validate() const {
    check(n_q >= 1 && K >= 2, "token file: bad n_q or K");
    check(K <= 65536, "token file: K too large for 16-bit ids");
    check(ids.size() % n_q == 0, "token file: ragged payload");
    for (uint16_t id : ids) check(id < K, "token file: id out of range");
  }

  static TokenFile from_fine_grid(const FineTokenGrid& grid, double frame_rate) {
    grid.validate();
    check(grid.K <= 65536, "token file: K too large for 16-bit ids");
    TokenFile f;
    f.frame_rate = static_cast<float>(frame_rate);
    f.n_q = grid.n_q;
    f.K = grid.K;
    f.ids.assign(grid.ids.begin(), grid.ids.end());
    return f;
  }

  FineTokenGrid to_fine_grid() const {
    validate();
    FineTokenGrid g;
    g.T = frames();
    g.n_q = n_q;
    g.K = K;
    g.ids.assign(ids.begin(), ids.end());
    return g;
  }

  static TokenFile from_coarse_seq(const CoarseTokenSeq& seq, double frame_rate) {
    seq.validate();
    check(seq.K <= 65536, "token file: K too large for 16-bit ids");
    TokenFile f;
    f.frame_rate = static_cast<float>(frame_rate);
    f.n_q = 1;
    f.K = seq.K;
    f.ids.assign(seq.indices.begin(), seq.indices.end());
    return f;
  }

  CoarseTokenSeq to_coarse_seq() const {
    validate();
    check(n_q == 1, "token file: not a coarse sequence");
    CoarseTokenSeq s;
    s.K = K;
    s.indices.assign(ids.begin(), ids.end());
    return s;
  }
};

inline void write_tokens(const TokenFile& f, const std::string& path) {
  f.validate();
  std::string out = "STOK";
  auto put32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  uint32_t rate_bits;
  std::memcpy(&rate_bits, &f.frame_rate, 4);
  put32(kTokenFileVersion);
  put32(rate_bits);
  put32(static_cast<uint32_t>(f.n_q));
  put32(static_cast<uint32_t>(f.K));
  put32(static_cast<uint32_t>(f.frames()));
  for (uint16_t id : f.ids) {
    out.push_back(static_cast<char>(id & 0xff));
    out.push_back(static_cast<char>((id >> 8) & 0xff));
  }
  write_text_file(path, out);
}

inline TokenFile read_tokens(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good())
    throw TokensIoError(TokensIoError::Kind::kTruncated, "token file: cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kTokenFileHeaderSize)
    throw TokensIoError(TokensIoError::Kind::kTruncated, "token file: truncated payload");
  if (bytes.compare(0, 4, "STOK") != 0)
    throw TokensIoError(TokensIoError::Kind::kBadMagic, "token file: bad magic");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  auto get32 = [&](size_t off) {
    return static_cast<uint32_t>(p[off]) | (static_cast<uint32_t>(p[off + 1]) << 8) |
           (static_cast<uint32_t>(p[off + 2]) << 16) | (static_cast<uint32_t>(p[off + 3]) << 24);
  };
  const uint32_t version = get32(4);
  if (version != kTokenFileVersion)
    throw TokensIoError(TokensIoError::Kind::kVersionMismatch,
                        "token file: version mismatch (got " + std::to_string(version) + ")");
  TokenFile f;
  const uint32_t rate_bits = get32(8);
  std::memcpy(&f.frame_rate, &rate_bits, 4);
  f.n_q = static_cast<int>(get32(12));
  f.K = static_cast<int>(get32(16));
  const uint32_t frames = get32(20);
  const size_t need = kTokenFileHeaderSize + 2ull * frames * f.n_q;
  if (bytes.size() < need)
    throw TokensIoError(TokensIoError::Kind::kTruncated, "token file: truncated payload");
  f.ids.resize(static_cast<size_t>(frames) * f.n_q);
  for (size_t i = 0; i < f.ids.size(); ++i)
    f.ids[i] = static_cast<uint16_t>(p[kTokenFileHeaderSize + 2 * i] |
                                     (p[kTokenFileHeaderSize + 2 * i + 1] << 8));
  f.validate();
  return f;
}

}  // namespace tts
