// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Synthetic tone corpus, table-driven text tokenizer, dataset manifest, and
// waveform segmentation. The corpus is built from harmonic tones whose pitch
// is controlled per token and scaled per speaker, so tests can verify content
// with an FFT peak.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tokentts/stft.hpp"
#include "tokentts/wav.hpp"

namespace tts {

// ---------------------------------------------------------------------------
// tokenizer
// ---------------------------------------------------------------------------

struct Vocab {
  std::map<std::string, int> token_to_id;
  int unk_id = 0;

  int size() const {
    int mx = unk_id;
    for (const auto& [tok, id] : token_to_id) mx = std::max(mx, id);
    return mx + 1;
  }
};

struct PhonemeSequence {
  std::vector<int> tokens;
  int unknown_count = 0;

  int length() const { return static_cast<int>(tokens.size()); }
};

// Greedy longest-match lookup tokenizer. Unknown characters map to the
// reserved UNK id and are counted.
inline PhonemeSequence tokenize_text(const std::string& text, const Vocab& vocab) {
  check(!text.empty(), "tokenize_text: empty text (sequence length must be >= 1)");
  PhonemeSequence out;
  size_t pos = 0;
  size_t max_len = 1;
  for (const auto& [tok, id] : vocab.token_to_id) max_len = std::max(max_len, tok.size());
  while (pos < text.size()) {
    size_t best = 0;
    int best_id = vocab.unk_id;
    for (size_t len = std::min(max_len, text.size() - pos); len >= 1; --len) {
      auto it = vocab.token_to_id.find(text.substr(pos, len));
      if (it != vocab.token_to_id.end()) {
        best = len;
        best_id = it->second;
        break;
      }
    }
    if (best == 0) {
      out.tokens.push_back(vocab.unk_id);
      ++out.unknown_count;
      ++pos;
    } else {
      out.tokens.push_back(best_id);
      pos += best;
    }
  }
  for (int id : out.tokens) check(id < vocab.size(), "tokenize_text: id outside vocabulary");
  return out;
}

inline std::string vocab_to_text(const Vocab& v) {
  std::string out = "<unk>\t" + std::to_string(v.unk_id) + "\n";
  for (const auto& [tok, id] : v.token_to_id) out += tok + "\t" + std::to_string(id) + "\n";
  return out;
}

inline Vocab vocab_from_text(const std::string& text) {
  Vocab v;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    const size_t tab = line.find('\t');
    check(tab != std::string::npos, "vocab: malformed line: " + line);
    const std::string tok = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (tok == "<unk>")
      v.unk_id = id;
    else
      v.token_to_id[tok] = id;
  }
  return v;
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string id;
  std::string source;  // wav path relative to the manifest directory
  std::string text;
  int speaker_id = 0;
  std::string split;  // "train" or "eval"
};

struct DatasetManifest {
  int num_speakers = 0;
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> split_entries(const std::string& split) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == split) out.push_back(e);
    return out;
  }

  void validate() const {
    check(num_speakers >= 1, "manifest: speaker count missing");
    std::set<std::pair<std::string, int>> train_keys;
    for (const auto& e : entries) {
      check(e.speaker_id >= 0 && e.speaker_id < num_speakers,
            "manifest: speaker_id outside declared speaker set: " + e.id);
      check(e.split == "train" || e.split == "eval", "manifest: bad split tag: " + e.split);
      if (e.split == "train") train_keys.insert({e.text, e.speaker_id});
    }
    for (const auto& e : entries)
      if (e.split == "eval")
        check(!train_keys.count({e.text, e.speaker_id}),
              "manifest: eval entry also present in train: " + e.id);
  }
};

inline std::string manifest_to_text(const DatasetManifest& m) {
  std::string out = "#tokentts-manifest-v1 speakers=" + std::to_string(m.num_speakers) + "\n";
  out += "#id\tsource\ttext\tspeaker_id\tsplit\n";
  for (const auto& e : m.entries) {
    out += e.id + "\t" + e.source + "\t" + e.text + "\t" + std::to_string(e.speaker_id) + "\t" +
           e.split + "\n";
  }
  return out;
}

inline DatasetManifest manifest_from_text(const std::string& text) {
  DatasetManifest m;
  size_t pos = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    pos = eol + 1;
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "#tokentts-manifest-v1 speakers=";
      if (line.rfind(tag, 0) == 0) {
        m.num_speakers = std::stoi(line.substr(tag.size()));
        saw_header = true;
      }
      continue;
    }
    std::vector<std::string> f;
    size_t p = 0;
    while (true) {
      size_t tab = line.find('\t', p);
      if (tab == std::string::npos) {
        f.push_back(line.substr(p));
        break;
      }
      f.push_back(line.substr(p, tab - p));
      p = tab + 1;
    }
    check(f.size() == 5, "manifest: expected 5 tab-separated fields: " + line);
    m.entries.push_back({f[0], f[1], f[2], std::stoi(f[3]), f[4]});
  }
  check(saw_header, "manifest: missing #tokentts-manifest-v1 header");
  m.validate();
  return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
  return manifest_from_text(read_text_file(path));
}

// ---------------------------------------------------------------------------
// synthetic corpus generator
// ---------------------------------------------------------------------------

struct SpeakerSpec {
  float f0_scale = 1.0f;
  std::vector<float> harmonics = {1.0f, 0.5f, 0.25f};  // fundamental first
};

struct TokenSpec {
  char symbol = 'A';
  float freq_hz = 200.0f;
  float duration_s = 0.15f;
};

struct GeneratorConfig {
  std::vector<SpeakerSpec> speakers;
  std::vector<TokenSpec> alphabet;
  std::vector<std::string> fixed_texts;  // rendered once per speaker, split=train
  int random_utterances = 0;             // extra random-token train utterances
  int random_text_len = 4;
  int eval_utterances = 0;
  float peak = 0.95f;
  int fade_samples = 48;

  void validate() const {
    check(speakers.size() >= 2, "generator: need at least 2 speakers");
    check(!alphabet.empty(), "generator: empty token alphabet");
    for (const auto& s : speakers) check(!s.harmonics.empty(), "generator: empty harmonics");
  }

  const TokenSpec& token(char symbol) const {
    for (const auto& t : alphabet)
      if (t.symbol == symbol) return t;
    throw Error(std::string("generator: symbol not in alphabet: ") + symbol);
  }

  // Fundamental a prompt renders at; defined for single-pitch texts, which is
  // what the canonical prompts are.
  double expected_peak_hz(const std::string& text, int speaker_id) const {
    check(!text.empty(), "expected_peak_hz: empty text");
    check(speaker_id >= 0 && speaker_id < static_cast<int>(speakers.size()),
          "expected_peak_hz: bad speaker");
    return static_cast<double>(token(text[0]).freq_hz) * speakers[speaker_id].f0_scale;
  }

  Vocab vocab() const {
    Vocab v;
    v.unk_id = 0;
    int next = 1;
    for (const auto& t : alphabet) v.token_to_id[std::string(1, t.symbol)] = next++;
    return v;
  }
};

// Renders phase-reset harmonic tone segments per token, applies short edge
// fades, concatenates, then peak-normalizes to cfg.peak.
inline Waveform render_utterance(const GeneratorConfig& cfg, const std::string& text,
                                 int speaker_id) {
  cfg.validate();
  check(!text.empty(), "render_utterance: empty text");
  check(speaker_id >= 0 && speaker_id < static_cast<int>(cfg.speakers.size()),
        "render_utterance: bad speaker id");
  const auto& spk = cfg.speakers[speaker_id];
  Waveform w;
  w.sample_rate = kSampleRate;
  for (char sym : text) {
    const TokenSpec& tok = cfg.token(sym);
    const int n = static_cast<int>(std::lround(tok.duration_s * kSampleRate));
    check(n > 0, "render_utterance: token duration too short");
    const double f0 = static_cast<double>(tok.freq_hz) * spk.f0_scale;
    std::vector<float> seg(n, 0.0f);
    for (size_t h = 0; h < spk.harmonics.size(); ++h) {
      const double f = f0 * static_cast<double>(h + 1);
      if (f >= kSampleRate / 2.0) continue;  // drop aliasing harmonics
      const double wstep = 2.0 * M_PI * f / kSampleRate;
      for (int t = 0; t < n; ++t)
        seg[t] += spk.harmonics[h] * static_cast<float>(std::sin(wstep * t));
    }
    const int fade = std::min(cfg.fade_samples, n / 2);
    for (int t = 0; t < fade; ++t) {
      const float g = 0.5f * (1.0f - std::cos(M_PI * (t + 0.5f) / fade));
      seg[t] *= g;
      seg[n - 1 - t] *= g;
    }
    w.samples.insert(w.samples.end(), seg.begin(), seg.end());
  }
  float peak = 0.0f;
  for (float s : w.samples) peak = std::max(peak, std::fabs(s));
  if (peak > 0.0f) {
    const float g = cfg.peak / peak;
    for (auto& s : w.samples) s *= g;
  }
  return w;
}

// Renders every utterance and writes wavs, manifest, vocab, and a copy of the
// generator seed under out_dir. Pure function of (cfg, seed): rerunning yields
// byte-identical files.
inline DatasetManifest build_synthetic_dataset(const GeneratorConfig& cfg, uint64_t seed,
                                               const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "wav");

  Rng rng(seed);
  DatasetManifest m;
  m.num_speakers = static_cast<int>(cfg.speakers.size());

  auto random_text = [&]() {
    std::string t;
    for (int i = 0; i < cfg.random_text_len; ++i)
      t += cfg.alphabet[rng.uniform_int(static_cast<int>(cfg.alphabet.size()))].symbol;
    return t;
  };

  std::set<std::pair<std::string, int>> train_keys;
  int next_id = 0;
  auto emit = [&](const std::string& text, int speaker, const std::string& split) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "u%04d", next_id++);
    const std::string id = buf;
    const std::string rel = "wav/" + id + ".wav";
    save_waveform(render_utterance(cfg, text, speaker), (fs::path(out_dir) / rel).string());
    m.entries.push_back({id, rel, text, speaker, split});
    if (split == "train") train_keys.insert({text, speaker});
  };

  for (const auto& text : cfg.fixed_texts)
    for (int spk = 0; spk < m.num_speakers; ++spk) emit(text, spk, "train");
  for (int i = 0; i < cfg.random_utterances; ++i) emit(random_text(), i % m.num_speakers, "train");
  for (int i = 0; i < cfg.eval_utterances; ++i) {
    const int spk = i % m.num_speakers;
    std::string text = random_text();
    for (int tries = 0; train_keys.count({text, spk}) && tries < 1000; ++tries)
      text = random_text();
    check(!train_keys.count({text, spk}), "generator: could not draw a disjoint eval text");
    emit(text, spk, "eval");
  }

  m.validate();
  write_text_file((fs::path(out_dir) / "manifest.tsv").string(), manifest_to_text(m));
  write_text_file((fs::path(out_dir) / "vocab.tsv").string(), vocab_to_text(cfg.vocab()));
  return m;
}

// ---------------------------------------------------------------------------
// segmentation
// ---------------------------------------------------------------------------

// Random fixed-length chunks with frame-aligned offsets, deterministic for a
// fixed seed. Yields floor(len / segment_len) chunks (at least one).
inline std::vector<Waveform> segment_waveform(const Waveform& w, int segment_len,
                                              uint64_t rng_seed, int frame_len = 600) {
  check(frame_len > 0 && segment_len > 0, "segment_waveform: lengths must be positive");
  check(segment_len % frame_len == 0,
        "segment_waveform: segment_len not divisible by frame length");
  check(w.length() >= segment_len, "segment_waveform: waveform shorter than segment_len");
  Rng rng(rng_seed);
  const int max_offset_frames = (w.length() - segment_len) / frame_len;
  const int n_chunks = std::max(1, w.length() / segment_len);
  std::vector<Waveform> out;
  out.reserve(n_chunks);
  for (int i = 0; i < n_chunks; ++i) {
    const int off = rng.uniform_int(max_offset_frames + 1) * frame_len;
    Waveform chunk;
    chunk.sample_rate = w.sample_rate;
    chunk.samples.assign(w.samples.begin() + off, w.samples.begin() + off + segment_len);
    out.push_back(std::move(chunk));
  }
  return out;
}

}  // namespace tts
