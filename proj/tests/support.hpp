#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "kws/dataset.hpp"
#include "kws/model.hpp"
#include "kws/numerics.hpp"
#include "kws/rng.hpp"

namespace kws::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("kws_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ModelConfig tiny_model(int bins = 3) {
  ModelConfig m;
  m.input_bins = bins;
  m.encoder = {{3, 2, 2}, {3, 2, 2}};
  m.decoder = {{3, 3, 0}};
  return m;
}

// Random small architecture with at most `max_params` parameters.
inline ModelConfig random_tiny_model(Rng& rng, std::size_t max_params = 300) {
  std::uniform_int_distribution<int> bins(2, 4), nodes(1, 4), mem(1, 4), bneck(1, 3), count(0, 2);
  for (;;) {
    ModelConfig m;
    m.input_bins = bins(rng);
    const int ne = count(rng);
    const int nd = count(rng);
    for (int i = 0; i < ne; ++i) m.encoder.push_back({nodes(rng), mem(rng), bneck(rng)});
    for (int i = 0; i < nd; ++i) m.decoder.push_back({nodes(rng), mem(rng), 0});
    if (m.encoder.empty() && m.decoder.empty()) continue;
    if (param_count(m) <= max_params) return m;
  }
}

inline ParamVector random_params(std::size_t n, Rng& rng, double scale = 0.5) {
  std::normal_distribution<double> d(0.0, scale);
  ParamVector p(n);
  for (auto& x : p) x = d(rng);
  return p;
}

inline Spectrogram random_spec(int frames, int bins, Rng& rng) {
  std::normal_distribution<float> d(0.0f, 1.0f);
  Spectrogram s;
  s.frames = frames;
  s.bins = bins;
  s.values.resize(static_cast<std::size_t>(frames) * bins);
  for (auto& v : s.values) v = d(rng);
  return s;
}

inline std::vector<std::uint8_t> random_targets(int frames, Rng& rng) {
  std::bernoulli_distribution b(0.3);
  std::vector<std::uint8_t> t(frames);
  for (auto& x : t) x = b(rng) ? 1 : 0;
  return t;
}

inline Utterance random_utterance(const std::string& id, const std::string& speaker, int frames, int bins,
                                  Rng& rng) {
  Utterance u;
  u.id = id;
  u.speaker = speaker;
  u.spec = random_spec(frames, bins, rng);
  u.targets.assign(frames, 0);
  std::bernoulli_distribution pos(0.5);
  if (pos(rng)) {
    u.polarity = Polarity::kPositive;
    const int end = frames - 1;
    for (int t = std::max(0, end - kTargetWindow + 1); t <= end; ++t) u.targets[t] = 1;
  }
  return u;
}

inline SyntheticConfig small_corpus_config(int speakers = 6, int per_speaker = 12, int frames = 60) {
  SyntheticConfig c;
  c.n_speakers = speakers;
  c.utterances_per_speaker = per_speaker;
  c.utterance_len_frames = frames;
  c.keyword_len_frames = 20;
  return c;
}

inline double max_abs_diff(const ParamVector& a, const ParamVector& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace kws::test
