#include "kws/augment.hpp"

#include <algorithm>
#include <cmath>

#include "kws/errors.hpp"

namespace kws {

void SpecAugmentConfig::validate() const {
  if (n_time_masks < 0 || max_time_frames < 0 || n_freq_masks < 0 || max_freq_bins < 0) {
    throw UsageError("specaugment: mask counts and widths must be >= 0");
  }
  if (noise_std && !(*noise_std >= 0.0)) throw UsageError("specaugment: noise_std must be >= 0");
}

namespace {

struct Moments {
  double mean = 0.0;
  double stddev = 0.0;
};

Moments moments(const Spectrogram& s) {
  double sum = 0.0;
  for (float v : s.values) sum += v;
  const double n = static_cast<double>(s.values.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (float v : s.values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

// (start, width) with width ~ U{0..min(max, extent)}, start ~ U{0..extent-width}.
std::pair<int, int> sample_mask(int max_width, int extent, Rng& rng) {
  const int w = std::uniform_int_distribution<int>(0, std::min(max_width, extent))(rng);
  const int start = std::uniform_int_distribution<int>(0, extent - w)(rng);
  return {start, w};
}

}  // namespace

Spectrogram apply_spec_augment(const Spectrogram& spec, const SpecAugmentConfig& cfg, Rng& rng,
                               std::vector<MaskRecord>* log) {
  cfg.validate();
  Spectrogram out = spec;
  if (spec.frames < 1 || spec.bins < 1) return out;

  if (cfg.n_time_masks > 0) {
    double mean = 0.0, stddev = 0.0;
    if (!cfg.noise_mean || !cfg.noise_std) {
      const Moments m = moments(spec);
      mean = m.mean;
      stddev = m.stddev;
    }
    if (cfg.noise_mean) mean = *cfg.noise_mean;
    if (cfg.noise_std) stddev = *cfg.noise_std;
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int i = 0; i < cfg.n_time_masks; ++i) {
      const auto [t0, w] = sample_mask(cfg.max_time_frames, spec.frames, rng);
      if (log) log->push_back({MaskAxis::kTime, t0, w});
      for (int t = t0; t < t0 + w; ++t) {
        for (int b = 0; b < spec.bins; ++b) out.at(t, b) = static_cast<float>(mean + stddev * noise(rng));
      }
    }
  }
  for (int i = 0; i < cfg.n_freq_masks; ++i) {
    const auto [f0, w] = sample_mask(cfg.max_freq_bins, spec.bins, rng);
    if (log) log->push_back({MaskAxis::kFrequency, f0, w});
    for (int t = 0; t < spec.frames; ++t) {
      for (int b = f0; b < f0 + w; ++b) out.at(t, b) = 0.0f;
    }
  }
  return out;
}

}  // namespace kws
