#pragma once

#include <optional>
#include <vector>

#include "kws/rng.hpp"
#include "kws/spectrogram.hpp"

namespace kws {

struct SpecAugmentConfig {
  int n_time_masks = 2;
  int max_time_frames = 60;
  int n_freq_masks = 2;
  int max_freq_bins = 15;
  // Fill statistics for time masks. Unset means "use the input's own mean /
  // standard deviation".
  std::optional<double> noise_mean;
  std::optional<double> noise_std;

  static SpecAugmentConfig disabled() { return {0, 0, 0, 0, std::nullopt, std::nullopt}; }
  void validate() const;
};

enum class MaskAxis { kTime, kFrequency };

struct MaskRecord {
  MaskAxis axis;
  int start;
  int width;
};

/// Time masks (rows replaced with Gaussian noise) followed by frequency masks
/// (columns zeroed). Widths are uniform on {0..max}, starts uniform over the
/// valid positions; masks may overlap. When `log` is given, every sampled
/// mask is appended to it in application order.
Spectrogram apply_spec_augment(const Spectrogram& spec, const SpecAugmentConfig& cfg, Rng& rng,
                               std::vector<MaskRecord>* log = nullptr);

}  // namespace kws
