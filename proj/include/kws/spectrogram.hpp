#pragma once

#include <cstddef>
#include <vector>

namespace kws {

// F x B log-filterbank energies, frame-major, one frame per 10 ms. Stored at
// float32 precision, which is also the on-disk precision.
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<float> values;

  Spectrogram() = default;
  Spectrogram(int f, int b, float fill = 0.0f)
      : frames(f), bins(b), values(static_cast<std::size_t>(f) * b, fill) {}

  float& at(int t, int b) { return values[static_cast<std::size_t>(t) * bins + b]; }
  float at(int t, int b) const { return values[static_cast<std::size_t>(t) * bins + b]; }

  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;
};

}  // namespace kws
