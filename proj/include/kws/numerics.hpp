#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace kws {

/// Flat vector of model weights or weight deltas. All training arithmetic is
/// carried out in double precision; the ordering of entries is fixed by
/// ModelLayout (see model.hpp).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t size, double fill = 0.0) : values_(size, fill) {}
  ParamVector(std::initializer_list<double> values) : values_(values) {}
  explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }

  std::span<double> span() noexcept { return values_; }
  std::span<const double> span() const noexcept { return values_; }

  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

// Default client update clip from the ablation baseline.
inline constexpr double kDefaultClipNorm = 20.0;

double l2_norm(const ParamVector& v);

/// Rescales v onto the ball of radius c when it lies outside; otherwise
/// returns v untouched.
ParamVector clip_by_norm(const ParamVector& v, double c);

/// y + a*x
ParamVector axpy(double a, const ParamVector& x, const ParamVector& y);

/// a - b
ParamVector subtract(const ParamVector& a, const ParamVector& b);

ParamVector scale(double a, const ParamVector& v);

// Throws UsageError when any entry is NaN or infinite. `what` names the
// quantity in the message.
void ensure_finite(const ParamVector& v, const char* what);

void require_same_size(const ParamVector& a, const ParamVector& b, const char* what);

// Rounds every entry through float32. Used at checkpoint boundaries so that
// in-memory state matches what a resumed run reads back.
void narrow_to_float(ParamVector& v);

}  // namespace kws
