#include "kws/numerics.hpp"

#include <cmath>
#include <string>

#include "kws/errors.hpp"

namespace kws {

void require_same_size(const ParamVector& a, const ParamVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw UsageError(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                     " vs " + std::to_string(b.size()) + ")");
  }
}

void ensure_finite(const ParamVector& v, const char* what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      throw UsageError(std::string(what) + ": non-finite entry at index " + std::to_string(i));
    }
  }
}

double l2_norm(const ParamVector& v) {
  if (v.empty()) {
    throw UsageError("l2_norm: empty vector");
  }
  ensure_finite(v, "l2_norm");
  // Scaled accumulation keeps the result finite for entries near the double
  // range limits.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double x : v) {
    const double r = x / scale;
    sum += r * r;
  }
  return scale * std::sqrt(sum);
}

ParamVector clip_by_norm(const ParamVector& v, double c) {
  if (!(c > 0.0)) {
    throw UsageError("clip_by_norm: clip norm must be positive");
  }
  const double norm = l2_norm(v);
  if (norm <= c) return v;
  const double factor = c / norm;
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
  // Rounding can leave the result a few ulps above c; pull it back so the
  // bound holds exactly.
  while (l2_norm(out) > c) {
    for (double& x : out) x = std::nextafter(x, 0.0);
  }
  return out;
}

ParamVector axpy(double a, const ParamVector& x, const ParamVector& y) {
  require_same_size(x, y, "axpy");
  ParamVector out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] + a * x[i];
  ensure_finite(out, "axpy");
  return out;
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b, "subtract");
  ParamVector out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  ensure_finite(out, "subtract");
  return out;
}

ParamVector scale(double a, const ParamVector& v) {
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = a * v[i];
  ensure_finite(out, "scale");
  return out;
}

void narrow_to_float(ParamVector& v) {
  for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

}  // namespace kws
