#pragma once

#include <algorithm>
#include <cmath>

namespace disco {

/// log(1 + e^t) without overflow for large |t|.
inline double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

inline double silu(double t) { return t * sigmoid(t); }

/// d/dt silu(t).
inline double silu_grad(double t) {
  const double s = sigmoid(t);
  return s + t * s * (1.0 - s);
}

}  // namespace disco
