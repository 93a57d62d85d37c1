#pragma once

#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "como/errors.hpp"

namespace como {

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

enum class Manifold { Linear, Cyclic };

inline const char* manifold_name(Manifold m) {
  return m == Manifold::Linear ? "linear" : "cyclic";
}

inline double wrap_angle(double a) {
  a = std::fmod(a, kTwoPi);
  if (a < 0) a += kTwoPi;
  return a;
}

// A coordinate on the target manifold. Linear values live in [0,1];
// cyclic values in [0, 2*pi) with all arithmetic wrapping mod 2*pi.
struct PhiValue {
  double value = 0.0;
  Manifold manifold = Manifold::Linear;

  PhiValue() = default;
  PhiValue(double v, Manifold m) : value(v), manifold(m) {
    if (m == Manifold::Linear) {
      if (v < 0.0 || v > 1.0)
        throw ContractError("linear phi out of [0,1]: " + std::to_string(v));
    } else {
      value = wrap_angle(v);
    }
  }

  static PhiValue linear(double v) { return PhiValue(v, Manifold::Linear); }
  static PhiValue cyclic(double v) { return PhiValue(v, Manifold::Cyclic); }

  PhiValue shifted(double delta) const {
    if (manifold == Manifold::Linear) {
      double v = value + delta;
      if (v < 0.0) v = 0.0;
      if (v > 1.0) v = 1.0;
      return PhiValue(v, Manifold::Linear);
    }
    return PhiValue(wrap_angle(value + delta), Manifold::Cyclic);
  }
};

// Signed difference a - b; wrapped into (-pi, pi] for cyclic values.
inline double phi_delta(const PhiValue& a, const PhiValue& b) {
  if (a.manifold != b.manifold)
    throw ContractError("phi_delta across manifolds: " + std::string(manifold_name(a.manifold)) +
                        " vs " + manifold_name(b.manifold));
  if (a.manifold == Manifold::Linear) return a.value - b.value;
  double d = std::fmod(a.value - b.value, kTwoPi);
  if (d <= -kTwoPi / 2) d += kTwoPi;
  if (d > kTwoPi / 2) d -= kTwoPi;
  return d;
}

// Projection used by the regression losses: cyclic -> (sin, cos) on the unit
// circle; linear passes through as (phi, 0) so loss code is uniform.
inline std::pair<double, double> phi_project(const PhiValue& p) {
  if (p.manifold == Manifold::Cyclic) return {std::sin(p.value), std::cos(p.value)};
  return {p.value, 0.0};
}

inline int phi_projection_dim(Manifold m) { return m == Manifold::Cyclic ? 2 : 1; }

// Manifold-aware absolute error |a - b| (wrapped for cyclic), in [0, pi] or [0, 1].
inline double phi_abs_error(const PhiValue& a, const PhiValue& b) {
  return std::abs(phi_delta(a, b));
}

inline PhiValue sample_phi(Manifold m, std::mt19937& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double t = u(rng);
  if (m == Manifold::Linear) return PhiValue::linear(t);
  double a = t * kTwoPi;
  if (a >= kTwoPi) a = 0.0;
  return PhiValue::cyclic(a);
}

// Decode a projected head output back to a manifold coordinate. Cyclic heads
// are normalized to the unit circle before atan2.
inline PhiValue phi_decode(Manifold m, double a, double b) {
  if (m == Manifold::Linear) {
    double v = a;
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    return PhiValue::linear(v);
  }
  double norm = std::sqrt(a * a + b * b);
  if (norm > 0) {
    a /= norm;
    b /= norm;
  }
  double ang = std::atan2(a, b);  // (sin, cos) order
  return PhiValue::cyclic(wrap_angle(ang));
}

}  // namespace como
