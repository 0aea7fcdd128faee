#pragma once

#include <cmath>

namespace unsat {

/// Hyper-dual number a + b e1 + c e2 + d e1e2 with e1^2 = e2^2 = 0.
///
/// Seeding e1 and e2 along the same coordinate yields the value, first and
/// second derivative of a smooth expression exactly (no truncation error).
struct HyperDual {
  double v{0.0};
  double d1{0.0};
  double d2{0.0};
  double d12{0.0};

  constexpr HyperDual() = default;
  constexpr HyperDual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)
  constexpr HyperDual(double value, double e1, double e2, double e12)
      : v(value), d1(e1), d2(e2), d12(e12) {}

  static constexpr HyperDual variable(double value) { return {value, 1.0, 1.0, 0.0}; }

  HyperDual& operator+=(const HyperDual& o) { return *this = *this + o; }
  HyperDual& operator-=(const HyperDual& o) { return *this = *this - o; }
  HyperDual& operator*=(const HyperDual& o) { return *this = *this * o; }

  friend constexpr HyperDual operator+(const HyperDual& a, const HyperDual& b) {
    return {a.v + b.v, a.d1 + b.d1, a.d2 + b.d2, a.d12 + b.d12};
  }
  friend constexpr HyperDual operator-(const HyperDual& a, const HyperDual& b) {
    return {a.v - b.v, a.d1 - b.d1, a.d2 - b.d2, a.d12 - b.d12};
  }
  friend constexpr HyperDual operator-(const HyperDual& a) { return {-a.v, -a.d1, -a.d2, -a.d12}; }
  friend constexpr HyperDual operator*(const HyperDual& a, const HyperDual& b) {
    return {a.v * b.v, a.v * b.d1 + a.d1 * b.v, a.v * b.d2 + a.d2 * b.v,
            a.v * b.d12 + a.d1 * b.d2 + a.d2 * b.d1 + a.d12 * b.v};
  }
  friend HyperDual operator/(const HyperDual& a, const HyperDual& b) {
    return a * reciprocal(b);
  }

  friend bool operator<(const HyperDual& a, const HyperDual& b) { return a.v < b.v; }
  friend bool operator>(const HyperDual& a, const HyperDual& b) { return a.v > b.v; }
  friend bool operator<=(const HyperDual& a, const HyperDual& b) { return a.v <= b.v; }
  friend bool operator>=(const HyperDual& a, const HyperDual& b) { return a.v >= b.v; }

  /// Applies a scalar function given its value, first and second derivative at v.
  [[nodiscard]] constexpr HyperDual chain(double f, double df, double ddf) const {
    return {f, df * d1, df * d2, df * d12 + ddf * d1 * d2};
  }

  friend HyperDual reciprocal(const HyperDual& a) {
    const double inv = 1.0 / a.v;
    return a.chain(inv, -inv * inv, 2.0 * inv * inv * inv);
  }
};

inline HyperDual sin(const HyperDual& a) {
  return a.chain(std::sin(a.v), std::cos(a.v), -std::sin(a.v));
}
inline HyperDual cos(const HyperDual& a) {
  return a.chain(std::cos(a.v), -std::sin(a.v), -std::cos(a.v));
}

inline double value_of(double x) { return x; }
inline double value_of(const HyperDual& x) { return x.v; }

}  // namespace unsat
