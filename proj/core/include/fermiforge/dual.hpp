#pragma once

// Minimal forward-mode dual number for derivative checks. The trainer keeps
// its own hand-rolled gradient propagation; this type is for tests and small
// analysis utilities.

#include <cmath>

namespace fermiforge {

struct Dual {
    double v = 0.0;  // value
    double d = 0.0;  // tangent

    constexpr Dual() = default;
    constexpr Dual(double value, double tangent = 0.0) : v(value), d(tangent) {}
};

constexpr Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
constexpr Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
constexpr Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
constexpr Dual operator*(double s, Dual a) { return {s * a.v, s * a.d}; }
constexpr Dual operator-(Dual a) { return {-a.v, -a.d}; }

inline Dual exp(Dual a) {
    const double e = std::exp(a.v);
    return {e, e * a.d};
}

}  // namespace fermiforge
