// Scalar dual number for forward-mode differentiation in one seeded
// direction. Arithmetic carries the derivative through the chain rule;
// eps^2 = 0.
#pragma once

#include <cmath>

namespace pmp {

struct Dual {
    double val = 0.0;
    double der = 0.0;

    constexpr Dual() = default;
    constexpr Dual(double v) : val(v), der(0.0) {}
    constexpr Dual(double v, double d) : val(v), der(d) {}
};

constexpr Dual operator+(Dual a, Dual b) { return {a.val + b.val, a.der + b.der}; }
constexpr Dual operator-(Dual a, Dual b) { return {a.val - b.val, a.der - b.der}; }
constexpr Dual operator-(Dual a) { return {-a.val, -a.der}; }
constexpr Dual operator*(Dual a, Dual b)
{
    return {a.val * b.val, a.der * b.val + a.val * b.der};
}
constexpr Dual operator/(Dual a, Dual b)
{
    return {a.val / b.val, (a.der * b.val - a.val * b.der) / (b.val * b.val)};
}

inline Dual exp(Dual a)
{
    const double e = std::exp(a.val);
    return {e, e * a.der};
}
inline Dual log(Dual a) { return {std::log(a.val), a.der / a.val}; }
inline Dual sin(Dual a) { return {std::sin(a.val), std::cos(a.val) * a.der}; }
inline Dual cos(Dual a) { return {std::cos(a.val), -std::sin(a.val) * a.der}; }
inline Dual sqrt(Dual a)
{
    const double s = std::sqrt(a.val);
    return {s, a.der / (2.0 * s)};
}
inline Dual tanh(Dual a)
{
    const double t = std::tanh(a.val);
    return {t, (1.0 - t * t) * a.der};
}
inline Dual abs(Dual a)
{
    // subgradient convention at 0: derivative taken from the right
    return a.val >= 0.0 ? a : -a;
}
// Ties resolve to the first argument (documented subgradient convention).
inline Dual min(Dual a, Dual b) { return b.val < a.val ? b : a; }
inline Dual max(Dual a, Dual b) { return b.val > a.val ? b : a; }

inline Dual pow(Dual a, Dual b)
{
    if (b.der == 0.0) {
        // constant exponent: d/dx a^c = c a^(c-1) a'
        const double v = std::pow(a.val, b.val);
        const double d = a.der == 0.0
                             ? 0.0
                             : b.val * std::pow(a.val, b.val - 1.0) * a.der;
        return {v, d};
    }
    // general case via exp(b ln a), requires a > 0
    const double v = std::pow(a.val, b.val);
    return {v, v * (b.der * std::log(a.val) + b.val * a.der / a.val)};
}

} // namespace pmp
