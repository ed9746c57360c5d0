#pragma once

#include <cmath>
#include <cstdint>

namespace bgrid {

// Sampling kernels shared by splatting and slicing.
enum class Kernel : std::uint8_t { Nearest, Linear };

// Inclusive integer index range [lo, hi] where a kernel can be nonzero.
struct SupportRange {
    long lo;
    long hi;
    long width() const { return hi - lo + 1; }
};

// K(p, q). Linear: max(0, 1-|p-q|). Nearest: 1 iff q is the rounded
// coordinate, halves rounding up (floor(p + 0.5)).
inline double kernel_weight(double p, long q, Kernel k) {
    if (k == Kernel::Nearest) {
        return static_cast<long>(std::floor(p + 0.5)) == q ? 1.0 : 0.0;
    }
    const double d = std::abs(p - static_cast<double>(q));
    return d < 1.0 ? 1.0 - d : 0.0;
}

// dK/dp. The linear kernel uses subgradient 0 at its kinks (|p-q| in
// {0, 1}); the nearest kernel is flat almost everywhere so its
// derivative is taken as 0.
inline double kernel_derivative(double p, long q, Kernel k) {
    if (k == Kernel::Nearest) return 0.0;
    const double d = p - static_cast<double>(q);
    const double a = std::abs(d);
    if (a <= 0.0 || a >= 1.0) return 0.0;
    return d > 0.0 ? -1.0 : 1.0;
}

// Minimal contiguous index range covering all nonzero weights. For the
// linear kernel an exactly integer p has weight only at p itself.
inline SupportRange kernel_support(double p, Kernel k) {
    if (k == Kernel::Nearest) {
        const long q = static_cast<long>(std::floor(p + 0.5));
        return {q, q};
    }
    const double f = std::floor(p);
    const long lo = static_cast<long>(f);
    if (p == f) return {lo, lo};
    return {lo, lo + 1};
}

}  // namespace bgrid
