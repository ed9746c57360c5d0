#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "bgrid/tensor.hpp"

namespace bgrid {

// Multilinear sampling of a spatial block at a continuous position,
// coordinates clamped to [0, extent-1] per axis. `base` points at the
// start of the block (one channel), `shape`/`strides` describe it.
inline double multilinear_sample(const double* base, std::span<const std::size_t> shape,
                                 std::span<const std::size_t> strides,
                                 std::span<const double> pos) {
    const std::size_t rank = shape.size();
    std::size_t i0[3];
    double frac[3];
    for (std::size_t a = 0; a < rank; ++a) {
        const double hi = static_cast<double>(shape[a] - 1);
        const double p = std::clamp(pos[a], 0.0, hi);
        double f = std::floor(p);
        if (f > hi - 1.0) f = std::max(0.0, hi - 1.0);  // keep the upper corner in range
        i0[a] = static_cast<std::size_t>(f);
        frac[a] = shape[a] > 1 ? p - f : 0.0;
    }
    double acc = 0.0;
    const std::size_t corners = std::size_t{1} << rank;
    for (std::size_t mask = 0; mask < corners; ++mask) {
        double w = 1.0;
        std::size_t off = 0;
        for (std::size_t a = 0; a < rank; ++a) {
            const bool upper = (mask >> a) & 1u;
            w *= upper ? frac[a] : 1.0 - frac[a];
            off += (i0[a] + (upper ? 1 : 0)) * strides[a];
        }
        if (w != 0.0) acc += w * base[off];
    }
    return acc;
}

inline double multilinear_sample(const Tensor& t, std::span<const double> pos) {
    const auto strides = t.strides();
    return multilinear_sample(t.data(), t.shape(), strides, pos);
}

}  // namespace bgrid
