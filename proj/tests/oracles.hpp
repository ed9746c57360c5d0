// Test-only reference implementations. Everything here evaluates the
// definitions directly (full sums, dense linear solves, finite
// differences) and stays independent of the library's optimized paths.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <vector>

#include "bgrid/grid.hpp"
#include "bgrid/kernels.hpp"
#include "bgrid/tensor.hpp"

namespace oracle {

// Deterministic uniforms built from raw mt19937_64 draws so frozen
// expected values cannot drift with library distribution changes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : rng_(seed) {}
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t integer(std::uint64_t n) { return rng_() % n; }

private:
    std::mt19937_64 rng_;
};

// Eq.-style splat: for every cell, sum over every pixel. O(cells * pixels).
inline bgrid::Tensor direct_splat(const bgrid::Tensor& input, const bgrid::SamplingGrid& grid,
                                  bgrid::Kernel kernel) {
    const std::size_t channels = input.extent(0);
    const std::size_t pixels = grid.pixels();
    const std::size_t axes = grid.axes();

    std::vector<std::size_t> shape;
    shape.push_back(channels);
    shape.insert(shape.end(), grid.grid_shape.begin(), grid.grid_shape.end());
    bgrid::Tensor out(shape);
    const std::size_t cells = out.size() / channels;

    std::vector<std::size_t> strides(axes, 1);
    for (std::size_t a = axes; a-- > 1;) strides[a - 1] = strides[a] * grid.grid_shape[a];

    for (std::size_t cell = 0; cell < cells; ++cell) {
        std::vector<long> idx(axes);
        std::size_t rem = cell;
        for (std::size_t a = 0; a < axes; ++a) {
            idx[a] = static_cast<long>(rem / strides[a]);
            rem %= strides[a];
        }
        for (std::size_t p = 0; p < pixels; ++p) {
            double w = 1.0;
            for (std::size_t a = 0; a < axes; ++a) {
                w *= bgrid::kernel_weight(grid.coords[a][p], idx[a], kernel);
            }
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < channels; ++c) {
                out[c * cells + cell] += w * input[c * pixels + p];
            }
        }
    }
    return out;
}

// Eq.-style slice: for every pixel, sum over every cell. O(cells * pixels).
inline bgrid::Tensor direct_slice(const bgrid::BilateralGrid& grid,
                                  const bgrid::SamplingGrid& sampling, bgrid::Kernel kernel) {
    const std::size_t channels = grid.channels();
    const std::size_t cells = grid.cells();
    const std::size_t pixels = sampling.pixels();
    const std::size_t axes = sampling.axes();

    std::vector<std::size_t> shape;
    shape.push_back(channels);
    const auto& pshape = sampling.pixel_shape();
    shape.insert(shape.end(), pshape.begin(), pshape.end());
    bgrid::Tensor out(shape);

    std::vector<std::size_t> strides(axes, 1);
    for (std::size_t a = axes; a-- > 1;) strides[a - 1] = strides[a] * sampling.grid_shape[a];

    for (std::size_t p = 0; p < pixels; ++p) {
        for (std::size_t cell = 0; cell < cells; ++cell) {
            std::size_t rem = cell;
            double w = 1.0;
            for (std::size_t a = 0; a < axes; ++a) {
                const long idx = static_cast<long>(rem / strides[a]);
                rem %= strides[a];
                w *= bgrid::kernel_weight(sampling.coords[a][p], idx, kernel);
            }
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < channels; ++c) {
                out[c * pixels + p] += w * grid.data[c * cells + cell];
            }
        }
    }
    return out;
}

// Dense solve of the constrained Laplace system the inpainter relaxes:
// free cells satisfy sum_axes w_a * (x_nbr - x_c) = 0 with constrained
// neighbors moved to the right-hand side.
inline bgrid::Tensor dense_inpaint(const bgrid::Tensor& constraint_values,
                                   const std::vector<std::uint8_t>& constrained,
                                   std::span<const std::size_t> grid_shape,
                                   double range_coupling) {
    const std::size_t axes = grid_shape.size();
    const std::size_t channels = constraint_values.extent(0);
    std::size_t cells = 1;
    for (std::size_t e : grid_shape) cells *= e;

    std::vector<std::size_t> strides(axes, 1);
    for (std::size_t a = axes; a-- > 1;) strides[a - 1] = strides[a] * grid_shape[a];
    std::vector<double> axis_weight(axes, 1.0);
    axis_weight[axes - 1] = range_coupling;

    std::vector<long> unknown_of_cell(cells, -1);
    std::vector<std::size_t> cell_of_unknown;
    for (std::size_t i = 0; i < cells; ++i) {
        if (!constrained[i]) {
            unknown_of_cell[i] = static_cast<long>(cell_of_unknown.size());
            cell_of_unknown.push_back(i);
        }
    }
    const std::size_t n = cell_of_unknown.size();

    bgrid::Tensor out = constraint_values;
    if (n == 0) return out;

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n, channels);

    for (std::size_t row = 0; row < n; ++row) {
        const std::size_t i = cell_of_unknown[row];
        std::vector<std::size_t> idx(axes);
        std::size_t rem = i;
        for (std::size_t a = 0; a < axes; ++a) {
            idx[a] = rem / strides[a];
            rem %= strides[a];
        }
        double degree = 0.0;
        for (std::size_t a = 0; a < axes; ++a) {
            const double aw = axis_weight[a];
            if (aw == 0.0) continue;
            for (int dir = -1; dir <= 1; dir += 2) {
                if (dir < 0 && idx[a] == 0) continue;
                if (dir > 0 && idx[a] + 1 >= grid_shape[a]) continue;
                const std::size_t j = dir < 0 ? i - strides[a] : i + strides[a];
                degree += aw;
                if (constrained[j]) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        b(row, c) += aw * constraint_values[c * cells + j];
                    }
                } else {
                    A(row, unknown_of_cell[j]) -= aw;
                }
            }
        }
        A(row, row) += degree;
    }

    const Eigen::MatrixXd x = A.partialPivLu().solve(b);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t c = 0; c < channels; ++c) {
            out[c * cells + cell_of_unknown[row]] = x(row, c);
        }
    }
    return out;
}

// Random coordinates kept away from kernel kinks (and from the clamping
// bounds) so finite differences stay on one polynomial piece.
inline bgrid::SamplingGrid random_sampling_grid(Rng& rng,
                                                std::vector<std::size_t> pixel_shape,
                                                std::vector<std::size_t> grid_shape,
                                                double kink_margin = 1e-2) {
    bgrid::SamplingGrid grid;
    grid.grid_shape = grid_shape;
    const std::size_t pixels = bgrid::Tensor::numel(pixel_shape);
    for (std::size_t a = 0; a < grid_shape.size(); ++a) {
        bgrid::Tensor coord(pixel_shape);
        const double hi = static_cast<double>(grid_shape[a] - 1);
        for (std::size_t p = 0; p < pixels; ++p) {
            double v;
            do {
                v = rng.uniform() * hi;
                const double f = v - std::floor(v);
                const bool near_kink = f < kink_margin || f > 1.0 - kink_margin ||
                                       std::abs(f - 0.5) < kink_margin;
                if (!near_kink && v > kink_margin && v < hi - kink_margin) break;
            } while (true);
            coord[p] = v;
        }
        grid.coords.push_back(std::move(coord));
    }
    return grid;
}

inline bgrid::Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0,
                                   double hi = 1.0) {
    bgrid::Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline double dot(const bgrid::Tensor& a, const bgrid::Tensor& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double max_abs_diff(const bgrid::Tensor& a, const bgrid::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rel_rms(const bgrid::Tensor& a, const bgrid::Tensor& ref) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - ref[i];
        num += d * d;
        den += ref[i] * ref[i];
    }
    return std::sqrt(num / den);
}

}  // namespace oracle
