#include "bgrid/grid.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "bgrid/parallel.hpp"

namespace bgrid {

namespace {

constexpr std::size_t kMaxAxes = 4;  // up to 3 spatial axes + range

struct AxisSupport {
    int n = 0;
    long idx[2];
    double w[2];
    double dw[2];
};

// Kernel support of one coordinate, intersected with [0, extent-1] and
// with zero-weight entries kept (their derivative can still be nonzero
// only inside the open support, which kernel_support already covers).
inline void axis_support(double p, std::size_t extent, Kernel k, AxisSupport& out) {
    const SupportRange r = kernel_support(p, k);
    out.n = 0;
    for (long q = r.lo; q <= r.hi; ++q) {
        if (q < 0 || q >= static_cast<long>(extent)) continue;
        out.idx[out.n] = q;
        out.w[out.n] = kernel_weight(p, q, k);
        out.dw[out.n] = kernel_derivative(p, q, k);
        ++out.n;
    }
}

struct GridGeometry {
    std::size_t axes;
    std::size_t cells;
    std::array<std::size_t, kMaxAxes> extent;
    std::array<std::size_t, kMaxAxes> stride;  // row-major over grid axes
};

GridGeometry make_geometry(const SamplingGrid& grid) {
    const std::size_t axes = grid.axes();
    if (axes < 2 || axes > kMaxAxes) {
        throw std::invalid_argument("sampling grid must have 1-3 spatial axes plus range");
    }
    if (grid.grid_shape.size() != axes) {
        throw std::invalid_argument("sampling grid shape rank mismatch");
    }
    GridGeometry g{};
    g.axes = axes;
    g.cells = 1;
    for (std::size_t a = 0; a < axes; ++a) g.extent[a] = grid.grid_shape[a];
    g.stride[axes - 1] = 1;
    for (std::size_t a = axes - 1; a-- > 0;) g.stride[a] = g.stride[a + 1] * g.extent[a + 1];
    for (std::size_t a = 0; a < axes; ++a) g.cells *= g.extent[a];
    for (std::size_t a = 1; a < axes; ++a) {
        if (!grid.coords[a].same_shape(grid.coords[0])) {
            throw std::invalid_argument("sampling grid coordinate shapes differ");
        }
    }
    return g;
}

void check_input_shape(const Tensor& input, const SamplingGrid& grid) {
    if (input.rank() != grid.spatial_rank() + 1) {
        throw std::invalid_argument("input must be channels x spatial, rank D+1");
    }
    const auto& pixel_shape = grid.pixel_shape();
    for (std::size_t a = 0; a < pixel_shape.size(); ++a) {
        if (input.extent(a + 1) != pixel_shape[a]) {
            throw std::invalid_argument("input spatial shape does not match sampling grid");
        }
    }
}

// Iterates the (<=2)^axes support combinations of one pixel, invoking
// fn(flat_cell_index, pointer to per-axis entry selection).
template <typename Fn>
inline void for_each_combo(const GridGeometry& g, const AxisSupport* sup, Fn&& fn) {
    std::array<int, kMaxAxes> pick{};
    for (std::size_t a = 0; a < g.axes; ++a) {
        if (sup[a].n == 0) return;  // coordinate fell outside the grid
    }
    while (true) {
        std::size_t cell = 0;
        for (std::size_t a = 0; a < g.axes; ++a) {
            cell += static_cast<std::size_t>(sup[a].idx[pick[a]]) * g.stride[a];
        }
        fn(cell, pick.data());
        std::size_t a = g.axes;
        while (a-- > 0) {
            if (++pick[a] < sup[a].n) break;
            pick[a] = 0;
            if (a == 0) return;
        }
    }
}

inline void pixel_supports(const SamplingGrid& grid, const GridGeometry& g,
                           std::size_t pixel, Kernel kernel, AxisSupport* sup) {
    for (std::size_t a = 0; a < g.axes; ++a) {
        axis_support(grid.coords[a][pixel], g.extent[a], kernel, sup[a]);
    }
}

Tensor splat_channels(const Tensor& input, bool append_ones, const SamplingGrid& grid,
                      Kernel kernel) {
    check_input_shape(input, grid);
    const GridGeometry g = make_geometry(grid);
    const std::size_t in_channels = input.extent(0);
    const std::size_t out_channels = in_channels + (append_ones ? 1 : 0);
    const std::size_t pixels = grid.pixels();

    std::vector<std::size_t> out_shape;
    out_shape.push_back(out_channels);
    out_shape.insert(out_shape.end(), grid.grid_shape.begin(), grid.grid_shape.end());
    Tensor out(out_shape);

    // Scatter is serial within a channel so accumulation order is fixed;
    // only whole channels run concurrently.
    parallel_for(out_channels, [&](std::size_t c0, std::size_t c1) {
        std::array<AxisSupport, kMaxAxes> sup;
        for (std::size_t c = c0; c < c1; ++c) {
            double* cell_data = out.data() + c * g.cells;
            const double* pix = c < in_channels ? input.data() + c * pixels : nullptr;
            for (std::size_t p = 0; p < pixels; ++p) {
                pixel_supports(grid, g, p, kernel, sup.data());
                const double value = pix ? pix[p] : 1.0;
                for_each_combo(g, sup.data(), [&](std::size_t cell, const int* pick) {
                    double w = value;
                    for (std::size_t a = 0; a < g.axes; ++a) w *= sup[a].w[pick[a]];
                    cell_data[cell] += w;
                });
            }
        }
    });
    return out;
}

}  // namespace

Tensor BilateralGrid::data_only() const {
    if (!has_weight) return data;
    auto shape = data.shape();
    shape[0] = data_channels();
    const std::size_t n = Tensor::numel(shape);
    std::vector<double> vals(data.values().begin(), data.values().begin() + n);
    return Tensor(shape, std::move(vals));
}

BilateralGrid splat(const Tensor& input, const SamplingGrid& grid, Kernel kernel) {
    return {splat_channels(input, false, grid, kernel), false};
}

BilateralGrid splat_homogeneous(const Tensor& input, const SamplingGrid& grid, Kernel kernel) {
    return {splat_channels(input, true, grid, kernel), true};
}

Tensor slice(const BilateralGrid& grid, const SamplingGrid& sampling, Kernel kernel) {
    const GridGeometry g = make_geometry(sampling);
    if (grid.grid_shape() != sampling.grid_shape) {
        throw std::invalid_argument("grid shape does not match sampling grid bounds");
    }
    const std::size_t channels = grid.channels();
    const std::size_t cells = grid.cells();
    const std::size_t pixels = sampling.pixels();

    std::vector<std::size_t> out_shape;
    out_shape.push_back(channels);
    const auto& pixel_shape = sampling.pixel_shape();
    out_shape.insert(out_shape.end(), pixel_shape.begin(), pixel_shape.end());
    Tensor out(out_shape);

    const double* grid_data = grid.data.data();
    parallel_for(pixels, [&](std::size_t p0, std::size_t p1) {
        std::array<AxisSupport, kMaxAxes> sup;
        for (std::size_t p = p0; p < p1; ++p) {
            pixel_supports(sampling, g, p, kernel, sup.data());
            for (std::size_t c = 0; c < channels; ++c) {
                const double* cell_data = grid_data + c * cells;
                double acc = 0.0;
                for_each_combo(g, sup.data(), [&](std::size_t cell, const int* pick) {
                    double w = cell_data[cell];
                    for (std::size_t a = 0; a < g.axes; ++a) w *= sup[a].w[pick[a]];
                    acc += w;
                });
                out[c * pixels + p] = acc;
            }
        }
    });
    return out;
}

Tensor normalize_by_weight(const Tensor& data, const Tensor& weight, double epsilon) {
    if (data.size() % weight.size() != 0) {
        throw std::invalid_argument("weight shape does not divide data shape");
    }
    Tensor out(data.shape());
    const std::size_t n = weight.size();
    const std::size_t channels = data.size() / n;
    for (std::size_t c = 0; c < channels; ++c) {
        const double* src = data.data() + c * n;
        double* dst = out.data() + c * n;
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = weight[i] > epsilon ? src[i] / weight[i] : 0.0;
        }
    }
    return out;
}

namespace {

// Shared coordinate-gradient kernel: for each pixel and axis,
//   dG[a][p] = sum_c pixel_factor[c,p] * sum_combo grid_factor[c,cell]
//              * K'(p_a, i_a) * prod_{b != a} K(p_b, i_b).
// splat_backward uses (pixel_factor = input, grid_factor = cotangent);
// slice_backward swaps the roles.
std::vector<Tensor> coordinate_grads(const Tensor& pixel_factor, const Tensor& grid_factor,
                                     const SamplingGrid& grid, Kernel kernel) {
    const GridGeometry g = make_geometry(grid);
    const std::size_t channels = pixel_factor.extent(0);
    const std::size_t pixels = grid.pixels();
    const std::size_t cells = grid_factor.size() / channels;

    std::vector<Tensor> grads;
    grads.reserve(g.axes);
    for (std::size_t a = 0; a < g.axes; ++a) grads.emplace_back(grid.pixel_shape());
    if (kernel == Kernel::Nearest) return grads;  // flat kernel: no coordinate gradient

    parallel_for(pixels, [&](std::size_t p0, std::size_t p1) {
        std::array<AxisSupport, kMaxAxes> sup;
        for (std::size_t p = p0; p < p1; ++p) {
            pixel_supports(grid, g, p, kernel, sup.data());
            std::array<double, kMaxAxes> axis_acc{};
            for (std::size_t c = 0; c < channels; ++c) {
                const double* cell_data = grid_factor.data() + c * cells;
                const double value = pixel_factor[c * pixels + p];
                for_each_combo(g, sup.data(), [&](std::size_t cell, const int* pick) {
                    const double gv = cell_data[cell] * value;
                    if (gv == 0.0) return;
                    double w[kMaxAxes];
                    for (std::size_t a = 0; a < g.axes; ++a) w[a] = sup[a].w[pick[a]];
                    for (std::size_t a = 0; a < g.axes; ++a) {
                        double term = gv * sup[a].dw[pick[a]];
                        if (term == 0.0) continue;
                        for (std::size_t b = 0; b < g.axes; ++b) {
                            if (b != a) term *= w[b];
                        }
                        axis_acc[a] += term;
                    }
                });
            }
            for (std::size_t a = 0; a < g.axes; ++a) grads[a][p] = axis_acc[a];
        }
    });
    return grads;
}

}  // namespace

SplatBackward splat_backward(const Tensor& grid_cotangent, const Tensor& input,
                             const SamplingGrid& grid, Kernel kernel) {
    check_input_shape(input, grid);
    if (grid_cotangent.rank() != grid.grid_shape.size() + 1) {
        throw std::invalid_argument("grid cotangent rank mismatch");
    }
    if (grid_cotangent.extent(0) != input.extent(0)) {
        throw std::invalid_argument("grid cotangent channel count mismatch");
    }
    for (std::size_t a = 0; a < grid.grid_shape.size(); ++a) {
        if (grid_cotangent.extent(a + 1) != grid.grid_shape[a]) {
            throw std::invalid_argument("grid cotangent shape mismatch");
        }
    }
    SplatBackward out;
    out.input_grad = slice({grid_cotangent, false}, grid, kernel);
    out.coord_grads = coordinate_grads(input, grid_cotangent, grid, kernel);
    return out;
}

SliceBackward slice_backward(const Tensor& output_cotangent, const BilateralGrid& grid,
                             const SamplingGrid& sampling, Kernel kernel) {
    if (output_cotangent.extent(0) != grid.channels()) {
        throw std::invalid_argument("output cotangent channel count mismatch");
    }
    SliceBackward out;
    out.grid_grad = splat(output_cotangent, sampling, kernel).data;
    out.coord_grads = coordinate_grads(output_cotangent, grid.data, sampling, kernel);
    return out;
}

}  // namespace bgrid
