#include "bgrid/field_solver.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>

#include "bgrid/interp.hpp"
#include "bgrid/kernels.hpp"
#include "bgrid/parallel.hpp"

namespace bgrid {

void InpaintConfig::validate() const {
    if (!(tol > 0.0)) throw std::invalid_argument("inpaint tol must be > 0");
    if (max_iter < 1) throw std::invalid_argument("inpaint max_iter must be >= 1");
    if (!(weight_threshold >= 0.0)) {
        throw std::invalid_argument("weight threshold must be >= 0");
    }
    if (!(range_coupling >= 0.0)) {
        throw std::invalid_argument("range coupling must be >= 0");
    }
}

BilateralGrid sparse_displacement_grid(const KeypointSet& kps, const Tensor& guidance,
                                       const GridParams& params) {
    params.validate();
    const std::size_t rank = guidance.rank();
    kps.validate_extent(guidance.shape());

    const std::vector<std::size_t> grid_shape = grid_shape_for(guidance.shape(), params);

    std::vector<std::size_t> full_shape;
    full_shape.push_back(rank + 1);  // displacement channels + weight
    full_shape.insert(full_shape.end(), grid_shape.begin(), grid_shape.end());
    Tensor data(full_shape);
    const std::size_t cells = Tensor::numel(grid_shape);

    std::vector<std::size_t> strides(rank + 1, 1);
    for (std::size_t a = rank + 1; a-- > 1;) strides[a - 1] = strides[a] * grid_shape[a];

    const Kernel kernel = Kernel::Linear;
    for (std::size_t i = 0; i < kps.count(); ++i) {
        const auto pf = kps.fixed_point(i);
        const auto pm = kps.moving_point(i);

        std::array<double, 4> coord{};
        for (std::size_t a = 0; a < rank; ++a) {
            coord[a] = std::clamp(pf[a] / params.spatial_rate, 0.0,
                                  static_cast<double>(grid_shape[a] - 1));
        }
        const double g = std::clamp(multilinear_sample(guidance, pf), 0.0, 1.0);
        coord[rank] = std::clamp(g / params.range_rate, 0.0,
                                 static_cast<double>(grid_shape[rank] - 1));

        // Walk the (<=2)^(rank+1) support cells of the linear kernel.
        std::array<SupportRange, 4> sup{};
        for (std::size_t a = 0; a <= rank; ++a) sup[a] = kernel_support(coord[a], kernel);
        std::array<long, 4> cur{};
        for (std::size_t a = 0; a <= rank; ++a) cur[a] = sup[a].lo;
        while (true) {
            double w = 1.0;
            std::size_t cell = 0;
            bool inside = true;
            for (std::size_t a = 0; a <= rank; ++a) {
                if (cur[a] < 0 || cur[a] >= static_cast<long>(grid_shape[a])) {
                    inside = false;
                    break;
                }
                w *= kernel_weight(coord[a], cur[a], kernel);
                cell += static_cast<std::size_t>(cur[a]) * strides[a];
            }
            if (inside && w != 0.0) {
                for (std::size_t a = 0; a < rank; ++a) {
                    data[a * cells + cell] += w * (pm[a] - pf[a]);
                }
                data[rank * cells + cell] += w;
            }
            std::size_t a = rank + 1;
            bool done = false;
            while (a-- > 0) {
                if (++cur[a] <= sup[a].hi) break;
                cur[a] = sup[a].lo;
                if (a == 0) done = true;
            }
            if (done) break;
        }
    }
    return {std::move(data), true};
}

InpaintResult inpaint_grid(const BilateralGrid& grid, const InpaintConfig& cfg) {
    cfg.validate();
    if (!grid.has_weight) {
        throw std::invalid_argument("inpainting requires a homogeneous weight channel");
    }
    const auto grid_shape = grid.grid_shape();
    const std::size_t axes = grid_shape.size();
    const std::size_t cells = grid.cells();
    const std::size_t channels = grid.data_channels();
    const auto weight = grid.weight();

    InpaintResult res;
    res.constrained.assign(cells, 0);
    std::size_t n_constrained = 0;
    for (std::size_t i = 0; i < cells; ++i) {
        if (weight[i] > cfg.weight_threshold) {
            res.constrained[i] = 1;
            ++n_constrained;
        }
    }
    if (n_constrained == 0) {
        throw NoConstraintsError("no grid cell exceeds the occupancy threshold");
    }

    std::vector<std::size_t> vshape;
    vshape.push_back(channels);
    vshape.insert(vshape.end(), grid_shape.begin(), grid_shape.end());
    res.constraint_values = Tensor(vshape);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto src = grid.channel(c);
        for (std::size_t i = 0; i < cells; ++i) {
            if (res.constrained[i]) res.constraint_values[c * cells + i] = src[i] / weight[i];
        }
    }

    std::vector<std::size_t> strides(axes, 1);
    for (std::size_t a = axes; a-- > 1;) strides[a - 1] = strides[a] * grid_shape[a];

    // Neighbor weights: 1 for spatial axes, range_coupling for the range
    // axis (the last one).
    std::vector<double> axis_weight(axes, 1.0);
    axis_weight[axes - 1] = cfg.range_coupling;

    Tensor cur(vshape);   // free cells start at 0
    Tensor next(vshape);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < cells; ++i) {
            if (res.constrained[i]) cur[c * cells + i] = res.constraint_values[c * cells + i];
        }
    }
    next = cur;

    // One Jacobi sweep; reads `from`, writes `to`, returns max update.
    // When measure_only, `to` is untouched and the return value is the
    // Laplace residual of `from`.
    auto sweep = [&](const Tensor& from, Tensor* to, bool measure_only) {
        std::vector<double> worker_max(thread_count(), 0.0);
        std::atomic<std::size_t> worker_id{0};
        parallel_for(cells, [&](std::size_t i0, std::size_t i1) {
            const std::size_t wid = worker_id.fetch_add(1);
            double local_max = 0.0;
            std::array<std::size_t, 4> idx{};
            {
                std::size_t rem = i0;
                for (std::size_t a = 0; a < axes; ++a) {
                    idx[a] = rem / strides[a];
                    rem %= strides[a];
                }
            }
            for (std::size_t i = i0; i < i1; ++i) {
                if (!res.constrained[i]) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        const double* x = from.data() + c * cells;
                        double num = 0.0, den = 0.0;
                        for (std::size_t a = 0; a < axes; ++a) {
                            const double aw = axis_weight[a];
                            if (aw == 0.0) continue;
                            if (idx[a] > 0) {
                                num += aw * x[i - strides[a]];
                                den += aw;
                            }
                            if (idx[a] + 1 < grid_shape[a]) {
                                num += aw * x[i + strides[a]];
                                den += aw;
                            }
                        }
                        const double value = den > 0.0 ? num / den : x[i];
                        local_max = std::max(local_max, std::abs(value - x[i]));
                        if (!measure_only) (*to)[c * cells + i] = value;
                    }
                } else if (!measure_only) {
                    for (std::size_t c = 0; c < channels; ++c) {
                        (*to)[c * cells + i] = from[c * cells + i];
                    }
                }
                // advance the multi-index
                std::size_t a = axes;
                while (a-- > 0) {
                    if (++idx[a] < grid_shape[a]) break;
                    idx[a] = 0;
                }
            }
            worker_max[wid] = std::max(worker_max[wid], local_max);
        });
        double m = 0.0;
        for (double v : worker_max) m = std::max(m, v);
        return m;
    };

    res.converged = false;
    res.iterations = 0;
    res.final_update = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iter; ++it) {
        const double update = sweep(cur, &next, false);
        std::swap(cur, next);
        res.iterations = it + 1;
        res.final_update = update;
        if (update <= cfg.tol) {
            res.converged = true;
            break;
        }
    }

    std::vector<double> out(channels * cells + cells);
    std::copy_n(cur.data(), channels * cells, out.begin());
    std::copy(weight.begin(), weight.end(), out.begin() + channels * cells);
    std::vector<std::size_t> out_shape = vshape;
    out_shape[0] = channels + 1;
    res.grid = {Tensor(out_shape, std::move(out)), true};
    return res;
}

InpaintReport field_residual_report(const InpaintResult& result, const InpaintConfig& cfg) {
    const auto grid_shape = result.grid.grid_shape();
    const std::size_t axes = grid_shape.size();
    const std::size_t cells = result.grid.cells();
    const std::size_t channels = result.grid.data_channels();

    std::vector<std::size_t> strides(axes, 1);
    for (std::size_t a = axes; a-- > 1;) strides[a - 1] = strides[a] * grid_shape[a];
    std::vector<double> axis_weight(axes, 1.0);
    axis_weight[axes - 1] = cfg.range_coupling;

    InpaintReport rep;
    rep.iterations = result.iterations;
    rep.converged = result.converged;

    std::array<std::size_t, 4> idx{};
    for (std::size_t i = 0; i < cells; ++i) {
        for (std::size_t c = 0; c < channels; ++c) {
            const double* x = result.grid.data.data() + c * cells;
            if (result.constrained[i]) {
                rep.max_constraint_violation =
                    std::max(rep.max_constraint_violation,
                             std::abs(x[i] - result.constraint_values[c * cells + i]));
            } else {
                double num = 0.0, den = 0.0;
                for (std::size_t a = 0; a < axes; ++a) {
                    const double aw = axis_weight[a];
                    if (aw == 0.0) continue;
                    if (idx[a] > 0) {
                        num += aw * x[i - strides[a]];
                        den += aw;
                    }
                    if (idx[a] + 1 < grid_shape[a]) {
                        num += aw * x[i + strides[a]];
                        den += aw;
                    }
                }
                if (den > 0.0) {
                    rep.max_residual = std::max(rep.max_residual, std::abs(num / den - x[i]));
                }
            }
        }
        std::size_t a = axes;
        while (a-- > 0) {
            if (++idx[a] < grid_shape[a]) break;
            idx[a] = 0;
        }
    }

    rep.channel_ranges.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        const auto ch = result.grid.channel(c);
        const auto [mn, mx] = std::minmax_element(ch.begin(), ch.end());
        rep.channel_ranges[c] = {*mn, *mx};
    }
    return rep;
}

KeypointFieldResult keypoint_field(const KeypointSet& kps, const Image& fixed_image,
                                   const GridParams& params, const InpaintConfig& cfg) {
    const Tensor guidance = make_guidance(
        fixed_image,
        fixed_image.channels() == 3 ? GuidanceMode::Luminance : GuidanceMode::Intensity);

    KeypointFieldResult out;
    BilateralGrid sparse = sparse_displacement_grid(kps, guidance, params);
    out.grid_shape = sparse.grid_shape();
    out.inpaint = inpaint_grid(sparse, cfg);

    const auto spatial = fixed_image.spatial_shape();
    const SamplingGrid sampling = build_sampling_grid(spatial, params, guidance);
    const Tensor dense =
        slice({out.inpaint.grid.data_only(), false}, sampling, params.slice_kernel);

    out.field = DisplacementField(dense, fixed_image.spacing);
    return out;
}

}  // namespace bgrid
