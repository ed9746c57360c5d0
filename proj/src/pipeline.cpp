#include "bgrid/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "bgrid/parallel.hpp"

namespace bgrid {

namespace {

std::size_t cells_for_extent(std::size_t extent, double rate) {
    return static_cast<std::size_t>(std::ceil(static_cast<double>(extent) / rate - 1e-12));
}

std::vector<double> gaussian_taps(double sigma) {
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> taps(2 * radius + 1);
    double sum = 0.0;
    for (long t = -radius; t <= radius; ++t) {
        const double w = std::exp(-0.5 * (t * t) / (sigma * sigma));
        taps[t + radius] = w;
        sum += w;
    }
    for (double& w : taps) w /= sum;
    return taps;
}

// 1D zero-padded convolution along one axis of a [outer, extent, inner]
// view; every output line is independent. The tap loop is outermost so
// the innermost loop streams contiguous memory.
void blur_axis(const double* in, double* out, std::size_t outer, std::size_t extent,
               std::size_t inner, const std::vector<double>& taps) {
    const long radius = static_cast<long>(taps.size() / 2);
    parallel_for(outer, [&](std::size_t o0, std::size_t o1) {
        for (std::size_t o = o0; o < o1; ++o) {
            const double* block_in = in + o * extent * inner;
            double* block_out = out + o * extent * inner;
            for (std::size_t e = 0; e < extent; ++e) {
                double* line_out = block_out + e * inner;
                std::fill_n(line_out, inner, 0.0);
                const long lo = std::max<long>(0, static_cast<long>(e) - radius);
                const long hi = std::min<long>(extent - 1, static_cast<long>(e) + radius);
                for (long s = lo; s <= hi; ++s) {
                    const double w = taps[s - static_cast<long>(e) + radius];
                    const double* line_in = block_in + static_cast<std::size_t>(s) * inner;
                    for (std::size_t i = 0; i < inner; ++i) {
                        line_out[i] += w * line_in[i];
                    }
                }
            }
        }
    });
}

}  // namespace

void GridParams::validate() const {
    if (!(spatial_rate > 0.0)) throw std::invalid_argument("spatial rate must be > 0");
    if (!(range_rate > 0.0 && range_rate <= 1.0)) {
        throw std::invalid_argument("range rate must be in (0, 1]");
    }
    if (!(blur_sigma >= 0.0)) throw std::invalid_argument("blur sigma must be >= 0");
    if (range_extent && *range_extent == 0) {
        throw std::invalid_argument("range extent override must be >= 1");
    }
}

std::size_t GridParams::resolved_range_extent() const {
    if (range_extent) return *range_extent;
    return static_cast<std::size_t>(std::lround(1.0 / range_rate));
}

Tensor make_guidance(const Image& image, GuidanceMode mode) {
    const std::size_t voxels = image.voxels();
    Tensor g(image.spatial_shape());

    if (mode == GuidanceMode::Luminance) {
        if (image.channels() != 3) {
            throw std::invalid_argument("luminance guidance requires a 3-channel image");
        }
        const double* r = image.tensor.data();
        const double* gn = r + voxels;
        const double* b = gn + voxels;
        for (std::size_t i = 0; i < voxels; ++i) {
            g[i] = 0.299 * r[i] + 0.587 * gn[i] + 0.114 * b[i];
        }
    } else {
        if (image.channels() != 1) {
            throw std::invalid_argument("intensity/external guidance requires a 1-channel image");
        }
        std::copy_n(image.tensor.data(), voxels, g.data());
    }

    if (mode == GuidanceMode::External) {
        for (std::size_t i = 0; i < voxels; ++i) {
            if (!(g[i] >= 0.0 && g[i] <= 1.0)) {
                throw std::invalid_argument("external guidance values must lie in [0, 1]");
            }
        }
        return g;
    }

    const auto [mn, mx] = std::minmax_element(g.values().begin(), g.values().end());
    const double lo = *mn, hi = *mx;
    if (!(hi > lo)) {
        throw DegenerateGuidanceError("guidance image has zero dynamic range");
    }
    const double scale = 1.0 / (hi - lo);
    for (std::size_t i = 0; i < voxels; ++i) g[i] = (g[i] - lo) * scale;
    return g;
}

std::vector<std::size_t> grid_shape_for(std::span<const std::size_t> spatial_shape,
                                        const GridParams& params) {
    params.validate();
    std::vector<std::size_t> shape(spatial_shape.size() + 1);
    for (std::size_t a = 0; a < spatial_shape.size(); ++a) {
        shape[a] = cells_for_extent(spatial_shape[a], params.spatial_rate);
    }
    shape.back() = params.resolved_range_extent();
    return shape;
}

SamplingGrid build_sampling_grid(std::span<const std::size_t> spatial_shape,
                                 const GridParams& params, const Tensor& guidance) {
    params.validate();
    const std::size_t rank = spatial_shape.size();
    if (rank < 1 || rank > 3) throw std::invalid_argument("spatial rank must be 1, 2, or 3");
    if (guidance.rank() != rank) {
        throw std::invalid_argument("guidance rank does not match spatial shape");
    }
    for (std::size_t a = 0; a < rank; ++a) {
        if (guidance.extent(a) != spatial_shape[a]) {
            throw std::invalid_argument("guidance shape does not match spatial shape");
        }
    }

    SamplingGrid grid;
    grid.grid_shape = grid_shape_for(spatial_shape, params);

    const std::size_t pixels = Tensor::numel(spatial_shape);
    std::vector<std::size_t> shape(spatial_shape.begin(), spatial_shape.end());
    grid.coords.reserve(rank + 1);
    for (std::size_t a = 0; a <= rank; ++a) grid.coords.emplace_back(shape);

    // Spatial mesh coordinates x / s_s, clamped per axis.
    std::vector<std::size_t> strides(rank, 1);
    for (std::size_t a = rank; a-- > 1;) strides[a - 1] = strides[a] * spatial_shape[a];
    for (std::size_t a = 0; a < rank; ++a) {
        const double hi = static_cast<double>(grid.grid_shape[a] - 1);
        Tensor& coord = grid.coords[a];
        for (std::size_t p = 0; p < pixels; ++p) {
            const std::size_t x = (p / strides[a]) % spatial_shape[a];
            coord[p] = std::clamp(static_cast<double>(x) / params.spatial_rate, 0.0, hi);
        }
    }

    // Range coordinate guidance / s_r.
    const double rhi = static_cast<double>(grid.grid_shape[rank] - 1);
    Tensor& rc = grid.coords[rank];
    for (std::size_t p = 0; p < pixels; ++p) {
        const double gv = guidance[p];
        if (!(gv >= 0.0 && gv <= 1.0)) {
            throw std::invalid_argument("guidance values must lie in [0, 1]");
        }
        rc[p] = std::clamp(gv / params.range_rate, 0.0, rhi);
    }
    return grid;
}

BilateralGrid gaussian_blur_grid(const BilateralGrid& grid, double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("blur sigma must be >= 0");
    if (sigma == 0.0) return grid;

    const auto taps = gaussian_taps(sigma);
    const auto grid_shape = grid.grid_shape();
    const std::size_t channels = grid.channels();
    const std::size_t cells = grid.cells();

    Tensor src = grid.data;
    Tensor dst(grid.data.shape());
    for (std::size_t axis = 0; axis < grid_shape.size(); ++axis) {
        std::size_t inner = 1;
        for (std::size_t b = axis + 1; b < grid_shape.size(); ++b) inner *= grid_shape[b];
        const std::size_t extent = grid_shape[axis];
        const std::size_t outer = channels * (cells / (extent * inner));
        blur_axis(src.data(), dst.data(), outer, extent, inner, taps);
        std::swap(src, dst);
    }
    return {std::move(src), grid.has_weight};
}

Image bilateral_filter(const Image& image, const Tensor& guidance, const GridParams& params) {
    const auto spatial = image.spatial_shape();
    const SamplingGrid grid = build_sampling_grid(spatial, params, guidance);
    BilateralGrid splatted = splat_homogeneous(image.tensor, grid, params.splat_kernel);
    splatted = gaussian_blur_grid(splatted, params.blur_sigma);
    const Tensor sliced = slice(splatted, grid, params.slice_kernel);

    const std::size_t channels = image.channels();
    const std::size_t voxels = image.voxels();
    std::vector<double> data(sliced.values().begin(),
                             sliced.values().begin() + channels * voxels);
    std::vector<std::size_t> dshape = sliced.shape();
    dshape[0] = channels;
    Tensor values(dshape, std::move(data));
    Tensor weight(spatial, std::vector<double>(
                               sliced.values().begin() + channels * voxels,
                               sliced.values().end()));

    Image out(normalize_by_weight(values, weight));
    out.spacing = image.spacing;
    out.value_range = image.value_range;
    return out;
}

Tensor box_downsample(const Tensor& spatial, std::size_t factor) {
    if (factor == 0) throw std::invalid_argument("downsample factor must be >= 1");
    const std::size_t rank = spatial.rank();
    for (std::size_t a = 0; a < rank; ++a) {
        if (spatial.extent(a) % factor != 0) {
            throw std::invalid_argument("extent not divisible by downsample factor");
        }
    }
    std::vector<std::size_t> out_shape(rank);
    for (std::size_t a = 0; a < rank; ++a) out_shape[a] = spatial.extent(a) / factor;
    Tensor out(out_shape);

    const auto in_strides = spatial.strides();
    const auto out_strides = out.strides();
    const double norm = 1.0 / std::pow(static_cast<double>(factor), static_cast<double>(rank));

    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t p = 0; p < out.size(); ++p) {
        std::size_t rem = p;
        std::size_t base = 0;
        for (std::size_t a = 0; a < rank; ++a) {
            const std::size_t coord = rem / out_strides[a];
            rem %= out_strides[a];
            base += coord * factor * in_strides[a];
        }
        // Sum the factor^rank block.
        double acc = 0.0;
        std::fill(idx.begin(), idx.end(), 0);
        while (true) {
            std::size_t off = base;
            for (std::size_t a = 0; a < rank; ++a) off += idx[a] * in_strides[a];
            acc += spatial[off];
            std::size_t a = rank;
            bool done = false;
            while (a-- > 0) {
                if (++idx[a] < factor) break;
                idx[a] = 0;
                if (a == 0) done = true;
            }
            if (done) break;
        }
        out[p] = acc * norm;
    }
    return out;
}

Tensor joint_bilateral_upsample(const Tensor& low, const Tensor& guidance_hi,
                                const GridParams& params, std::size_t scale) {
    params.validate();
    if (scale == 0) throw std::invalid_argument("scale must be >= 1");
    if (low.rank() != guidance_hi.rank() + 1) {
        throw std::invalid_argument("low map must be channels x spatial");
    }
    const std::size_t rank = guidance_hi.rank();
    for (std::size_t a = 0; a < rank; ++a) {
        if (low.extent(a + 1) * scale != guidance_hi.extent(a)) {
            throw std::invalid_argument("guidance extents must equal low extents times scale");
        }
    }

    const auto& hi_shape = guidance_hi.shape();
    const SamplingGrid hi_grid = build_sampling_grid(hi_shape, params, guidance_hi);

    // Low pixels splat at their centers mapped into high-res coordinates.
    const Tensor guidance_lo = box_downsample(guidance_hi, scale);
    SamplingGrid lo_grid;
    lo_grid.grid_shape = hi_grid.grid_shape;
    std::vector<std::size_t> lo_shape(low.shape().begin() + 1, low.shape().end());
    for (std::size_t a = 0; a <= rank; ++a) lo_grid.coords.emplace_back(lo_shape);

    const std::size_t lo_pixels = Tensor::numel(lo_shape);
    std::vector<std::size_t> lo_strides(rank, 1);
    for (std::size_t a = rank; a-- > 1;) lo_strides[a - 1] = lo_strides[a] * lo_shape[a];
    for (std::size_t a = 0; a < rank; ++a) {
        const double hi = static_cast<double>(lo_grid.grid_shape[a] - 1);
        for (std::size_t p = 0; p < lo_pixels; ++p) {
            const double x = static_cast<double>((p / lo_strides[a]) % lo_shape[a]);
            const double hires = (x + 0.5) * static_cast<double>(scale) - 0.5;
            lo_grid.coords[a][p] = std::clamp(hires / params.spatial_rate, 0.0, hi);
        }
    }
    const double rhi = static_cast<double>(lo_grid.grid_shape[rank] - 1);
    for (std::size_t p = 0; p < lo_pixels; ++p) {
        const double gv = std::clamp(guidance_lo[p], 0.0, 1.0);
        lo_grid.coords[rank][p] = std::clamp(gv / params.range_rate, 0.0, rhi);
    }

    BilateralGrid splatted = splat_homogeneous(low, lo_grid, params.splat_kernel);
    splatted = gaussian_blur_grid(splatted, params.blur_sigma);
    const Tensor sliced = slice(splatted, hi_grid, params.slice_kernel);

    const std::size_t channels = low.extent(0);
    const std::size_t hi_pixels = Tensor::numel(hi_shape);
    std::vector<std::size_t> dshape = sliced.shape();
    dshape[0] = channels;
    Tensor values(dshape, std::vector<double>(sliced.values().begin(),
                                              sliced.values().begin() + channels * hi_pixels));
    Tensor weight(std::vector<std::size_t>(hi_shape.begin(), hi_shape.end()),
                  std::vector<double>(sliced.values().begin() + channels * hi_pixels,
                                      sliced.values().end()));
    return normalize_by_weight(values, weight);
}

Image brute_force_bilateral(const Image& image, const Tensor& guidance, double sigma_s,
                            double sigma_r) {
    const auto spatial = image.spatial_shape();
    if (guidance.shape() != spatial) {
        throw std::invalid_argument("guidance shape does not match image");
    }
    const std::size_t rank = spatial.size();
    const std::size_t channels = image.channels();
    const std::size_t voxels = image.voxels();
    const long radius = sigma_s > 0.0 ? static_cast<long>(std::ceil(3.0 * sigma_s)) : 0;

    std::vector<double> spatial_tap(radius + 1, 1.0);
    if (sigma_s > 0.0) {
        for (long t = 0; t <= radius; ++t) {
            spatial_tap[t] = std::exp(-0.5 * (t * t) / (sigma_s * sigma_s));
        }
    }
    const double inv2r2 = 0.5 / (sigma_r * sigma_r);

    Image out(Tensor(image.tensor.shape()));
    out.spacing = image.spacing;
    out.value_range = image.value_range;

    std::vector<std::size_t> strides(rank, 1);
    for (std::size_t a = rank; a-- > 1;) strides[a - 1] = strides[a] * spatial[a];

    parallel_for(voxels, [&](std::size_t p0, std::size_t p1) {
        std::array<long, 3> x{}, lo{}, hi{}, cur{};
        std::vector<double> num(channels);
        for (std::size_t p = p0; p < p1; ++p) {
            for (std::size_t a = 0; a < rank; ++a) {
                x[a] = static_cast<long>((p / strides[a]) % spatial[a]);
                lo[a] = std::max<long>(0, x[a] - radius);
                hi[a] = std::min<long>(static_cast<long>(spatial[a]) - 1, x[a] + radius);
                cur[a] = lo[a];
            }
            const double g0 = guidance[p];
            std::fill(num.begin(), num.end(), 0.0);
            double den = 0.0;
            while (true) {
                std::size_t q = 0;
                double ws = 1.0;
                for (std::size_t a = 0; a < rank; ++a) {
                    q += static_cast<std::size_t>(cur[a]) * strides[a];
                    ws *= spatial_tap[std::labs(cur[a] - x[a])];
                }
                const double dg = guidance[q] - g0;
                const double w = ws * std::exp(-dg * dg * inv2r2);
                den += w;
                for (std::size_t c = 0; c < channels; ++c) {
                    num[c] += w * image.tensor[c * voxels + q];
                }
                std::size_t a = rank;
                bool done = false;
                while (a-- > 0) {
                    if (++cur[a] <= hi[a]) break;
                    cur[a] = lo[a];
                    if (a == 0) done = true;
                }
                if (done) break;
            }
            for (std::size_t c = 0; c < channels; ++c) {
                out.tensor[c * voxels + p] = num[c] / den;
            }
        }
    });
    return out;
}

}  // namespace bgrid
