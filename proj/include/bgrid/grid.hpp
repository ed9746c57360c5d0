#pragma once

#include <span>
#include <vector>

#include "bgrid/kernels.hpp"
#include "bgrid/tensor.hpp"

namespace bgrid {

// Per-pixel continuous grid coordinates: one rank-D tensor per spatial
// axis plus one for the range axis, all in grid-cell units and already
// clamped into [0, extent-1] of the grid axis they address.
struct SamplingGrid {
    std::vector<Tensor> coords;            // size D+1, each over the image's spatial shape
    std::vector<std::size_t> grid_shape;   // D spatial extents + range extent

    std::size_t spatial_rank() const { return coords.empty() ? 0 : coords.size() - 1; }
    std::size_t axes() const { return coords.size(); }
    std::size_t pixels() const { return coords.empty() ? 0 : coords[0].size(); }
    const std::vector<std::size_t>& pixel_shape() const { return coords.at(0).shape(); }
};

// Dense bilateral grid: tensor of shape (channels, grid spatial..., range).
// When has_weight is set the last channel holds the homogeneous weight W.
struct BilateralGrid {
    Tensor data;
    bool has_weight = false;

    std::size_t channels() const { return data.extent(0); }
    std::size_t data_channels() const { return channels() - (has_weight ? 1 : 0); }

    std::vector<std::size_t> grid_shape() const {
        const auto& s = data.shape();
        return std::vector<std::size_t>(s.begin() + 1, s.end());
    }

    std::size_t cells() const { return data.size() / channels(); }

    std::span<const double> channel(std::size_t c) const {
        return {data.data() + c * cells(), cells()};
    }
    std::span<double> channel(std::size_t c) {
        return {data.data() + c * cells(), cells()};
    }

    std::span<const double> weight() const { return channel(channels() - 1); }

    // The data channels as a standalone tensor (drops the weight channel).
    Tensor data_only() const;
};

// Scatter-accumulation of a (channels, spatial...) feature map into grid
// cells, each pixel weighted by the product of per-axis kernel weights.
BilateralGrid splat(const Tensor& input, const SamplingGrid& grid, Kernel kernel);

// As splat, with an appended channel that accumulates an all-ones input:
// the homogeneous weight.
BilateralGrid splat_homogeneous(const Tensor& input, const SamplingGrid& grid, Kernel kernel);

// Gather-interpolation of every grid channel back to pixel space. Pure
// gather; no normalization is applied.
Tensor slice(const BilateralGrid& grid, const SamplingGrid& sampling, Kernel kernel);

inline constexpr double kWeightEpsilonF64 = 1e-8;
inline constexpr double kWeightEpsilonF32 = 1e-6;

// data/weight where weight exceeds epsilon, 0 elsewhere.
Tensor normalize_by_weight(const Tensor& data, const Tensor& weight,
                           double epsilon = kWeightEpsilonF64);

struct SplatBackward {
    Tensor input_grad;                 // same shape as the splatted input
    std::vector<Tensor> coord_grads;   // one rank-D tensor per grid axis
};

struct SliceBackward {
    Tensor grid_grad;                  // same shape as the grid data
    std::vector<Tensor> coord_grads;
};

// Adjoints of splat: d(input) is exactly slice(grid_cotangent); the
// coordinate gradients swap one kernel factor for its derivative. With
// the nearest kernel the coordinate gradients are identically zero.
SplatBackward splat_backward(const Tensor& grid_cotangent, const Tensor& input,
                             const SamplingGrid& grid, Kernel kernel);

// Adjoints of slice: d(grid) is exactly splat(output_cotangent).
SliceBackward slice_backward(const Tensor& output_cotangent, const BilateralGrid& grid,
                             const SamplingGrid& sampling, Kernel kernel);

}  // namespace bgrid
