#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "bgrid/tensor.hpp"

namespace bgrid {

// Channel-major image: tensor shape is (channels, spatial extents...).
// Pixel values live in [0,1] after loading; value_range remembers the
// source encoding so writing can invert the normalization.
struct Image {
    Tensor tensor;
    std::vector<double> spacing;                 // mm per voxel, one entry per spatial axis
    std::array<double, 2> value_range{0.0, 1.0}; // min/max of the source encoding

    Image() = default;

    explicit Image(Tensor t) : tensor(std::move(t)) {
        if (tensor.rank() < 2 || tensor.rank() > 4) {
            throw std::invalid_argument("image tensor must be channels x 1/2/3 spatial dims");
        }
        spacing.assign(tensor.rank() - 1, 1.0);
    }

    Image(Tensor t, std::vector<double> sp) : Image(std::move(t)) {
        set_spacing(std::move(sp));
    }

    std::size_t channels() const { return tensor.extent(0); }
    std::size_t spatial_rank() const { return tensor.rank() - 1; }

    std::vector<std::size_t> spatial_shape() const {
        const auto& s = tensor.shape();
        return std::vector<std::size_t>(s.begin() + 1, s.end());
    }

    std::size_t voxels() const {
        return Tensor::numel(spatial_shape());
    }

    void set_spacing(std::vector<double> sp) {
        if (sp.size() != spatial_rank()) {
            throw std::invalid_argument("spacing rank does not match image");
        }
        for (double v : sp) {
            if (!(v > 0.0)) throw std::invalid_argument("spacing entries must be > 0");
        }
        spacing = std::move(sp);
    }
};

// Paired fixed/moving landmark coordinates, voxel units, index order
// (axis 0 first). Row i of `fixed` corresponds to row i of `moving`.
struct KeypointSet {
    std::size_t dim = 0;
    std::vector<double> fixed;   // N x dim, row-major
    std::vector<double> moving;  // N x dim, row-major

    std::size_t count() const { return dim == 0 ? 0 : fixed.size() / dim; }

    std::span<const double> fixed_point(std::size_t i) const {
        return {fixed.data() + i * dim, dim};
    }
    std::span<const double> moving_point(std::size_t i) const {
        return {moving.data() + i * dim, dim};
    }

    void add(std::span<const double> f, std::span<const double> m) {
        if (dim == 0) {
            if (f.size() < 1 || f.size() > 3 || f.size() != m.size()) {
                throw std::invalid_argument("keypoint dimension must be 1, 2, or 3");
            }
            dim = f.size();
        }
        if (f.size() != dim || m.size() != dim) {
            throw std::invalid_argument("keypoint dimension mismatch");
        }
        fixed.insert(fixed.end(), f.begin(), f.end());
        moving.insert(moving.end(), m.begin(), m.end());
    }

    // Both point sets must lie inside [0, extent-1] per axis.
    void validate_extent(std::span<const std::size_t> spatial_shape) const {
        if (spatial_shape.size() != dim) {
            throw std::invalid_argument("keypoint dimension does not match image rank");
        }
        auto check = [&](const std::vector<double>& pts, const char* which) {
            for (std::size_t i = 0; i < pts.size(); ++i) {
                const double hi = static_cast<double>(spatial_shape[i % dim] - 1);
                if (!(pts[i] >= 0.0 && pts[i] <= hi)) {
                    throw std::out_of_range(std::string(which) +
                                            " keypoint coordinate outside image extent");
                }
            }
        };
        check(fixed, "fixed");
        check(moving, "moving");
    }
};

}  // namespace bgrid
