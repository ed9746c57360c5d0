#pragma once

#include <vector>

#include "bgrid/image.hpp"
#include "bgrid/tensor.hpp"

namespace bgrid {

// Vector field u over image space, channel-major (D, spatial...), in
// voxel units; the deformation it induces is phi(x) = x + u(x).
struct DisplacementField {
    Tensor vectors;
    std::vector<double> spacing;

    DisplacementField() = default;

    explicit DisplacementField(Tensor v) : vectors(std::move(v)) {
        if (vectors.rank() < 2 || vectors.extent(0) != vectors.rank() - 1) {
            throw std::invalid_argument(
                "displacement field needs one channel per spatial axis");
        }
        spacing.assign(vectors.rank() - 1, 1.0);
    }

    DisplacementField(Tensor v, std::vector<double> sp) : DisplacementField(std::move(v)) {
        if (sp.size() != spatial_rank()) {
            throw std::invalid_argument("spacing rank does not match field");
        }
        spacing = std::move(sp);
    }

    std::size_t spatial_rank() const { return vectors.rank() - 1; }
    std::size_t voxels() const { return vectors.size() / spatial_rank(); }
    std::vector<std::size_t> spatial_shape() const {
        const auto& s = vectors.shape();
        return std::vector<std::size_t>(s.begin() + 1, s.end());
    }
};

// output(x) = image(x + u(x)), multilinear interpolation with sample
// coordinates clamped to the image extent.
Image warp(const Image& image, const DisplacementField& u);

// result(x) = u_inner(x) + u_outer(x + u_inner(x)).
DisplacementField compose(const DisplacementField& u_outer, const DisplacementField& u_inner);

// Scaling and squaring of a stationary velocity field: halve `steps`
// times, then self-compose `steps` times.
DisplacementField integrate_velocity(const DisplacementField& v, int steps = 7);

// det(I + du/dx) per voxel; central differences in the interior,
// one-sided at the borders, voxel units. Spatial rank 2 or 3.
Tensor jacobian_determinant(const DisplacementField& u);

}  // namespace bgrid
