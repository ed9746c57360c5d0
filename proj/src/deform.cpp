#include "bgrid/deform.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "bgrid/interp.hpp"
#include "bgrid/parallel.hpp"

namespace bgrid {

namespace {

void check_same_space(const DisplacementField& a, const DisplacementField& b) {
    if (!a.vectors.same_shape(b.vectors)) {
        throw std::invalid_argument("displacement fields have different shapes");
    }
}

std::vector<std::size_t> spatial_strides(std::span<const std::size_t> shape) {
    std::vector<std::size_t> s(shape.size(), 1);
    for (std::size_t a = shape.size(); a-- > 1;) s[a - 1] = s[a] * shape[a];
    return s;
}

}  // namespace

Image warp(const Image& image, const DisplacementField& u) {
    if (image.spatial_shape() != u.spatial_shape()) {
        throw std::invalid_argument("image and displacement field shapes differ");
    }
    const std::size_t rank = u.spatial_rank();
    const std::size_t voxels = u.voxels();
    const std::size_t channels = image.channels();
    const auto shape = image.spatial_shape();
    const auto strides = spatial_strides(shape);

    Image out(Tensor(image.tensor.shape()));
    out.spacing = image.spacing;
    out.value_range = image.value_range;

    parallel_for(voxels, [&](std::size_t p0, std::size_t p1) {
        std::array<double, 3> pos{};
        for (std::size_t p = p0; p < p1; ++p) {
            std::size_t rem = p;
            for (std::size_t a = 0; a < rank; ++a) {
                const std::size_t x = rem / strides[a];
                rem %= strides[a];
                pos[a] = static_cast<double>(x) + u.vectors[a * voxels + p];
            }
            for (std::size_t c = 0; c < channels; ++c) {
                out.tensor[c * voxels + p] = multilinear_sample(
                    image.tensor.data() + c * voxels, shape, strides, {pos.data(), rank});
            }
        }
    });
    return out;
}

DisplacementField compose(const DisplacementField& u_outer, const DisplacementField& u_inner) {
    check_same_space(u_outer, u_inner);
    const std::size_t rank = u_inner.spatial_rank();
    const std::size_t voxels = u_inner.voxels();
    const auto shape = u_inner.spatial_shape();
    const auto strides = spatial_strides(shape);

    DisplacementField out(Tensor(u_inner.vectors.shape()), u_inner.spacing);
    parallel_for(voxels, [&](std::size_t p0, std::size_t p1) {
        std::array<double, 3> pos{};
        for (std::size_t p = p0; p < p1; ++p) {
            std::size_t rem = p;
            for (std::size_t a = 0; a < rank; ++a) {
                const std::size_t x = rem / strides[a];
                rem %= strides[a];
                pos[a] = static_cast<double>(x) + u_inner.vectors[a * voxels + p];
            }
            for (std::size_t a = 0; a < rank; ++a) {
                out.vectors[a * voxels + p] =
                    u_inner.vectors[a * voxels + p] +
                    multilinear_sample(u_outer.vectors.data() + a * voxels, shape, strides,
                                       {pos.data(), rank});
            }
        }
    });
    return out;
}

DisplacementField integrate_velocity(const DisplacementField& v, int steps) {
    if (steps < 1) throw std::invalid_argument("integration steps must be >= 1");
    DisplacementField u(Tensor(v.vectors.shape()), v.spacing);
    const double scale = std::ldexp(1.0, -steps);  // 2^-steps
    for (std::size_t i = 0; i < v.vectors.size(); ++i) u.vectors[i] = v.vectors[i] * scale;
    for (int s = 0; s < steps; ++s) u = compose(u, u);
    return u;
}

Tensor jacobian_determinant(const DisplacementField& u) {
    const std::size_t rank = u.spatial_rank();
    if (rank != 2 && rank != 3) {
        throw std::invalid_argument("jacobian determinant requires spatial rank 2 or 3");
    }
    const std::size_t voxels = u.voxels();
    const auto shape = u.spatial_shape();
    const auto strides = spatial_strides(shape);

    Tensor det(shape);
    parallel_for(voxels, [&](std::size_t p0, std::size_t p1) {
        std::array<std::size_t, 3> x{};
        double J[3][3];
        for (std::size_t p = p0; p < p1; ++p) {
            std::size_t rem = p;
            for (std::size_t a = 0; a < rank; ++a) {
                x[a] = rem / strides[a];
                rem %= strides[a];
            }
            for (std::size_t i = 0; i < rank; ++i) {
                const double* comp = u.vectors.data() + i * voxels;
                for (std::size_t j = 0; j < rank; ++j) {
                    const std::size_t e = shape[j];
                    double grad;
                    if (e == 1) {
                        grad = 0.0;
                    } else if (x[j] == 0) {
                        grad = comp[p + strides[j]] - comp[p];
                    } else if (x[j] == e - 1) {
                        grad = comp[p] - comp[p - strides[j]];
                    } else {
                        grad = 0.5 * (comp[p + strides[j]] - comp[p - strides[j]]);
                    }
                    J[i][j] = (i == j ? 1.0 : 0.0) + grad;
                }
            }
            if (rank == 2) {
                det[p] = J[0][0] * J[1][1] - J[0][1] * J[1][0];
            } else {
                det[p] = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                         J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                         J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
            }
        }
    });
    return det;
}

}  // namespace bgrid
