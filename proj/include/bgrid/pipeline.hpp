#pragma once

#include <optional>
#include <span>

#include "bgrid/errors.hpp"
#include "bgrid/grid.hpp"
#include "bgrid/image.hpp"

namespace bgrid {

// Sampling rates and blur for the splat-blur-slice pipeline. blur_sigma
// is measured in grid cells; the image-space equivalents are
// sigma_s = blur_sigma * spatial_rate and sigma_r = blur_sigma * range_rate.
struct GridParams {
    double spatial_rate = 8.0;   // s_s, pixels per grid cell
    double range_rate = 0.125;   // s_r, guidance units per range bin
    double blur_sigma = 1.0;     // grid cells
    Kernel splat_kernel = Kernel::Linear;
    Kernel slice_kernel = Kernel::Linear;
    std::optional<std::size_t> range_extent;  // overrides round(1/s_r)

    void validate() const;
    std::size_t resolved_range_extent() const;
};

enum class GuidanceMode { Intensity, Luminance, External };

// Single-channel guidance in [0,1]. Intensity and luminance modes min-max
// normalize (luminance first collapses RGB with 0.299/0.587/0.114);
// external mode only validates the range. A constant image has no
// dynamic range to normalize and raises DegenerateGuidanceError.
Tensor make_guidance(const Image& image, GuidanceMode mode);

// Grid extents implied by an image shape: ceil(extent / s_s) per spatial
// axis plus the range extent.
std::vector<std::size_t> grid_shape_for(std::span<const std::size_t> spatial_shape,
                                        const GridParams& params);

// Mesh coordinates divided by s_s plus guidance divided by s_r, clamped
// into the grid bounds. Grid spatial extents are ceil(extent / s_s).
SamplingGrid build_sampling_grid(std::span<const std::size_t> spatial_shape,
                                 const GridParams& params, const Tensor& guidance);

// Separable Gaussian over every grid axis (spatial and range), kernel
// truncated at radius ceil(3*sigma), zero padding. sigma = 0 is identity.
BilateralGrid gaussian_blur_grid(const BilateralGrid& grid, double sigma);

// The tri-phase pipeline: splat with homogeneous weight, blur, slice
// data and weight, then divide.
Image bilateral_filter(const Image& image, const Tensor& guidance, const GridParams& params);

// Slices a grid splatted from a low-resolution map at high-resolution
// guidance coordinates. guidance_hi extents must equal low extents * scale.
Tensor joint_bilateral_upsample(const Tensor& low, const Tensor& guidance_hi,
                                const GridParams& params, std::size_t scale);

// Direct O(pixels * window) cross-bilateral filter; the accuracy oracle
// for the grid pipeline. sigma_s is in pixels, sigma_r in guidance units.
Image brute_force_bilateral(const Image& image, const Tensor& guidance, double sigma_s,
                            double sigma_r);

// Box-average downsampling by an integer factor per axis.
Tensor box_downsample(const Tensor& spatial, std::size_t factor);

}  // namespace bgrid
