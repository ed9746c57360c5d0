#pragma once

#include <cstdint>
#include <vector>

#include "bgrid/deform.hpp"
#include "bgrid/grid.hpp"
#include "bgrid/image.hpp"
#include "bgrid/pipeline.hpp"

namespace bgrid {

// Settings for harmonic grid inpainting.
struct InpaintConfig {
    double tol = 1e-5;              // max-update convergence threshold
    int max_iter = 5000;
    double weight_threshold = 1e-6; // occupancy cutoff on the weight channel
    double range_coupling = 1.0;    // weight of range-axis neighbors in the stencil

    void validate() const;
};

// Raised when inpainting is asked to fill a grid with no occupied cells.
class NoConstraintsError : public std::domain_error {
public:
    explicit NoConstraintsError(const std::string& what) : std::domain_error(what) {}
};

// Splats keypoint displacements p_m - p_f (plus unit weight) at grid
// coordinates (p_f / s_s, guidance(p_f) / s_r) with a linear kernel.
// Guidance at non-integer positions is read by multilinear interpolation.
BilateralGrid sparse_displacement_grid(const KeypointSet& kps, const Tensor& guidance,
                                       const GridParams& params);

struct InpaintResult {
    BilateralGrid grid;                    // constrained cells normalized, free cells filled
    std::vector<std::uint8_t> constrained; // one flag per cell
    Tensor constraint_values;              // normalized targets (defined where constrained)
    int iterations = 0;
    double final_update = 0.0;             // max update of the last sweep
    bool converged = false;
};

// Fills unoccupied cells with the discrete harmonic extension of the
// occupied ones: occupied cells are pinned at data/weight and free cells
// are relaxed by Jacobi sweeps (plain neighbor averaging over all grid
// axes, range axis scaled by range_coupling) until the largest update
// falls below tol. Non-convergence returns the best iterate with
// converged = false.
InpaintResult inpaint_grid(const BilateralGrid& grid, const InpaintConfig& cfg);

struct InpaintReport {
    int iterations = 0;
    bool converged = false;
    double max_residual = 0.0;             // Laplace residual on free cells
    double max_constraint_violation = 0.0; // always 0: constraints are pinned
    std::vector<std::pair<double, double>> channel_ranges;
};

InpaintReport field_residual_report(const InpaintResult& result, const InpaintConfig& cfg);

struct KeypointFieldResult {
    DisplacementField field;
    InpaintResult inpaint;
    std::vector<std::size_t> grid_shape;
};

// Zero-shot keypoints-to-dense-field pipeline: guidance from the fixed
// image, sparse splat, harmonic inpainting, then slicing back to a dense
// displacement field at full resolution.
KeypointFieldResult keypoint_field(const KeypointSet& kps, const Image& fixed_image,
                                   const GridParams& params, const InpaintConfig& cfg);

}  // namespace bgrid
