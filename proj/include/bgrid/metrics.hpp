#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "bgrid/deform.hpp"
#include "bgrid/image.hpp"

namespace bgrid {

// Integer segmentation labels over a spatial extent; 0 is background.
struct LabelMask {
    std::vector<std::int32_t> labels;
    std::vector<std::size_t> shape;
    std::vector<double> spacing;

    LabelMask() = default;
    LabelMask(std::vector<std::int32_t> l, std::vector<std::size_t> s,
              std::vector<double> sp = {});

    // Rounds a [0,1]-normalized image back to its encoded integer labels.
    static LabelMask from_image(const Image& image);

    std::size_t voxels() const { return labels.size(); }
    std::vector<std::int32_t> present_labels() const;  // nonzero, sorted, unique
};

struct DiceResult {
    std::map<std::int32_t, double> per_label;
    double mean = 0.0;
};

// 2|A and B| / (|A| + |B|) per label; a label empty in both masks scores 1.
DiceResult dice(const LabelMask& a, const LabelMask& b,
                const std::vector<std::int32_t>& labels = {});

// 95th percentile symmetric boundary distance in mm. Boundary voxels are
// foreground voxels with a face-adjacent background (or out-of-image)
// neighbor; the percentile interpolates linearly between order statistics.
double hd95(const LabelMask& a, const LabelMask& b, std::int32_t label);

struct SdLogJResult {
    double sdlogj = 0.0;
    std::size_t folds = 0;  // voxels with det <= 0
};

// Standard deviation of log(max(det, 1e-9)) over the mask, or over all
// interior voxels when no mask is given.
SdLogJResult sdlogj(const DisplacementField& u, const LabelMask* mask = nullptr);

struct TreResult {
    double mean_mm = 0.0;
    std::vector<double> per_landmark_mm;
};

// ||(p_f + u(p_f) - p_m) * spacing||_2 per landmark, u sampled by
// multilinear interpolation at the fixed landmarks.
TreResult tre(const DisplacementField& u, const KeypointSet& kps);

double mse(const Image& a, const Image& b);

// Mean of squared forward-difference gradients over every channel, axis,
// and voxel where the forward neighbor exists (voxel units).
double smoothness(const DisplacementField& u);

}  // namespace bgrid
