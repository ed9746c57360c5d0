#pragma once

#include <string>

#include "bgrid/errors.hpp"
#include "bgrid/image.hpp"
#include "bgrid/tensor.hpp"

namespace bgrid {

// Binary tensor container. Layout, all little-endian:
//   bytes 0..3   magic "BLG1"
//   byte  4      dtype code (0 = f32, 1 = f64)
//   byte  5      rank
//   then rank u32 extents, then the row-major payload.
Tensor read_tensor(const std::string& path);
void write_tensor(const Tensor& t, const std::string& path);

// 2D images come from 8-bit PGM (P5) or PNG (gray/RGB); anything else is
// treated as a binary tensor file (rank 2 -> one 2D channel, rank 3 ->
// one 3D channel, rank 4 -> channels x 3D). 8-bit sources are scaled to
// [0,1] with value_range recording the encoding; writing inverts that.
// A "<path>.json" sidecar, when present, supplies per-axis spacing.
Image read_image(const std::string& path);
void write_image(const Image& image, const std::string& path);

// Plain CSV, no header, one row per pair: fixed coordinates then moving
// coordinates (4 columns = 2D, 6 columns = 3D). '#' starts a comment.
KeypointSet read_keypoints(const std::string& path);

// Sidecar helpers shared by fields and tensor-backed images.
void write_spacing_sidecar(const std::string& data_path,
                           const std::vector<double>& spacing);
std::vector<double> read_spacing_sidecar(const std::string& data_path,
                                         std::size_t expected_rank);

}  // namespace bgrid
