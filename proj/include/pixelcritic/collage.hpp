#pragma once

#include <cstdint>
#include <string>

#include "pixelcritic/image.hpp"

namespace pixelcritic {

// A blended training sample with per-pixel provenance: label 1 where the
// pixel came from the real source, 0 where it came from the generated
// source or was overwritten by a pasted artifact.
struct CollageSample {
  Image image;
  LabelMap label;
  std::uint64_t seed = 0;
  std::string real_id;
  std::string generated_id;
};

// image = alpha*real + (1-alpha)*generated, label = 1 where alpha >= 0.5
CollageSample collage(const Image& real, const Image& generated, const MaskMap& alpha);

// Copies a disc of radius r (uniform over radius_range) from a random spot
// in `source`, rotates it by a uniform angle with nearest-neighbor
// resampling, and pastes it at a random destination center clipped to the
// image bounds. Pasted pixels are labelled 0. radius 0 is a no-op.
CollageSample apply_circular_artifact(const CollageSample& sample, const Image& source,
                                      int min_radius, int max_radius, std::uint64_t seed);

// deterministic core of the artifact op, exposed for testing
void paste_rotated_disc(CollageSample& sample, const Image& source, int radius, int src_i,
                        int src_j, double angle, int dst_i, int dst_j);

}  // namespace pixelcritic
