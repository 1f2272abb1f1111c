#pragma once

#include <cstdint>

#include "pixelcritic/image.hpp"

namespace pixelcritic {

// Classic 2-D gradient noise: random unit gradients on a lattice of
// `lattice_cells` cells per axis, offsets dotted with gradients and blended
// with the quintic fade 6t^5 - 15t^4 + 10t^3. Raw values are 0 exactly at
// lattice nodes.
ScalarField perlin_field_raw(int n, int m, int lattice_cells, std::uint64_t seed);

// raw field affinely normalized to [0,1]
ScalarField perlin_field(int n, int m, int lattice_cells, std::uint64_t seed);

// alpha = smoothstep over a window of `softness` centered at `threshold`;
// softness 0 degenerates to the hard threshold field >= threshold
MaskMap field_to_alpha(const ScalarField& field, double threshold, double softness);

}  // namespace pixelcritic
