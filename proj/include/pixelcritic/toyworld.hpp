#pragma once

#include <cstdint>

#include "pixelcritic/image.hpp"

namespace pixelcritic {

// Procedural stand-in for real/generated image pairs: smooth background
// gradient plus 1-3 colored shapes with a high-frequency ripple texture.
// Each class has a fixed palette hue and shape family. The "generated"
// image is independently sampled from the same family and then degraded:
// Gaussian blur and hue rotation scale with `corruption`, and with
// probability `mode_collapse` the shape layout is replaced by the class's
// single canonical layout.
struct ToyWorldConfig {
  int height = 64;
  int width = 64;
  double corruption = 0.0;     // in [0,1]
  double mode_collapse = 0.0;  // in [0,1]
  int class_id = 0;
  int max_shapes = 3;
  std::uint64_t seed = 0;
};

struct ToyPair {
  Image real;
  Image generated;
  Field generated_shape_mask;  // union of shape interiors, before degradation
  bool collapsed = false;
};

ToyPair make_toy_pair(const ToyWorldConfig& config);

// single-sided generators, cheaper when only one side is needed
Image make_toy_real(const ToyWorldConfig& config);
Image make_toy_generated(const ToyWorldConfig& config, Field* shape_mask = nullptr,
                         bool* collapsed = nullptr);

}  // namespace pixelcritic
