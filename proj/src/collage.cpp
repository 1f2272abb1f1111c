#include "pixelcritic/collage.hpp"

#include <algorithm>
#include <cmath>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

CollageSample collage(const Image& real, const Image& generated, const MaskMap& alpha) {
  if (generated.height() != real.height() || generated.width() != real.width() ||
      generated.channels() != real.channels())
    throw DataError("collage: generated image dims do not match real image");
  if (alpha.height() != real.height() || alpha.width() != real.width())
    throw DataError("collage: alpha mask dims do not match real image");

  CollageSample out;
  out.image = Image(real.height(), real.width(), real.channels());
  out.label = LabelMap(real.height(), real.width());
  for (int i = 0; i < real.height(); ++i) {
    for (int j = 0; j < real.width(); ++j) {
      const double a = alpha.at(i, j);
      for (int c = 0; c < real.channels(); ++c)
        out.image.at(i, j, c) = a * real.at(i, j, c) + (1.0 - a) * generated.at(i, j, c);
      out.label.at(i, j) = a >= 0.5 ? 1.0 : 0.0;
    }
  }
  return out;
}

void paste_rotated_disc(CollageSample& sample, const Image& source, int radius, int src_i,
                        int src_j, double angle, int dst_i, int dst_j) {
  if (radius <= 0) return;
  const int h = sample.image.height(), w = sample.image.width();
  const double cos_a = std::cos(angle), sin_a = std::sin(angle);
  const int r2 = radius * radius;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dy * dy + dx * dx > r2) continue;
      const int ti = dst_i + dy, tj = dst_j + dx;
      if (ti < 0 || ti >= h || tj < 0 || tj >= w) continue;
      // inverse-rotate the destination offset to find the source pixel
      const int oi = static_cast<int>(std::lround(-sin_a * dx + cos_a * dy));
      const int oj = static_cast<int>(std::lround(cos_a * dx + sin_a * dy));
      const int si = src_i + oi, sj = src_j + oj;
      if (si < 0 || si >= source.height() || sj < 0 || sj >= source.width()) continue;
      for (int c = 0; c < sample.image.channels(); ++c)
        sample.image.at(ti, tj, c) = source.at(si, sj, c);
      sample.label.at(ti, tj) = 0.0;
    }
  }
}

CollageSample apply_circular_artifact(const CollageSample& sample, const Image& source,
                                      int min_radius, int max_radius, std::uint64_t seed) {
  const int h = sample.image.height(), w = sample.image.width();
  if (source.height() != h || source.width() != w || source.channels() != sample.image.channels())
    throw DataError("apply_circular_artifact: source dims do not match sample");
  if (min_radius < 0 || max_radius < min_radius)
    throw ConfigError("apply_circular_artifact: invalid radius range [" +
                      std::to_string(min_radius) + "," + std::to_string(max_radius) + "]");
  if (max_radius >= std::min(h, w) / 2)
    throw ConfigError("apply_circular_artifact: max radius " + std::to_string(max_radius) +
                      " too large for " + std::to_string(h) + "x" + std::to_string(w));

  Rng rng(seed);
  const int radius = static_cast<int>(rng.uniform_int(min_radius, max_radius));
  CollageSample out = sample;
  if (radius == 0) return out;

  // keep the source disc fully inside; rotated offsets stay within +-radius
  // per axis, so reads cannot escape
  const int src_i = static_cast<int>(rng.uniform_int(radius, h - 1 - radius));
  const int src_j = static_cast<int>(rng.uniform_int(radius, w - 1 - radius));
  const double angle = rng.uniform(0.0, 6.283185307179586477);
  const int dst_i = static_cast<int>(rng.uniform_int(0, h - 1));
  const int dst_j = static_cast<int>(rng.uniform_int(0, w - 1));
  paste_rotated_disc(out, source, radius, src_i, src_j, angle, dst_i, dst_j);
  return out;
}

}  // namespace pixelcritic
