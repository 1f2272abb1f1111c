#include "pixelcritic/perlin.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

namespace {

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }
double lerp(double a, double b, double t) { return a + (b - a) * t; }

}  // namespace

ScalarField perlin_field_raw(int n, int m, int lattice_cells, std::uint64_t seed) {
  if (lattice_cells < 2)
    throw ConfigError("perlin_field: lattice_cells must be >= 2, got " +
                      std::to_string(lattice_cells));
  if (n < 8 || m < 8)
    throw ConfigError("perlin_field: field must be at least 8x8, got " + std::to_string(n) + "x" +
                      std::to_string(m));

  const int nodes = lattice_cells + 1;
  std::vector<double> gx(static_cast<std::size_t>(nodes) * nodes);
  std::vector<double> gy(gx.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < gx.size(); ++i) {
    const double angle = rng.uniform(0.0, 6.283185307179586477);
    gx[i] = std::cos(angle);
    gy[i] = std::sin(angle);
  }
  const auto grad_dot = [&](int node_i, int node_j, double dy, double dx) {
    const std::size_t k = static_cast<std::size_t>(node_i) * nodes + node_j;
    return gy[k] * dy + gx[k] * dx;
  };

  ScalarField field(n, m);
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) * lattice_cells / n;
    const int u0 = std::min(static_cast<int>(u), lattice_cells - 1);
    const double du = u - u0;
    const double wu = fade(du);
    for (int j = 0; j < m; ++j) {
      const double v = static_cast<double>(j) * lattice_cells / m;
      const int v0 = std::min(static_cast<int>(v), lattice_cells - 1);
      const double dv = v - v0;
      const double wv = fade(dv);
      const double d00 = grad_dot(u0, v0, du, dv);
      const double d01 = grad_dot(u0, v0 + 1, du, dv - 1.0);
      const double d10 = grad_dot(u0 + 1, v0, du - 1.0, dv);
      const double d11 = grad_dot(u0 + 1, v0 + 1, du - 1.0, dv - 1.0);
      field.at(i, j) = lerp(lerp(d00, d01, wv), lerp(d10, d11, wv), wu);
    }
  }
  return field;
}

ScalarField perlin_field(int n, int m, int lattice_cells, std::uint64_t seed) {
  ScalarField field = perlin_field_raw(n, m, lattice_cells, seed);
  const double lo = field.min(), hi = field.max();
  if (hi - lo < 1e-12) {
    for (std::size_t i = 0; i < field.size(); ++i) field.data()[i] = 0.5;
    return field;
  }
  const double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < field.size(); ++i)
    field.data()[i] = (field.data()[i] - lo) * inv;
  return field;
}

MaskMap field_to_alpha(const ScalarField& field, double threshold, double softness) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("field_to_alpha: threshold must be in (0,1), got " +
                      std::to_string(threshold));
  if (softness < 0.0) throw ConfigError("field_to_alpha: softness must be >= 0");
  MaskMap alpha(field.height(), field.width());
  for (std::size_t i = 0; i < field.size(); ++i) {
    const double f = field.data()[i];
    if (softness == 0.0) {
      alpha.data()[i] = f >= threshold ? 1.0 : 0.0;
    } else {
      const double t = std::clamp((f - threshold) / softness + 0.5, 0.0, 1.0);
      alpha.data()[i] = t * t * (3.0 - 2.0 * t);
    }
  }
  return alpha;
}

}  // namespace pixelcritic
