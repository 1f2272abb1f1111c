#include "pixelcritic/toyworld.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

namespace {

constexpr double kTau = 6.283185307179586477;

struct Shape {
  int type;  // 0 circle, 1 square, 2 triangle
  double ci, cj;  // center, fraction of height/width
  double size;    // fraction of min dimension
  double angle;
  double color[3];
};

struct Scene {
  double bg0[3], bg1[3];
  double bg_angle;
  double tex_angle, tex_phase, tex_freq, tex_amp;
  std::vector<Shape> shapes;
};

double fract(double x) { return x - std::floor(x); }

void hsv_to_rgb(double h, double s, double v, double* rgb) {
  h = fract(h) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1.0 - s), q = v * (1.0 - s * f), t = v * (1.0 - s * (1.0 - f));
  switch (i % 6) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

double class_hue(int class_id) { return fract(0.13 + 0.61803398875 * class_id); }

void sample_shape_color(Rng& rng, int class_id, double* rgb) {
  const double hue = class_hue(class_id) + rng.uniform(-0.06, 0.06);
  hsv_to_rgb(hue, rng.uniform(0.55, 0.9), rng.uniform(0.5, 0.95), rgb);
}

// layout = everything but colors; the canonical layout per class fixes these
void sample_shape_layout(Rng& rng, int class_id, int max_shapes, std::vector<Shape>& shapes) {
  const int count = static_cast<int>(rng.uniform_int(1, std::max(1, max_shapes)));
  shapes.resize(static_cast<std::size_t>(count));
  for (Shape& s : shapes) {
    s.type = (class_id + static_cast<int>(rng.uniform_int(0, 1))) % 3;
    s.ci = rng.uniform(0.18, 0.82);
    s.cj = rng.uniform(0.18, 0.82);
    s.size = rng.uniform(0.12, 0.26);
    s.angle = rng.uniform(0.0, kTau);
  }
}

Scene sample_scene(Rng& rng, int class_id, int max_shapes) {
  Scene scene;
  const double hue = class_hue(class_id);
  hsv_to_rgb(hue + rng.uniform(-0.05, 0.05), rng.uniform(0.15, 0.4), rng.uniform(0.5, 0.8),
             scene.bg0);
  hsv_to_rgb(hue + rng.uniform(-0.05, 0.05), rng.uniform(0.15, 0.4), rng.uniform(0.35, 0.65),
             scene.bg1);
  scene.bg_angle = rng.uniform(0.0, kTau);
  scene.tex_angle = rng.uniform(0.0, kTau);
  scene.tex_phase = rng.uniform(0.0, kTau);
  scene.tex_freq = rng.uniform(10.0, 16.0);
  scene.tex_amp = rng.uniform(0.03, 0.05);
  sample_shape_layout(rng, class_id, max_shapes, scene.shapes);
  for (Shape& s : scene.shapes) sample_shape_color(rng, class_id, s.color);
  return scene;
}

bool inside_shape(const Shape& s, double di, double dj) {
  // rotate offset into the shape frame
  const double cos_a = std::cos(s.angle), sin_a = std::sin(s.angle);
  const double u = cos_a * dj + sin_a * di;
  const double v = -sin_a * dj + cos_a * di;
  switch (s.type) {
    case 0:
      return di * di + dj * dj <= s.size * s.size;
    case 1:
      return std::abs(u) <= s.size * 0.9 && std::abs(v) <= s.size * 0.9;
    default: {
      // equilateral triangle, vertices at distance `size` from center
      const double ax = 0.0, ay = -s.size;
      const double bx = -0.866 * s.size, by = 0.5 * s.size;
      const double cx = 0.866 * s.size, cy = 0.5 * s.size;
      const auto edge = [&](double px, double py, double qx, double qy) {
        return (qx - px) * (v - py) - (qy - py) * (u - px);
      };
      const double e0 = edge(ax, ay, bx, by), e1 = edge(bx, by, cx, cy), e2 = edge(cx, cy, ax, ay);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
}

Image render_scene(const Scene& scene, int h, int w, Field* shape_mask) {
  Image img(h, w, 3);
  if (shape_mask) *shape_mask = Field(h, w);
  const double cos_b = std::cos(scene.bg_angle), sin_b = std::sin(scene.bg_angle);
  const double cos_t = std::cos(scene.tex_angle), sin_t = std::sin(scene.tex_angle);
  const double inv_min = 1.0 / std::min(h, w);
  for (int i = 0; i < h; ++i) {
    const double fi = static_cast<double>(i) / (h - 1) - 0.5;
    for (int j = 0; j < w; ++j) {
      const double fj = static_cast<double>(j) / (w - 1) - 0.5;
      const double t = std::clamp(cos_b * fi + sin_b * fj + 0.5, 0.0, 1.0);
      double rgb[3];
      for (int c = 0; c < 3; ++c) rgb[c] = scene.bg0[c] + (scene.bg1[c] - scene.bg0[c]) * t;
      bool in_shape = false;
      for (const Shape& s : scene.shapes) {
        if (inside_shape(s, fi + 0.5 - s.ci, fj + 0.5 - s.cj)) {
          rgb[0] = s.color[0];
          rgb[1] = s.color[1];
          rgb[2] = s.color[2];
          in_shape = true;
        }
      }
      const double ripple =
          scene.tex_amp *
          std::sin(scene.tex_freq * kTau * (cos_t * j + sin_t * i) * inv_min + scene.tex_phase);
      for (int c = 0; c < 3; ++c) img.at(i, j, c) = std::clamp(rgb[c] + ripple, 0.0, 1.0);
      if (shape_mask && in_shape) shape_mask->at(i, j) = 1.0;
    }
  }
  return img;
}

void gaussian_blur(Image& img, double sigma) {
  if (sigma < 0.05) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));
    total += kernel[static_cast<std::size_t>(k + radius)];
  }
  for (double& v : kernel) v /= total;

  const int h = img.height(), w = img.width(), ch = img.channels();
  Image tmp(h, w, ch);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 img.at(i, std::clamp(j + k, 0, w - 1), c);
        tmp.at(i, j, c) = acc;
      }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int k = -radius; k <= radius; ++k)
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 tmp.at(std::clamp(i + k, 0, h - 1), j, c);
        img.at(i, j, c) = acc;
      }
}

// rotation about the gray axis; keeps luminance roughly constant
void hue_rotate(Image& img, double angle) {
  if (angle == 0.0) return;
  const double cos_a = std::cos(angle), sin_a = std::sin(angle);
  const double one_third = 1.0 / 3.0, sq = std::sqrt(1.0 / 3.0);
  const double m00 = cos_a + (1.0 - cos_a) * one_third;
  const double m01 = one_third * (1.0 - cos_a) - sq * sin_a;
  const double m02 = one_third * (1.0 - cos_a) + sq * sin_a;
  const double m[3][3] = {{m00, m01, m02}, {m02, m00, m01}, {m01, m02, m00}};
  for (int i = 0; i < img.height(); ++i)
    for (int j = 0; j < img.width(); ++j) {
      const double r = img.at(i, j, 0), g = img.at(i, j, 1), b = img.at(i, j, 2);
      for (int c = 0; c < 3; ++c)
        img.at(i, j, c) = std::clamp(m[c][0] * r + m[c][1] * g + m[c][2] * b, 0.0, 1.0);
    }
}

void degrade(Image& img, double corruption) {
  if (corruption <= 0.0) return;
  hue_rotate(img, corruption * 1.9);
  gaussian_blur(img, corruption * 2.2);
  img.clamp01();
}

void check_config(const ToyWorldConfig& config) {
  if (config.corruption < 0.0 || config.corruption > 1.0 || config.mode_collapse < 0.0 ||
      config.mode_collapse > 1.0)
    throw ConfigError("toy world: corruption and mode_collapse must be in [0,1]");
  if (config.height < 8 || config.width < 8)
    throw ConfigError("toy world: images must be at least 8x8");
  if (config.max_shapes < 1) throw ConfigError("toy world: max_shapes must be >= 1");
}

}  // namespace

Image make_toy_real(const ToyWorldConfig& config) {
  check_config(config);
  Rng rng(mix_seed(config.seed, 17));
  const Scene scene = sample_scene(rng, config.class_id, config.max_shapes);
  return render_scene(scene, config.height, config.width, nullptr);
}

Image make_toy_generated(const ToyWorldConfig& config, Field* shape_mask, bool* collapsed_out) {
  check_config(config);
  Rng rng(mix_seed(config.seed, 29));
  Scene scene = sample_scene(rng, config.class_id, config.max_shapes);
  const bool collapsed = rng.bernoulli(config.mode_collapse);
  if (collapsed) {
    // the class's one canonical layout; colors stay per-sample
    Rng canon(mix_seed(0x107a1u, static_cast<std::uint64_t>(config.class_id)));
    sample_shape_layout(canon, config.class_id, config.max_shapes, scene.shapes);
    for (Shape& s : scene.shapes) sample_shape_color(rng, config.class_id, s.color);
  }
  Image img = render_scene(scene, config.height, config.width, shape_mask);
  degrade(img, config.corruption);
  if (collapsed_out) *collapsed_out = collapsed;
  return img;
}

ToyPair make_toy_pair(const ToyWorldConfig& config) {
  ToyPair pair;
  pair.real = make_toy_real(config);
  pair.generated = make_toy_generated(config, &pair.generated_shape_mask, &pair.collapsed);
  return pair;
}

}  // namespace pixelcritic
