#include <doctest.h>

#include <cmath>

#include "pixelcritic/collage.hpp"
#include "pixelcritic/errors.hpp"
#include "pixelcritic/perlin.hpp"
#include "pixelcritic/rng.hpp"

using namespace pixelcritic;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.unit();
  return img;
}

// rasterized disc size, the oracle for artifact label counting
int disc_pixel_count(int radius, int center_i, int center_j, int h, int w) {
  int count = 0;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dy * dy + dx * dx > radius * radius) continue;
      const int i = center_i + dy, j = center_j + dx;
      if (i >= 0 && i < h && j >= 0 && j < w) ++count;
    }
  return count;
}

}  // namespace

TEST_CASE("perlin raw value is zero at every lattice node") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const int n = 64, m = 64, cells = 4;
    const ScalarField raw = perlin_field_raw(n, m, cells, seed);
    for (int ci = 0; ci < cells; ++ci)
      for (int cj = 0; cj < cells; ++cj) {
        const int i = ci * n / cells, j = cj * m / cells;
        CHECK(std::abs(raw.at(i, j)) < 1e-12);
      }
  }
}

TEST_CASE("perlin fields are pure functions of their arguments") {
  const ScalarField a = perlin_field(48, 40, 3, 123);
  const ScalarField b = perlin_field(48, 40, 3, 123);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
  const ScalarField c = perlin_field(48, 40, 3, 124);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] != c.data()[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("perlin continuity: adjacent pixels differ by less than 0.15") {
  // swept over 100 seeds at 64x64 with 4 cells before freezing the bound
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ScalarField f = perlin_field(64, 64, 4, seed);
    for (int i = 0; i + 1 < 64; ++i)
      for (int j = 0; j < 64; ++j)
        worst = std::max(worst, std::abs(f.at(i, j) - f.at(i + 1, j)));
  }
  CHECK(worst < 0.15);
}

TEST_CASE("perlin output is normalized to [0,1]") {
  const ScalarField f = perlin_field(32, 32, 4, 9);
  CHECK(f.min() == doctest::Approx(0.0));
  CHECK(f.max() == doctest::Approx(1.0));
}

TEST_CASE("perlin rejects degenerate lattices") {
  CHECK_THROWS_AS(perlin_field(32, 32, 1, 0), ConfigError);
}

TEST_CASE("field_to_alpha on a constant-one field is all ones") {
  Field ones(8, 8, 1.0);
  const MaskMap alpha = field_to_alpha(ones, 0.5, 0.2);
  for (std::size_t i = 0; i < alpha.size(); ++i) CHECK(alpha.data()[i] == 1.0);
}

TEST_CASE("field_to_alpha with zero softness is a hard threshold") {
  Field f(8, 8);
  f.at(0, 0) = 0.4;
  f.at(0, 1) = 0.6;
  const MaskMap alpha = field_to_alpha(f, 0.5, 0.0);
  CHECK(alpha.at(0, 0) == 0.0);
  CHECK(alpha.at(0, 1) == 1.0);
}

TEST_CASE("alpha centered at the threshold is one half") {
  Field f(8, 8, 0.5);
  const MaskMap alpha = field_to_alpha(f, 0.5, 0.3);
  for (std::size_t i = 0; i < alpha.size(); ++i)
    CHECK(alpha.data()[i] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("real-pixel fraction decreases monotonically as the threshold rises") {
  // direct evaluation on 10 seeded fields
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ScalarField f = perlin_field(64, 64, 4, seed);
    double prev = 2.0;
    double first = -1.0, last = -1.0;
    for (const double thr : {0.3, 0.4, 0.5, 0.6, 0.7}) {
      const MaskMap alpha = field_to_alpha(f, thr, 0.0);
      double frac = 0.0;
      for (std::size_t i = 0; i < alpha.size(); ++i) frac += alpha.data()[i] >= 0.5 ? 1.0 : 0.0;
      frac /= static_cast<double>(alpha.size());
      CHECK(frac <= prev);
      if (first < 0.0) first = frac;
      last = frac;
      prev = frac;
    }
    CHECK(last < first);
  }
}

TEST_CASE("collage with alpha one reproduces the real image exactly") {
  const Image real = random_image(16, 16, 1);
  const Image gen = random_image(16, 16, 2);
  const CollageSample s = collage(real, gen, MaskMap(16, 16, 1.0));
  for (std::size_t i = 0; i < real.size(); ++i) CHECK(s.image.data()[i] == real.data()[i]);
  for (std::size_t i = 0; i < s.label.size(); ++i) CHECK(s.label.data()[i] == 1.0);
}

TEST_CASE("collage with alpha zero reproduces the generated image exactly") {
  const Image real = random_image(16, 16, 3);
  const Image gen = random_image(16, 16, 4);
  const CollageSample s = collage(real, gen, MaskMap(16, 16, 0.0));
  for (std::size_t i = 0; i < gen.size(); ++i) CHECK(s.image.data()[i] == gen.data()[i]);
  for (std::size_t i = 0; i < s.label.size(); ++i) CHECK(s.label.data()[i] == 0.0);
}

TEST_CASE("collage at alpha one half averages and labels real by the tie rule") {
  const Image real = random_image(8, 8, 5);
  const Image gen = random_image(8, 8, 6);
  const CollageSample s = collage(real, gen, MaskMap(8, 8, 0.5));
  for (std::size_t i = 0; i < real.size(); ++i)
    CHECK(s.image.data()[i] == doctest::Approx(0.5 * (real.data()[i] + gen.data()[i])));
  for (std::size_t i = 0; i < s.label.size(); ++i) CHECK(s.label.data()[i] == 1.0);
}

TEST_CASE("label consistency: softness 0 labels mark exactly the real pixels") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Image real = random_image(32, 32, seed * 2 + 100);
    const Image gen = random_image(32, 32, seed * 2 + 101);
    const MaskMap alpha = field_to_alpha(perlin_field(32, 32, 4, seed), 0.5, 0.0);
    const CollageSample s = collage(real, gen, alpha);
    for (int i = 0; i < 32; ++i)
      for (int j = 0; j < 32; ++j) {
        const bool is_real = s.image.at(i, j, 0) == real.at(i, j, 0) &&
                             s.image.at(i, j, 1) == real.at(i, j, 1) &&
                             s.image.at(i, j, 2) == real.at(i, j, 2);
        CHECK(is_real == (s.label.at(i, j) == 1.0));
      }
  }
}

TEST_CASE("collage rejects mismatched dimensions naming the operand") {
  const Image real = random_image(16, 16, 7);
  const Image small = random_image(8, 16, 8);
  try {
    collage(real, small, MaskMap(16, 16, 1.0));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("generated") != std::string::npos);
  }
  try {
    collage(real, random_image(16, 16, 9), MaskMap(8, 8, 1.0));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("alpha") != std::string::npos);
  }
}

TEST_CASE("radius range [0,0] leaves the sample unchanged") {
  const Image real = random_image(24, 24, 10);
  const Image gen = random_image(24, 24, 11);
  const CollageSample s = collage(real, gen, MaskMap(24, 24, 1.0));
  const CollageSample after = apply_circular_artifact(s, real, 0, 0, 99);
  for (std::size_t i = 0; i < s.image.size(); ++i)
    CHECK(after.image.data()[i] == s.image.data()[i]);
  for (std::size_t i = 0; i < s.label.size(); ++i)
    CHECK(after.label.data()[i] == s.label.data()[i]);
}

TEST_CASE("identity rotation onto the source center reproduces the disc but flips labels") {
  const Image real = random_image(32, 32, 12);
  const Image gen = random_image(32, 32, 13);
  CollageSample s = collage(real, gen, MaskMap(32, 32, 1.0));
  const Image before = s.image;
  paste_rotated_disc(s, s.image, 5, 16, 16, 0.0, 16, 16);
  for (std::size_t i = 0; i < s.image.size(); ++i) CHECK(s.image.data()[i] == before.data()[i]);
  int zeros = 0;
  for (std::size_t i = 0; i < s.label.size(); ++i) zeros += s.label.data()[i] == 0.0 ? 1 : 0;
  CHECK(zeros == disc_pixel_count(5, 16, 16, 32, 32));
}

TEST_CASE("artifact label flips match the rasterized disc oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Image real = random_image(48, 48, seed + 50);
    const Image gen = random_image(48, 48, seed + 90);
    const CollageSample s = collage(real, gen, MaskMap(48, 48, 1.0));

    // replay the op's own draws to predict the disc placement
    Rng rng(seed);
    const int radius = static_cast<int>(rng.uniform_int(2, 9));
    (void)rng.uniform_int(radius, 47 - radius);
    (void)rng.uniform_int(radius, 47 - radius);
    (void)rng.uniform(0.0, 6.283185307179586477);
    const int dst_i = static_cast<int>(rng.uniform_int(0, 47));
    const int dst_j = static_cast<int>(rng.uniform_int(0, 47));

    const CollageSample after = apply_circular_artifact(s, real, 2, 9, seed);
    int zeros = 0;
    for (std::size_t i = 0; i < after.label.size(); ++i)
      zeros += after.label.data()[i] == 0.0 ? 1 : 0;
    const int expected = disc_pixel_count(radius, dst_i, dst_j, 48, 48);
    CHECK(zeros == expected);
    // spec band: at least pi*(r-1)^2 when fully inside, at most pi*r^2 + slack
    if (dst_i >= radius && dst_i < 48 - radius && dst_j >= radius && dst_j < 48 - radius) {
      const double pi = 3.14159265358979;
      CHECK(static_cast<double>(zeros) >= pi * (radius - 1) * (radius - 1));
      CHECK(static_cast<double>(zeros) <= pi * radius * radius + 4.0 * radius + 4.0);
    }
  }
}

TEST_CASE("artifacts never flip labels from generated back to real") {
  const Image real = random_image(32, 32, 31);
  const Image gen = random_image(32, 32, 32);
  const MaskMap alpha = field_to_alpha(perlin_field(32, 32, 4, 3), 0.5, 0.0);
  CollageSample s = collage(real, gen, alpha);
  const LabelMap before = s.label;
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    s = apply_circular_artifact(s, real, 2, 6, seed);
  for (std::size_t i = 0; i < before.size(); ++i)
    if (before.data()[i] == 0.0) CHECK(s.label.data()[i] == 0.0);
}

TEST_CASE("artifact radius range validation") {
  const Image real = random_image(16, 16, 40);
  const CollageSample s = collage(real, real, MaskMap(16, 16, 1.0));
  CHECK_THROWS_AS(apply_circular_artifact(s, real, 5, 3, 0), ConfigError);
  CHECK_THROWS_AS(apply_circular_artifact(s, real, 0, 8, 0), ConfigError);
}
