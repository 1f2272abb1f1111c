#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pixelcritic/errors.hpp"
#include "pixelcritic/image.hpp"
#include "pixelcritic/rng.hpp"

using namespace pixelcritic;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "pixelcritic_test_png";
  fs::create_directories(dir);
  return dir;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("byte quantization follows round(v*255) and b/255") {
  CHECK(float_to_byte(0.0) == 0);
  CHECK(float_to_byte(1.0) == 255);
  CHECK(float_to_byte(0.5) == 128);  // round(127.5) away from zero
  CHECK(byte_to_float(51) == doctest::Approx(0.2));
  CHECK(float_to_byte(byte_to_float(77)) == 77);
}

TEST_CASE("png round-trip preserves quantized pixels exactly") {
  Rng rng(19);
  Image img(12, 9, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.unit();
  const fs::path path = temp_dir() / "roundtrip.png";
  save_png(img, path);
  const Image back = load_png(path);
  REQUIRE(back.height() == 12);
  REQUIRE(back.width() == 9);
  REQUIRE(back.channels() == 3);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(float_to_byte(back.data()[i]) == float_to_byte(img.data()[i]));

  // second write is byte-identical
  const fs::path path2 = temp_dir() / "roundtrip2.png";
  save_png(img, path2);
  CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("label maps serialize as {0,255} and binarize on load") {
  Field label(8, 8);
  label.at(2, 3) = 1.0;
  label.at(7, 7) = 0.6;  // >= 0.5 counts as real
  const fs::path path = temp_dir() / "label.png";
  save_label_png(label, path);
  const Field back = load_label_png(path);
  CHECK(back.at(2, 3) == 1.0);
  CHECK(back.at(7, 7) == 1.0);
  CHECK(back.at(0, 0) == 0.0);
}

TEST_CASE("grayscale field dump round-trips through quantization") {
  Field f(8, 10);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 10; ++j) f.at(i, j) = (i * 10 + j) / 80.0;
  const fs::path path = temp_dir() / "field.png";
  save_field_png(f, path);
  const Field back = load_field_png(path);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 10; ++j)
      CHECK(float_to_byte(back.at(i, j)) == float_to_byte(f.at(i, j)));
}

TEST_CASE("reading a non-png file fails cleanly") {
  const fs::path path = temp_dir() / "not_a_png.png";
  std::ofstream out(path, std::ios::binary);
  out << "just text";
  out.close();
  CHECK_THROWS_AS(load_png(path), DataError);
}

TEST_CASE("image tensor conversion round-trips") {
  Rng rng(20);
  Image img(8, 8, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.unit();
  const Image back = tensor_to_image(image_to_tensor(img));
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(back.data()[i] == img.data()[i]);
}
