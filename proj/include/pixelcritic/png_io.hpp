#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pixelcritic {

struct RawPng {
  int width = 0, height = 0, channels = 0;  // channels: 1, 3 or 4
  std::vector<std::uint8_t> pixels;         // row-major, interleaved
};

void write_png_file(const std::filesystem::path& path, int width, int height, int channels,
                    const std::vector<std::uint8_t>& pixels);
RawPng read_png_file(const std::filesystem::path& path);

}  // namespace pixelcritic
