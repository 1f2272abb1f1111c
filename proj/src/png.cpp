// Minimal PNG codec: 8-bit grayscale/RGB/RGBA, non-interlaced, zlib
// deflate with fixed settings so rewrites are byte-identical.

#include "pixelcritic/png_io.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "pixelcritic/errors.hpp"

namespace pixelcritic {

namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

std::uint32_t get_u32_be(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::size_t len) {
  put_u32_be(out, static_cast<std::uint32_t>(len));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  if (len) out.insert(out.end(), data, data + len);
  const auto crc =
      crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> zlib_compress(const std::vector<std::uint8_t>& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> out(bound);
  if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw DataError("zlib compression failed");
  out.resize(bound);
  return out;
}

std::vector<std::uint8_t> zlib_decompress(const std::uint8_t* data, std::size_t len,
                                          std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  uLongf out_len = static_cast<uLongf>(expected);
  if (uncompress(out.data(), &out_len, data, static_cast<uLong>(len)) != Z_OK ||
      out_len != expected)
    throw DataError("corrupt PNG image data");
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

void write_png_file(const std::filesystem::path& path, int width, int height, int channels,
                    const std::vector<std::uint8_t>& pixels) {
  if (channels != 1 && channels != 3)
    throw DataError("PNG writer supports 1 or 3 channels, got " + std::to_string(channels));
  if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
    throw DataError("pixel buffer size does not match dimensions");

  static const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<std::uint8_t> file(signature, signature + 8);

  std::uint8_t ihdr[13];
  ihdr[0] = static_cast<std::uint8_t>((width >> 24) & 0xff);
  ihdr[1] = static_cast<std::uint8_t>((width >> 16) & 0xff);
  ihdr[2] = static_cast<std::uint8_t>((width >> 8) & 0xff);
  ihdr[3] = static_cast<std::uint8_t>(width & 0xff);
  ihdr[4] = static_cast<std::uint8_t>((height >> 24) & 0xff);
  ihdr[5] = static_cast<std::uint8_t>((height >> 16) & 0xff);
  ihdr[6] = static_cast<std::uint8_t>((height >> 8) & 0xff);
  ihdr[7] = static_cast<std::uint8_t>(height & 0xff);
  ihdr[8] = 8;                                             // bit depth
  ihdr[9] = channels == 1 ? 0 : 2;                         // gray / truecolor
  ihdr[10] = ihdr[11] = ihdr[12] = 0;                      // default, no interlace
  append_chunk(file, "IHDR", ihdr, 13);

  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw;
  raw.reserve((stride + 1) * static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);  // filter: none
    const std::uint8_t* row = pixels.data() + static_cast<std::size_t>(y) * stride;
    raw.insert(raw.end(), row, row + stride);
  }
  const std::vector<std::uint8_t> compressed = zlib_compress(raw);
  append_chunk(file, "IDAT", compressed.data(), compressed.size());
  append_chunk(file, "IEND", nullptr, 0);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!out) throw DataError("write failure: " + path.string());
}

RawPng read_png_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open PNG: " + path.string());
  std::vector<std::uint8_t> file((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  static const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (file.size() < 8 || std::memcmp(file.data(), signature, 8) != 0)
    throw DataError("not a PNG file: " + path.string());

  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  bool saw_ihdr = false;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = get_u32_be(file.data() + pos);
    if (pos + 12 + len > file.size()) throw DataError("truncated PNG: " + path.string());
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const std::uint8_t* data = file.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw DataError("bad IHDR: " + path.string());
      width = static_cast<int>(get_u32_be(data));
      height = static_cast<int>(get_u32_be(data + 4));
      const int bit_depth = data[8], color_type = data[9], interlace = data[12];
      if (bit_depth != 8) throw DataError("unsupported PNG bit depth: " + path.string());
      if (interlace != 0) throw DataError("interlaced PNG not supported: " + path.string());
      switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 6: channels = 4; break;
        default: throw DataError("unsupported PNG color type: " + path.string());
      }
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (!saw_ihdr || width <= 0 || height <= 0) throw DataError("malformed PNG: " + path.string());

  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  std::vector<std::uint8_t> raw =
      zlib_decompress(idat.data(), idat.size(), (stride + 1) * static_cast<std::size_t>(height));

  RawPng png;
  png.width = width;
  png.height = height;
  png.channels = channels;
  png.pixels.resize(stride * static_cast<std::size_t>(height));
  const int bpp = channels;  // bytes per pixel at depth 8
  for (int y = 0; y < height; ++y) {
    const std::uint8_t filter = raw[static_cast<std::size_t>(y) * (stride + 1)];
    const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * (stride + 1) + 1;
    std::uint8_t* dst = png.pixels.data() + static_cast<std::size_t>(y) * stride;
    const std::uint8_t* prev =
        y > 0 ? png.pixels.data() + static_cast<std::size_t>(y - 1) * stride : nullptr;
    for (std::size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<std::size_t>(bpp) ? dst[x - bpp] : 0;
      const int b = prev ? prev[x] : 0;
      const int c = (prev && x >= static_cast<std::size_t>(bpp)) ? prev[x - bpp] : 0;
      int v = src[x];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw DataError("unsupported PNG filter: " + path.string());
      }
      dst[x] = static_cast<std::uint8_t>(v & 0xff);
    }
  }
  return png;
}

}  // namespace pixelcritic
