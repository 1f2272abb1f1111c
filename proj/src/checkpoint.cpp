#include "pixelcritic/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "pixelcritic/errors.hpp"

namespace pixelcritic {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DataError("truncated file while reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& out, const double* values, std::size_t count) {
  // little-endian host assumed; serialize via byte copy
  static_assert(sizeof(double) == 8);
  out.write(reinterpret_cast<const char*>(values), static_cast<std::streamsize>(count * 8));
}

void read_f64(std::istream& in, double* values, std::size_t count) {
  in.read(reinterpret_cast<char*>(values), static_cast<std::streamsize>(count * 8));
  if (!in) throw DataError("truncated file while reading float64 data");
}

}  // namespace

void save_checkpoint(const std::map<std::string, Tensor>& params,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open checkpoint for writing: " + path.string());
  out.write("PXC1", 4);
  for (const auto& [name, tensor] : params) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    write_f64(out, tensor.data(), tensor.size());
  }
  if (!out) throw DataError("write failure on checkpoint: " + path.string());
}

std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PXC1", 4) != 0)
    throw DataError("not a parameter checkpoint (bad magic): " + path.string());
  std::map<std::string, Tensor> params;
  while (true) {
    in.peek();
    if (in.eof()) break;
    const std::uint32_t name_len = read_u32(in);
    if (name_len > 4096) throw DataError("implausible name length in checkpoint");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw DataError("truncated checkpoint: " + path.string());
    const std::uint32_t rank = read_u32(in);
    if (rank > 8) throw DataError("implausible tensor rank in checkpoint");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(in));
    Tensor t(shape);
    read_f64(in, t.data(), t.size());
    if (!params.emplace(std::move(name), std::move(t)).second)
      throw DataError("duplicate parameter name in checkpoint: " + path.string());
  }
  return params;
}

void save_features(const std::vector<std::vector<double>>& features,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open feature dump for writing: " + path.string());
  const std::size_t dim = features.empty() ? 0 : features.front().size();
  for (const auto& f : features)
    if (f.size() != dim) throw DataError("inconsistent feature dimensions in dump");
  out.write("PXF1", 4);
  write_u32(out, static_cast<std::uint32_t>(features.size()));
  write_u32(out, static_cast<std::uint32_t>(dim));
  for (const auto& f : features) write_f64(out, f.data(), f.size());
  if (!out) throw DataError("write failure on feature dump: " + path.string());
}

std::vector<std::vector<double>> load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open feature dump: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "PXF1", 4) != 0)
    throw DataError("not a feature dump (bad magic): " + path.string());
  const std::uint32_t count = read_u32(in);
  const std::uint32_t dim = read_u32(in);
  std::vector<std::vector<double>> features(count, std::vector<double>(dim));
  for (auto& f : features) read_f64(in, f.data(), f.size());
  return features;
}

}  // namespace pixelcritic
