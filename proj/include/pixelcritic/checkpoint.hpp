#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pixelcritic/tensor.hpp"

namespace pixelcritic {

// Parameter checkpoints: magic "PXC1", then per parameter (in map order):
// u32 LE name length, UTF-8 name, u32 LE rank, u32 LE dims, float64 LE data.
void save_checkpoint(const std::map<std::string, Tensor>& params,
                     const std::filesystem::path& path);
std::map<std::string, Tensor> load_checkpoint(const std::filesystem::path& path);

// Feature dumps: magic "PXF1", u32 LE count, u32 LE dim, float64 LE vectors.
void save_features(const std::vector<std::vector<double>>& features,
                   const std::filesystem::path& path);
std::vector<std::vector<double>> load_features(const std::filesystem::path& path);

}  // namespace pixelcritic
