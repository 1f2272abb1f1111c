#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pixelcritic/collage.hpp"
#include "pixelcritic/image.hpp"

namespace pixelcritic {

// One JSON Lines manifest record. Paths are relative to the manifest's
// directory; empty strings serialize as null.
struct ManifestRecord {
  std::string image;
  std::string label;
  std::string cls;
  std::string tag;  // "real" | "generated" | "collage"
  std::uint64_t seed = 0;
};

void save_manifest(const std::vector<ManifestRecord>& records,
                   const std::filesystem::path& path);
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);

Image load_record_image(const ManifestRecord& record, const std::filesystem::path& base_dir);
Field load_record_label(const ManifestRecord& record, const std::filesystem::path& base_dir);

struct CollageParams {
  int lattice_cells = 4;
  double threshold = 0.5;
  double softness = 0.1;
  int min_artifacts = 0;
  int max_artifacts = 3;
  int min_radius = 3;
  int max_radius = 8;
  bool within_class = true;
};

// Builds `count` collage samples from the two source sets, writing images,
// label maps and a manifest into out_dir. Sample i uses seed base_seed + i,
// so the result is reproducible regardless of scheduling.
std::vector<ManifestRecord> synthesize_training_set(
    const std::vector<ManifestRecord>& real, const std::filesystem::path& real_dir,
    const std::vector<ManifestRecord>& generated, const std::filesystem::path& generated_dir,
    int count, const CollageParams& params, std::uint64_t seed,
    const std::filesystem::path& out_dir);

struct ToySetParams {
  int height = 64;
  int width = 64;
  int classes = 4;
  int count = 200;
  double corruption_min = 0.0;
  double corruption_max = 0.0;
  double mode_collapse = 0.0;
  bool generated = false;  // false = real side, true = degraded side
};

// classes cycle i % classes, so per-class counts are equal when
// count % classes == 0
std::vector<ManifestRecord> synthesize_toy_set(const ToySetParams& params, std::uint64_t seed,
                                               const std::filesystem::path& out_dir,
                                               const std::string& prefix);

}  // namespace pixelcritic
