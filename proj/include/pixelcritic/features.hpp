#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pixelcritic/image.hpp"
#include "pixelcritic/synth.hpp"

namespace pixelcritic {

// deterministic Image -> feature vector map used by the Fréchet harness
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  virtual std::vector<double> extract(const Image& image) const = 0;
  virtual std::string identity() const = 0;
};

// fixed seeded 3-stage conv stack + global average pool, d = 64
std::unique_ptr<FeatureExtractor> make_random_conv_extractor(std::uint64_t seed);

// small conv classifier trained on labelled toy real images; its
// global-average-pooled encoder output doubles as the feature embedding
struct ClassifierConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  std::vector<int> stage_widths = {8, 16, 32};
  int convs_per_stage = 2;
  int classes = 4;
  int epochs = 5;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

// returns final-epoch training accuracy; writes checkpoint + JSON sidecar
double train_toy_classifier(const std::vector<ManifestRecord>& manifest,
                            const std::filesystem::path& manifest_dir,
                            const ClassifierConfig& cfg,
                            const std::filesystem::path& checkpoint_path);

std::unique_ptr<FeatureExtractor> make_trained_encoder_extractor(
    const std::filesystem::path& checkpoint_path);

}  // namespace pixelcritic
