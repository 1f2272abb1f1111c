#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pixelcritic/autodiff.hpp"
#include "pixelcritic/image.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

// Encoder-decoder detector: per stage, convs_per_stage 3x3 convs with
// residual additions every two convs, average-pool 2x between encoder
// stages, nearest upsample + skip concatenation on the way back up, and a
// final 1x1 conv + sigmoid producing a per-pixel error probability.
// Self-attention layers sit at the configured stages with their gain
// initialized to 0, so a fresh model computes the plain convolutional path.
struct ArchConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  std::vector<int> stage_widths = {16, 32, 64};
  int convs_per_stage = 5;
  int attention_reduction = 8;
  // nullopt resolves to the deepest encoder stage / its mirror in the decoder;
  // decoder indices name the encoder stage being restored
  std::optional<std::vector<int>> encoder_attention;
  std::optional<std::vector<int>> decoder_attention;
  std::vector<int> hook_channels;  // extra input channels per encoder stage
};

// fills attention defaults, pads hook_channels, validates everything
ArchConfig resolve_arch(ArchConfig config);

// Optional feature injection: called once per encoder stage that has a
// nonzero channel budget, with the original input batch and the stage's
// spatial dims. The returned maps are treated as constants (no gradient
// flows into the extractor) and nearest-resampled if their spatial dims
// do not match the stage.
using FeatureHook = std::function<Tensor(const Tensor& input, int stage, int height, int width)>;

struct Model {
  ArchConfig config;                 // resolved
  std::map<std::string, Var> params; // leaves with requires_grad
  FeatureHook hook;                  // empty = no injection

  std::size_t parameter_count() const;
  std::map<std::string, Tensor> parameter_values() const;
};

Model build_model(const ArchConfig& config, std::uint64_t seed);

// builds the forward graph for a [B,C,H,W] batch; output is [B,1,H,W]
Var forward_graph(const Model& model, const Var& input);

// single-image convenience; output clamped into (0,1)
ErrorMap infer(const Model& model, const Image& image);

void save_model(const Model& model, const std::filesystem::path& checkpoint_path,
                const std::string& extra_json = std::string());
Model load_model(const std::filesystem::path& checkpoint_path);

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint_path);

// He-initialized conv kernel [out,in,k,k]; shared with the small
// classifier used for feature extraction
Tensor he_conv_init(Rng& rng, int out_ch, int in_ch, int k);

Tensor nearest_resample(const Tensor& maps, int target_h, int target_w);

}  // namespace pixelcritic
