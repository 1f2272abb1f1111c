#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pixelcritic/errornet.hpp"
#include "pixelcritic/loss.hpp"
#include "pixelcritic/synth.hpp"

namespace pixelcritic {

struct TrainConfig {
  int epochs = 20;
  int batch = 16;
  double lr = 2e-4;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoints; 0 = final only
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::filesystem::path final_checkpoint;
};

// Minimizes the pixel loss plus L2 penalty with Adam over shuffled
// mini-batches. Writes checkpoints and history.json into out_dir; the
// final checkpoint is always model.pxc.
TrainResult train(Model& model, const std::vector<ManifestRecord>& manifest,
                  const std::filesystem::path& manifest_dir, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const std::filesystem::path& out_dir);

struct DetectionReport {
  double pixel_auc = 0.0;           // pooled over all pixels
  double precision = 0.0;           // at threshold 0.5, error = positive class
  double recall = 0.0;
  std::vector<double> per_image_auc;  // images with both classes present
};

// Scores every labelled sample and reports how well high probabilities
// line up with generated/artifact pixels (label 0).
DetectionReport evaluate_detection(const Model& model,
                                   const std::vector<ManifestRecord>& manifest,
                                   const std::filesystem::path& manifest_dir);

// rank-based AUC with tied-score handling; is_error marks the positive class
double ranked_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& is_error);

}  // namespace pixelcritic
