#pragma once

#include <string>
#include <vector>

#include "pixelcritic/autodiff.hpp"
#include "pixelcritic/errornet.hpp"
#include "pixelcritic/image.hpp"

namespace pixelcritic {

// Weighted per-pixel loss. The linear form charges lambda for predicting
// an error on a real pixel and gamma for predicting no error on a
// generated pixel:
//   sum_ij w_ij * (lambda*T_ij*P_ij + gamma*(1-T_ij)*(1-P_ij))
// The log form swaps the raw probabilities for -log(1-P) and -log(P).
struct LossConfig {
  enum class Form { linear, log };

  double lambda = 5.0;
  double gamma = 1.0;
  double l2_coeff = 0.03;
  Form form = Form::linear;
  bool normalize_by_area = true;
};

// named presets: "quality" = lambda 5 / l2 0.03, "mode_collapse" = lambda 2 / l2 0.3
LossConfig apply_preset(LossConfig base, const std::string& preset);

// scalar evaluation for a single image; weight nullptr means all-ones
double pixel_loss_value(const ErrorMap& errmap, const LabelMap& label, const MaskMap* weight,
                        const LossConfig& cfg);

// graph version over a batch; errmap is [B,1,H,W], labels/weights one per
// image (weights may be empty for all-ones). Returns the mean per-image loss.
Var pixel_loss(const Var& errmap, const std::vector<LabelMap>& labels,
               const std::vector<MaskMap>& weights, const LossConfig& cfg);

// coeff * sum of squared weight values; biases and attention gains excluded
Var l2_penalty(const Model& model, double coeff);
double l2_penalty_value(const Model& model, double coeff);

}  // namespace pixelcritic
