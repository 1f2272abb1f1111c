#include "pixelcritic/loss.hpp"

#include <algorithm>
#include <cmath>

#include "pixelcritic/errors.hpp"

namespace pixelcritic {

namespace {

constexpr double kProbEps = 1e-12;

bool is_weight_name(const std::string& name) {
  const auto ends_with = [&](const char* suffix) {
    const std::size_t n = std::char_traits<char>::length(suffix);
    return name.size() >= n && name.compare(name.size() - n, n, suffix) == 0;
  };
  return !(ends_with("/b") || ends_with("/gain"));
}

void check_dims(const Field& a, const Field& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw DataError(std::string("pixel_loss: ") + what + " dims " + std::to_string(b.height()) +
                    "x" + std::to_string(b.width()) + " do not match error map " +
                    std::to_string(a.height()) + "x" + std::to_string(a.width()));
}

}  // namespace

LossConfig apply_preset(LossConfig base, const std::string& preset) {
  if (preset.empty()) return base;
  if (preset == "quality") {
    base.lambda = 5.0;
    base.gamma = 1.0;
    base.l2_coeff = 0.03;
    return base;
  }
  if (preset == "mode_collapse") {
    base.lambda = 2.0;
    base.gamma = 1.0;
    base.l2_coeff = 0.3;
    return base;
  }
  throw ConfigError("unknown loss preset '" + preset + "' (expected quality or mode_collapse)");
}

double pixel_loss_value(const ErrorMap& errmap, const LabelMap& label, const MaskMap* weight,
                        const LossConfig& cfg) {
  if (cfg.lambda <= 0.0 || cfg.gamma <= 0.0)
    throw ConfigError("pixel_loss: lambda and gamma must be positive");
  check_dims(errmap, label, "label");
  if (weight) check_dims(errmap, *weight, "weight");

  double total = 0.0;
  for (std::size_t i = 0; i < errmap.size(); ++i) {
    const double p = errmap.data()[i];
    if (!(p >= 0.0 && p <= 1.0))
      throw NumericError("pixel_loss: error map value " + std::to_string(p) + " outside [0,1]");
    const double t = label.data()[i];
    const double w = weight ? weight->data()[i] : 1.0;
    if (cfg.form == LossConfig::Form::linear) {
      total += w * (cfg.lambda * t * p + cfg.gamma * (1.0 - t) * (1.0 - p));
    } else {
      const double pc = std::clamp(p, kProbEps, 1.0 - kProbEps);
      total += w * (cfg.lambda * t * (-std::log(1.0 - pc)) +
                    cfg.gamma * (1.0 - t) * (-std::log(pc)));
    }
  }
  if (cfg.normalize_by_area) total /= static_cast<double>(errmap.size());
  return total;
}

Var pixel_loss(const Var& errmap, const std::vector<LabelMap>& labels,
               const std::vector<MaskMap>& weights, const LossConfig& cfg) {
  if (cfg.lambda <= 0.0 || cfg.gamma <= 0.0)
    throw ConfigError("pixel_loss: lambda and gamma must be positive");
  if (errmap->value.rank() != 4 || errmap->value.dim(1) != 1)
    throw DataError("pixel_loss: expected [B,1,H,W] error map, got " +
                    shape_str(errmap->value.shape()));
  const int B = errmap->value.dim(0);
  const int H = errmap->value.dim(2), W = errmap->value.dim(3);
  if (static_cast<int>(labels.size()) != B)
    throw DataError("pixel_loss: " + std::to_string(labels.size()) + " labels for batch of " +
                    std::to_string(B));
  if (!weights.empty() && static_cast<int>(weights.size()) != B)
    throw DataError("pixel_loss: weight count does not match batch");

  const std::size_t hw = static_cast<std::size_t>(H) * W;
  // per-image normalization folded into the constant coefficients
  const double scale = (cfg.normalize_by_area ? 1.0 / static_cast<double>(hw) : 1.0) /
                       static_cast<double>(B);

  Tensor real_coef({B, 1, H, W});   // multiplies the T=1 term
  Tensor gen_coef({B, 1, H, W});    // multiplies the T=0 term
  for (int b = 0; b < B; ++b) {
    const LabelMap& label = labels[static_cast<std::size_t>(b)];
    if (label.height() != H || label.width() != W)
      throw DataError("pixel_loss: label dims do not match error map");
    const MaskMap* wmap = weights.empty() ? nullptr : &weights[static_cast<std::size_t>(b)];
    if (wmap && (wmap->height() != H || wmap->width() != W))
      throw DataError("pixel_loss: weight dims do not match error map");
    for (std::size_t i = 0; i < hw; ++i) {
      const double t = label.data()[i];
      const double w = (wmap ? wmap->data()[i] : 1.0) * scale;
      real_coef[static_cast<std::size_t>(b) * hw + i] = w * cfg.lambda * t;
      gen_coef[static_cast<std::size_t>(b) * hw + i] = w * cfg.gamma * (1.0 - t);
    }
  }

  if (cfg.form == LossConfig::Form::linear) {
    const Var term_real = sum(mul_const(errmap, std::move(real_coef)));
    const Var term_gen = sum(mul_const(affine(errmap, -1.0, 1.0), std::move(gen_coef)));
    return add(term_real, term_gen);
  }
  const Var p = clamp(errmap, kProbEps, 1.0 - kProbEps);
  const Var term_real = sum(mul_const(elem_log(affine(p, -1.0, 1.0)), std::move(real_coef)));
  const Var term_gen = sum(mul_const(elem_log(p), std::move(gen_coef)));
  return affine(add(term_real, term_gen), -1.0, 0.0);
}

Var l2_penalty(const Model& model, double coeff) {
  if (coeff < 0.0) throw ConfigError("l2_penalty: coefficient must be >= 0");
  if (coeff == 0.0) return make_const(Tensor::scalar(0.0));
  Var total;
  for (const auto& [name, var] : model.params) {
    if (!is_weight_name(name)) continue;
    Var sq = sum(mul(var, var));
    total = total ? add(total, sq) : sq;
  }
  if (!total) return make_const(Tensor::scalar(0.0));
  return affine(total, coeff, 0.0);
}

double l2_penalty_value(const Model& model, double coeff) {
  if (coeff < 0.0) throw ConfigError("l2_penalty: coefficient must be >= 0");
  double total = 0.0;
  for (const auto& [name, var] : model.params) {
    if (!is_weight_name(name)) continue;
    for (std::size_t i = 0; i < var->value.size(); ++i)
      total += var->value[i] * var->value[i];
  }
  return coeff * total;
}

}  // namespace pixelcritic
