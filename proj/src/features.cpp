#include "pixelcritic/features.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "pixelcritic/adam.hpp"
#include "pixelcritic/autodiff.hpp"
#include "pixelcritic/checkpoint.hpp"
#include "pixelcritic/errornet.hpp"
#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

namespace {

using nlohmann::json;

// plain conv stack: convs_per_stage 3x3 conv+relu per stage, avg-pool 2x
// between stages, global average pool at the end
struct ConvStack {
  std::vector<int> widths;
  int convs_per_stage = 1;
  int channels = 3;
  std::map<std::string, Var> params;

  void init(Rng& rng) {
    int in_ch = channels;
    for (std::size_t s = 0; s < widths.size(); ++s) {
      const int out_ch = widths[s];
      for (int c = 0; c < convs_per_stage; ++c) {
        const std::string prefix =
            "stage" + std::to_string(s) + "/conv" + std::to_string(c);
        params[prefix + "/w"] = make_param(he_conv_init(rng, out_ch, in_ch, 3), prefix + "/w");
        params[prefix + "/b"] = make_param(Tensor({out_ch}), prefix + "/b");
        in_ch = out_ch;
      }
    }
  }

  Var embed(const Var& input) const {
    Var cur = input;
    for (std::size_t s = 0; s < widths.size(); ++s) {
      for (int c = 0; c < convs_per_stage; ++c) {
        const std::string prefix =
            "stage" + std::to_string(s) + "/conv" + std::to_string(c);
        cur = relu(bias_channels(conv2d(cur, params.at(prefix + "/w"), 1, 1),
                                 params.at(prefix + "/b")));
      }
      if (s + 1 < widths.size()) cur = pool2d_avg(cur, 2);
    }
    return global_avg_pool(cur);
  }
};

class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed) : seed_(seed) {
    stack_.widths = {16, 32, 64};
    stack_.convs_per_stage = 1;
    stack_.channels = 3;
    Rng rng(seed);
    stack_.init(rng);
  }

  int dim() const override { return stack_.widths.back(); }

  std::vector<double> extract(const Image& image) const override {
    if (image.channels() != stack_.channels)
      throw DataError("random_conv extractor expects " + std::to_string(stack_.channels) +
                      "-channel images");
    const Var out = stack_.embed(make_const(image_to_tensor(image)));
    return std::vector<double>(out->value.data(), out->value.data() + out->value.size());
  }

  std::string identity() const override {
    return "random_conv(seed=" + std::to_string(seed_) + ",d=" + std::to_string(dim()) + ")";
  }

 private:
  std::uint64_t seed_;
  ConvStack stack_;
};

struct ClassifierModel {
  ClassifierConfig cfg;
  ConvStack stack;
  Var fc_w, fc_b;

  void init() {
    stack.widths = cfg.stage_widths;
    stack.convs_per_stage = cfg.convs_per_stage;
    stack.channels = cfg.channels;
    Rng rng(cfg.seed);
    stack.init(rng);
    const int d = cfg.stage_widths.back();
    Tensor w({d, cfg.classes});
    const double stddev = std::sqrt(2.0 / static_cast<double>(d));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = stddev * rng.normal();
    fc_w = make_param(std::move(w), "fc/w");
    fc_b = make_param(Tensor({cfg.classes}), "fc/b");
  }

  std::map<std::string, Tensor> values() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, var] : stack.params) out[name] = var->value;
    out["fc/w"] = fc_w->value;
    out["fc/b"] = fc_b->value;
    return out;
  }
};

json classifier_sidecar(const ClassifierConfig& cfg) {
  json j;
  j["kind"] = "toy_classifier";
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["channels"] = cfg.channels;
  j["stage_widths"] = cfg.stage_widths;
  j["convs_per_stage"] = cfg.convs_per_stage;
  j["classes"] = cfg.classes;
  return j;
}

ClassifierConfig classifier_from_sidecar(const std::filesystem::path& checkpoint_path) {
  std::ifstream in(sidecar_path(checkpoint_path), std::ios::binary);
  if (!in)
    throw DataError("missing classifier sidecar: " + sidecar_path(checkpoint_path).string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("bad classifier sidecar: " + std::string(e.what()));
  }
  if (j.value("kind", std::string()) != "toy_classifier")
    throw DataError("not a classifier checkpoint: " + checkpoint_path.string());
  ClassifierConfig cfg;
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.channels = j.at("channels").get<int>();
  cfg.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  cfg.convs_per_stage = j.at("convs_per_stage").get<int>();
  cfg.classes = j.at("classes").get<int>();
  return cfg;
}

class TrainedEncoderExtractor final : public FeatureExtractor {
 public:
  explicit TrainedEncoderExtractor(const std::filesystem::path& checkpoint_path)
      : path_(checkpoint_path) {
    model_.cfg = classifier_from_sidecar(checkpoint_path);
    model_.init();
    std::map<std::string, Tensor> values = load_checkpoint(checkpoint_path);
    for (auto& [name, var] : model_.stack.params) {
      auto it = values.find(name);
      if (it == values.end())
        throw DataError("classifier checkpoint missing parameter '" + name + "'");
      var->value = std::move(it->second);
    }
  }

  int dim() const override { return model_.cfg.stage_widths.back(); }

  std::vector<double> extract(const Image& image) const override {
    if (image.height() != model_.cfg.height || image.width() != model_.cfg.width ||
        image.channels() != model_.cfg.channels)
      throw DataError("trained_encoder extractor expects " + std::to_string(model_.cfg.height) +
                      "x" + std::to_string(model_.cfg.width) + " images");
    const Var out = model_.stack.embed(make_const(image_to_tensor(image)));
    return std::vector<double>(out->value.data(), out->value.data() + out->value.size());
  }

  std::string identity() const override {
    return "trained_encoder(" + path_.string() + ",d=" + std::to_string(dim()) + ")";
  }

 private:
  std::filesystem::path path_;
  ClassifierModel model_;
};

}  // namespace

std::unique_ptr<FeatureExtractor> make_random_conv_extractor(std::uint64_t seed) {
  return std::make_unique<RandomConvExtractor>(seed);
}

std::unique_ptr<FeatureExtractor> make_trained_encoder_extractor(
    const std::filesystem::path& checkpoint_path) {
  if (!std::filesystem::exists(checkpoint_path))
    throw DataError("trained_encoder checkpoint not found: " + checkpoint_path.string());
  return std::make_unique<TrainedEncoderExtractor>(checkpoint_path);
}

double train_toy_classifier(const std::vector<ManifestRecord>& manifest,
                            const std::filesystem::path& manifest_dir,
                            const ClassifierConfig& cfg,
                            const std::filesystem::path& checkpoint_path) {
  if (manifest.empty()) throw DataError("train_toy_classifier: manifest is empty");
  if (cfg.classes < 2) throw ConfigError("train_toy_classifier: need at least 2 classes");

  // map class names to indices in sorted order
  std::map<std::string, int> class_index;
  for (const auto& rec : manifest) class_index.emplace(rec.cls, 0);
  if (static_cast<int>(class_index.size()) != cfg.classes)
    throw DataError("train_toy_classifier: manifest has " + std::to_string(class_index.size()) +
                    " classes, config says " + std::to_string(cfg.classes));
  int next = 0;
  for (auto& [cls, idx] : class_index) idx = next++;

  std::vector<Tensor> inputs;
  std::vector<int> labels;
  for (const auto& rec : manifest) {
    inputs.push_back(image_to_tensor(load_record_image(rec, manifest_dir)));
    labels.push_back(class_index.at(rec.cls));
  }

  ClassifierModel model;
  model.cfg = cfg;
  model.init();
  std::vector<Var> param_list;
  std::map<std::string, Tensor*> param_ptrs;
  for (auto& [name, var] : model.stack.params) {
    param_list.push_back(var);
    param_ptrs[name] = &var->value;
  }
  param_list.push_back(model.fc_w);
  param_list.push_back(model.fc_b);
  param_ptrs["fc/w"] = &model.fc_w->value;
  param_ptrs["fc/b"] = &model.fc_b->value;

  AdamState adam(cfg.lr);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  double accuracy = 0.0;
  const std::size_t stride = inputs.front().size();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 101));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    std::size_t correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch));
      Tensor batch({static_cast<int>(end - begin), cfg.channels, cfg.height, cfg.width});
      std::vector<int> batch_labels;
      for (std::size_t k = begin; k < end; ++k) {
        std::copy_n(inputs[order[k]].data(), stride, batch.data() + (k - begin) * stride);
        batch_labels.push_back(labels[order[k]]);
      }
      const Var emb = model.stack.embed(make_const(std::move(batch)));
      const Var logits = linear(emb, model.fc_w, model.fc_b);
      const Var loss = cross_entropy_with_logits(logits, batch_labels);
      backward(loss, param_list);
      std::map<std::string, Tensor> grads;
      for (auto& [name, var] : model.stack.params) grads[name] = grad_or_zeros(var);
      grads["fc/w"] = grad_or_zeros(model.fc_w);
      grads["fc/b"] = grad_or_zeros(model.fc_b);
      adam.step(param_ptrs, grads);

      for (std::size_t k = begin; k < end; ++k) {
        const double* row = logits->value.data() + (k - begin) * static_cast<std::size_t>(cfg.classes);
        const int pred = static_cast<int>(std::max_element(row, row + cfg.classes) - row);
        if (pred == batch_labels[k - begin]) ++correct;
      }
    }
    accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
  }

  save_checkpoint(model.values(), checkpoint_path);
  std::ofstream side(sidecar_path(checkpoint_path), std::ios::binary);
  if (!side) throw DataError("cannot write classifier sidecar for " + checkpoint_path.string());
  side << classifier_sidecar(cfg).dump(2) << "\n";
  return accuracy;
}

}  // namespace pixelcritic
