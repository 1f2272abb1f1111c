#include "pixelcritic/train.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "pixelcritic/adam.hpp"
#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

namespace pixelcritic {

namespace {

using nlohmann::json;

struct Sample {
  Tensor input;  // [1,C,H,W]
  LabelMap label;
};

std::vector<Sample> load_samples(const std::vector<ManifestRecord>& manifest,
                                 const std::filesystem::path& dir) {
  std::vector<Sample> samples;
  samples.reserve(manifest.size());
  for (const auto& rec : manifest) {
    try {
      Sample s;
      s.input = image_to_tensor(load_record_image(rec, dir));
      s.label = load_record_label(rec, dir);
      samples.push_back(std::move(s));
    } catch (const DataError& e) {
      throw DataError("cannot load sample " + (dir / rec.image).string() + ": " + e.what());
    }
  }
  return samples;
}

Tensor stack_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                   std::size_t begin, std::size_t end) {
  const Tensor& first = samples[order[begin]].input;
  const int C = first.dim(1), H = first.dim(2), W = first.dim(3);
  Tensor batch({static_cast<int>(end - begin), C, H, W});
  const std::size_t stride = static_cast<std::size_t>(C) * H * W;
  for (std::size_t k = begin; k < end; ++k) {
    const Tensor& t = samples[order[k]].input;
    if (t.dim(1) != C || t.dim(2) != H || t.dim(3) != W)
      throw DataError("training samples have mixed dimensions");
    std::copy_n(t.data(), stride, batch.data() + (k - begin) * stride);
  }
  return batch;
}

}  // namespace

TrainResult train(Model& model, const std::vector<ManifestRecord>& manifest,
                  const std::filesystem::path& manifest_dir, const TrainConfig& tcfg,
                  const LossConfig& lcfg, const std::filesystem::path& out_dir) {
  if (tcfg.epochs < 1 || tcfg.batch < 1)
    throw ConfigError("train: epochs and batch size must be positive");
  if (manifest.empty()) throw DataError("train: manifest is empty");
  std::filesystem::create_directories(out_dir);

  std::vector<Sample> samples = load_samples(manifest, manifest_dir);
  std::vector<Var> param_list;
  std::map<std::string, Tensor*> param_ptrs;
  for (auto& [name, var] : model.params) {
    param_list.push_back(var);
    param_ptrs[name] = &var->value;
  }
  AdamState adam(tcfg.lr);

  json train_echo;
  train_echo["epochs"] = tcfg.epochs;
  train_echo["batch"] = tcfg.batch;
  train_echo["lr"] = tcfg.lr;
  train_echo["seed"] = tcfg.seed;
  train_echo["checkpoint_every"] = tcfg.checkpoint_every;
  json loss_echo;
  loss_echo["lambda"] = lcfg.lambda;
  loss_echo["gamma"] = lcfg.gamma;
  loss_echo["l2"] = lcfg.l2_coeff;
  loss_echo["form"] = lcfg.form == LossConfig::Form::linear ? "linear" : "log";
  loss_echo["normalize_by_area"] = lcfg.normalize_by_area;
  json extra;
  extra["train"] = train_echo;
  extra["loss"] = loss_echo;

  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle_rng(mix_seed(tcfg.seed, static_cast<std::uint64_t>(epoch) + 1));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(tcfg.batch)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(tcfg.batch));
      try {
        const Var input = make_const(stack_batch(samples, order, begin, end));
        std::vector<LabelMap> labels;
        labels.reserve(end - begin);
        for (std::size_t k = begin; k < end; ++k) labels.push_back(samples[order[k]].label);

        const Var out = forward_graph(model, input);
        Var loss = pixel_loss(out, labels, {}, lcfg);
        if (lcfg.l2_coeff > 0.0) loss = add(loss, l2_penalty(model, lcfg.l2_coeff));
        backward(loss, param_list);

        std::map<std::string, Tensor> grads;
        for (const auto& [name, var] : model.params) grads[name] = grad_or_zeros(var);
        adam.step(param_ptrs, grads);
        loss_sum += loss->value.item() * static_cast<double>(end - begin);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(begin / static_cast<std::size_t>(tcfg.batch)) + ": " +
                           e.what());
      }
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(samples.size());
    stats.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    result.history.push_back(stats);

    if (tcfg.checkpoint_every > 0 && (epoch + 1) % tcfg.checkpoint_every == 0 &&
        epoch + 1 < tcfg.epochs) {
      char name[32];
      std::snprintf(name, sizeof(name), "ckpt_epoch%03d.pxc", epoch);
      save_model(model, out_dir / name, extra.dump());
    }
  }

  result.final_checkpoint = out_dir / "model.pxc";
  save_model(model, result.final_checkpoint, extra.dump());

  json hist = json::array();
  for (const auto& s : result.history) {
    json e;
    e["epoch"] = s.epoch;
    e["mean_loss"] = s.mean_loss;
    e["wall_seconds"] = s.wall_seconds;
    hist.push_back(e);
  }
  std::ofstream hist_out(out_dir / "history.json", std::ios::binary);
  if (!hist_out) throw DataError("cannot write history.json in " + out_dir.string());
  hist_out << hist.dump(2) << "\n";
  return result;
}

double ranked_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& is_error) {
  if (scores.size() != is_error.size())
    throw ConfigError("ranked_auc: score/label size mismatch");
  std::size_t pos = 0;
  for (std::uint8_t e : is_error) pos += e ? 1 : 0;
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0)
    throw DataError("AUC undefined: pooled labels contain a single class");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // average ranks over tied scores
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (std::size_t k = i; k <= j; ++k)
      if (is_error[idx[k]]) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

DetectionReport evaluate_detection(const Model& model,
                                   const std::vector<ManifestRecord>& manifest,
                                   const std::filesystem::path& manifest_dir) {
  if (manifest.empty()) throw DataError("evaluate_detection: manifest is empty");
  DetectionReport report;
  std::vector<double> scores;
  std::vector<std::uint8_t> errors;
  std::size_t tp = 0, fp = 0, fn = 0;

  for (const auto& rec : manifest) {
    const Image img = load_record_image(rec, manifest_dir);
    const LabelMap label = load_record_label(rec, manifest_dir);
    const ErrorMap errmap = infer(model, img);
    std::vector<double> img_scores(errmap.size());
    std::vector<std::uint8_t> img_errors(errmap.size());
    for (std::size_t i = 0; i < errmap.size(); ++i) {
      img_scores[i] = errmap.data()[i];
      img_errors[i] = label.data()[i] < 0.5 ? 1 : 0;
      const bool predicted = img_scores[i] >= 0.5;
      if (predicted && img_errors[i]) ++tp;
      if (predicted && !img_errors[i]) ++fp;
      if (!predicted && img_errors[i]) ++fn;
    }
    const std::size_t img_pos =
        static_cast<std::size_t>(std::count(img_errors.begin(), img_errors.end(), 1));
    if (img_pos > 0 && img_pos < img_errors.size())
      report.per_image_auc.push_back(ranked_auc(img_scores, img_errors));
    scores.insert(scores.end(), img_scores.begin(), img_scores.end());
    errors.insert(errors.end(), img_errors.begin(), img_errors.end());
  }

  report.pixel_auc = ranked_auc(scores, errors);
  report.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  report.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return report;
}

}  // namespace pixelcritic
