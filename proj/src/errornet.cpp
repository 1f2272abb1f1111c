#include "pixelcritic/errornet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "pixelcritic/checkpoint.hpp"
#include "pixelcritic/errors.hpp"

namespace pixelcritic {

namespace {

using nlohmann::json;

bool contains(const std::vector<int>& v, int x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

ArchConfig resolve_arch(ArchConfig config) {
  const int stages = static_cast<int>(config.stage_widths.size());
  if (stages < 2) throw ConfigError("arch: at least 2 stages required");
  for (int w : config.stage_widths)
    if (w < 1) throw ConfigError("arch: stage widths must be positive");
  if (config.convs_per_stage < 1) throw ConfigError("arch: convs_per_stage must be >= 1");
  if (config.channels != 1 && config.channels != 3)
    throw ConfigError("arch: input channels must be 1 or 3");
  if (config.attention_reduction < 1)
    throw ConfigError("arch: attention_reduction must be >= 1");

  const int down = 1 << (stages - 1);
  if (config.height % down != 0 || config.width % down != 0)
    throw ConfigError("arch: spatial size " + std::to_string(config.height) + "x" +
                      std::to_string(config.width) + " not divisible by 2^(stages-1) = " +
                      std::to_string(down));

  if (!config.encoder_attention) config.encoder_attention = std::vector<int>{stages - 1};
  if (!config.decoder_attention) config.decoder_attention = std::vector<int>{stages - 2};
  for (int s : *config.encoder_attention)
    if (s < 0 || s >= stages)
      throw ConfigError("arch: encoder attention stage " + std::to_string(s) + " out of range");
  for (int s : *config.decoder_attention)
    if (s < 0 || s >= stages - 1)
      throw ConfigError("arch: decoder attention stage " + std::to_string(s) + " out of range");

  const auto check_attention_width = [&](int stage) {
    const int c = config.stage_widths[static_cast<std::size_t>(stage)];
    if (c < config.attention_reduction || c % config.attention_reduction != 0)
      throw ConfigError("arch: stage width " + std::to_string(c) +
                        " not divisible by attention reduction " +
                        std::to_string(config.attention_reduction));
  };
  for (int s : *config.encoder_attention) check_attention_width(s);
  for (int s : *config.decoder_attention) check_attention_width(s);

  config.hook_channels.resize(static_cast<std::size_t>(stages), 0);
  for (int c : config.hook_channels)
    if (c < 0) throw ConfigError("arch: hook channels must be >= 0");
  return config;
}

Tensor he_conv_init(Rng& rng, int out_ch, int in_ch, int k) {
  Tensor t({out_ch, in_ch, k, k});
  const double stddev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
  return t;
}

namespace {

void add_conv_params(Model& model, Rng& rng, const std::string& prefix, int in_ch, int out_ch,
                     int k) {
  model.params[prefix + "/w"] = make_param(he_conv_init(rng, out_ch, in_ch, k), prefix + "/w");
  model.params[prefix + "/b"] = make_param(Tensor({out_ch}), prefix + "/b");
}

void add_attention_params(Model& model, Rng& rng, const std::string& prefix, int channels,
                          int reduction) {
  const int reduced = channels / reduction;
  const double stddev = std::sqrt(2.0 / static_cast<double>(channels));
  const auto init = [&](int rows) {
    Tensor t({rows, channels});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.normal();
    return t;
  };
  model.params[prefix + "/wf"] = make_param(init(reduced), prefix + "/wf");
  model.params[prefix + "/wg"] = make_param(init(reduced), prefix + "/wg");
  model.params[prefix + "/wh"] = make_param(init(channels), prefix + "/wh");
  model.params[prefix + "/gain"] = make_param(Tensor::scalar(0.0), prefix + "/gain");
}

int stage_input_channels(const ArchConfig& cfg, int stage, bool decoder) {
  const auto& w = cfg.stage_widths;
  if (!decoder) {
    const int base = stage == 0 ? cfg.channels : w[static_cast<std::size_t>(stage - 1)];
    return base + cfg.hook_channels[static_cast<std::size_t>(stage)];
  }
  return w[static_cast<std::size_t>(stage + 1)] + w[static_cast<std::size_t>(stage)];
}

// convs_per_stage convs: one channel-changing entry conv, then residual
// pairs (identity added every second conv), then one plain conv if the
// remainder is odd
Var stage_convs(const Model& model, const std::string& prefix, int convs, Var cur) {
  const auto p = [&](int idx, const char* leaf) {
    return model.params.at(prefix + "/conv" + std::to_string(idx) + "/" + leaf);
  };
  cur = relu(bias_channels(conv2d(cur, p(0, "w"), 1, 1), p(0, "b")));
  int idx = 1;
  const int pairs = (convs - 1) / 2;
  for (int pair = 0; pair < pairs; ++pair) {
    Var z = relu(bias_channels(conv2d(cur, p(idx, "w"), 1, 1), p(idx, "b")));
    ++idx;
    z = bias_channels(conv2d(z, p(idx, "w"), 1, 1), p(idx, "b"));
    ++idx;
    cur = relu(add(z, cur));
  }
  if ((convs - 1) % 2 == 1) {
    cur = relu(bias_channels(conv2d(cur, p(idx, "w"), 1, 1), p(idx, "b")));
    ++idx;
  }
  return cur;
}

Var apply_attention(const Model& model, const std::string& prefix, const Var& cur) {
  return self_attention(cur, model.params.at(prefix + "/wf"), model.params.at(prefix + "/wg"),
                        model.params.at(prefix + "/wh"), model.params.at(prefix + "/gain"));
}

}  // namespace

Model build_model(const ArchConfig& raw, std::uint64_t seed) {
  Model model;
  model.config = resolve_arch(raw);
  const ArchConfig& cfg = model.config;
  const int stages = static_cast<int>(cfg.stage_widths.size());
  Rng rng(seed);

  for (int s = 0; s < stages; ++s) {
    const std::string prefix = "enc" + std::to_string(s);
    int in_ch = stage_input_channels(cfg, s, false);
    const int out_ch = cfg.stage_widths[static_cast<std::size_t>(s)];
    for (int c = 0; c < cfg.convs_per_stage; ++c) {
      add_conv_params(model, rng, prefix + "/conv" + std::to_string(c), in_ch, out_ch, 3);
      in_ch = out_ch;
    }
    if (contains(*cfg.encoder_attention, s))
      add_attention_params(model, rng, prefix + "/attn", out_ch, cfg.attention_reduction);
  }
  for (int s = stages - 2; s >= 0; --s) {
    const std::string prefix = "dec" + std::to_string(s);
    int in_ch = stage_input_channels(cfg, s, true);
    const int out_ch = cfg.stage_widths[static_cast<std::size_t>(s)];
    for (int c = 0; c < cfg.convs_per_stage; ++c) {
      add_conv_params(model, rng, prefix + "/conv" + std::to_string(c), in_ch, out_ch, 3);
      in_ch = out_ch;
    }
    if (contains(*cfg.decoder_attention, s))
      add_attention_params(model, rng, prefix + "/attn", out_ch, cfg.attention_reduction);
  }
  add_conv_params(model, rng, "head", cfg.stage_widths.front(), 1, 1);
  return model;
}

Tensor nearest_resample(const Tensor& maps, int target_h, int target_w) {
  if (maps.rank() != 4)
    throw ConfigError("nearest_resample expects [B,C,H,W], got " + shape_str(maps.shape()));
  const int B = maps.dim(0), C = maps.dim(1), H = maps.dim(2), W = maps.dim(3);
  if (H == target_h && W == target_w) return maps;
  Tensor out({B, C, target_h, target_w});
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = maps.data() + static_cast<std::size_t>(bc) * H * W;
    double* dst = out.data() + static_cast<std::size_t>(bc) * target_h * target_w;
    for (int i = 0; i < target_h; ++i) {
      const int si = std::min(H - 1, i * H / target_h);
      for (int j = 0; j < target_w; ++j) {
        const int sj = std::min(W - 1, j * W / target_w);
        dst[static_cast<std::size_t>(i) * target_w + j] = src[static_cast<std::size_t>(si) * W + sj];
      }
    }
  }
  return out;
}

Var forward_graph(const Model& model, const Var& input) {
  const ArchConfig& cfg = model.config;
  if (input->value.rank() != 4 || input->value.dim(1) != cfg.channels ||
      input->value.dim(2) != cfg.height || input->value.dim(3) != cfg.width)
    throw DataError("forward: expected [B," + std::to_string(cfg.channels) + "," +
                    std::to_string(cfg.height) + "," + std::to_string(cfg.width) + "], got " +
                    shape_str(input->value.shape()));
  const int stages = static_cast<int>(cfg.stage_widths.size());
  const int B = input->value.dim(0);

  Var cur = input;
  std::vector<Var> skips;
  int h = cfg.height, w = cfg.width;
  for (int s = 0; s < stages; ++s) {
    const int budget = cfg.hook_channels[static_cast<std::size_t>(s)];
    if (budget > 0) {
      Tensor feats;
      if (model.hook) {
        feats = model.hook(input->value, s, h, w);
        if (feats.rank() != 4 || feats.dim(0) != B)
          throw ConfigError("feature hook returned shape " + shape_str(feats.shape()) +
                            " for batch of " + std::to_string(B));
        if (feats.dim(1) != budget)
          throw ConfigError("feature hook channel budget overflow at stage " + std::to_string(s) +
                            ": got " + std::to_string(feats.dim(1)) + ", configured " +
                            std::to_string(budget));
        feats = nearest_resample(feats, h, w);
      } else {
        feats = Tensor({B, budget, h, w});
      }
      cur = concat_channels(cur, make_const(std::move(feats)));
    }
    const std::string prefix = "enc" + std::to_string(s);
    cur = stage_convs(model, prefix, cfg.convs_per_stage, cur);
    if (contains(*cfg.encoder_attention, s)) cur = apply_attention(model, prefix + "/attn", cur);
    skips.push_back(cur);
    if (s < stages - 1) {
      cur = pool2d_avg(cur, 2);
      h /= 2;
      w /= 2;
    }
  }
  for (int s = stages - 2; s >= 0; --s) {
    cur = upsample_nearest(cur, 2);
    cur = concat_channels(cur, skips[static_cast<std::size_t>(s)]);
    const std::string prefix = "dec" + std::to_string(s);
    cur = stage_convs(model, prefix, cfg.convs_per_stage, cur);
    if (contains(*cfg.decoder_attention, s)) cur = apply_attention(model, prefix + "/attn", cur);
  }
  cur = bias_channels(conv2d(cur, model.params.at("head/w"), 1, 0), model.params.at("head/b"));
  return sigmoid(cur);
}

ErrorMap infer(const Model& model, const Image& image) {
  if (image.height() != model.config.height || image.width() != model.config.width ||
      image.channels() != model.config.channels)
    throw DataError("infer: model expects " + std::to_string(model.config.height) + "x" +
                    std::to_string(model.config.width) + "x" +
                    std::to_string(model.config.channels) + ", image is " +
                    std::to_string(image.height()) + "x" + std::to_string(image.width()) + "x" +
                    std::to_string(image.channels()));
  const Var out = forward_graph(model, make_const(image_to_tensor(image)));
  ErrorMap map = tensor_to_field(out->value);
  for (std::size_t i = 0; i < map.size(); ++i)
    map.data()[i] = std::clamp(map.data()[i], 1e-12, 1.0 - 1e-12);
  return map;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, var] : params) n += var->value.size();
  return n;
}

std::map<std::string, Tensor> Model::parameter_values() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, var] : params) out[name] = var->value;
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint_path) {
  std::filesystem::path p = checkpoint_path;
  p += ".json";
  return p;
}

namespace {

json arch_to_json(const ArchConfig& cfg) {
  json j;
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["channels"] = cfg.channels;
  j["stage_widths"] = cfg.stage_widths;
  j["convs_per_stage"] = cfg.convs_per_stage;
  j["attention_reduction"] = cfg.attention_reduction;
  j["encoder_attention"] = cfg.encoder_attention.value_or(std::vector<int>{});
  j["decoder_attention"] = cfg.decoder_attention.value_or(std::vector<int>{});
  j["hook_channels"] = cfg.hook_channels;
  return j;
}

ArchConfig arch_from_json(const json& j) {
  ArchConfig cfg;
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.channels = j.at("channels").get<int>();
  cfg.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  cfg.convs_per_stage = j.at("convs_per_stage").get<int>();
  cfg.attention_reduction = j.at("attention_reduction").get<int>();
  cfg.encoder_attention = j.at("encoder_attention").get<std::vector<int>>();
  cfg.decoder_attention = j.at("decoder_attention").get<std::vector<int>>();
  cfg.hook_channels = j.at("hook_channels").get<std::vector<int>>();
  return cfg;
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& checkpoint_path,
                const std::string& extra_json) {
  save_checkpoint(model.parameter_values(), checkpoint_path);
  json side;
  side["arch"] = arch_to_json(model.config);
  if (!extra_json.empty()) {
    const json extra = json::parse(extra_json);
    for (auto it = extra.begin(); it != extra.end(); ++it) side[it.key()] = it.value();
  }
  std::ofstream out(sidecar_path(checkpoint_path), std::ios::binary);
  if (!out) throw DataError("cannot write sidecar for " + checkpoint_path.string());
  out << side.dump(2) << "\n";
}

Model load_model(const std::filesystem::path& checkpoint_path) {
  std::ifstream side_in(sidecar_path(checkpoint_path), std::ios::binary);
  if (!side_in) throw DataError("missing sidecar: " + sidecar_path(checkpoint_path).string());
  json side;
  try {
    side_in >> side;
  } catch (const json::exception& e) {
    throw DataError("bad sidecar " + sidecar_path(checkpoint_path).string() + ": " + e.what());
  }
  Model model;
  model.config = resolve_arch(arch_from_json(side.at("arch")));

  // rebuild structure with a throwaway seed, then overwrite values so any
  // missing/extra parameter is caught
  Model skeleton = build_model(model.config, 0);
  std::map<std::string, Tensor> values = load_checkpoint(checkpoint_path);
  for (auto& [name, var] : skeleton.params) {
    auto it = values.find(name);
    if (it == values.end())
      throw DataError("checkpoint missing parameter '" + name + "': " + checkpoint_path.string());
    if (!(var->value.same_shape(it->second)))
      throw DataError("checkpoint parameter '" + name + "' has shape " +
                      shape_str(it->second.shape()) + ", expected " +
                      shape_str(var->value.shape()));
    var->value = std::move(it->second);
    values.erase(it);
  }
  if (!values.empty())
    throw DataError("checkpoint has unknown parameter '" + values.begin()->first + "': " +
                    checkpoint_path.string());
  model.params = std::move(skeleton.params);
  return model;
}

}  // namespace pixelcritic
