#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "gradcheck.hpp"
#include "pixelcritic/errornet.hpp"
#include "pixelcritic/errors.hpp"
#include "pixelcritic/loss.hpp"
#include "pixelcritic/rng.hpp"

using namespace pixelcritic;
namespace fs = std::filesystem;

namespace {

ArchConfig tiny_arch() {
  ArchConfig cfg;
  cfg.height = cfg.width = 16;
  cfg.stage_widths = {8, 16};
  cfg.convs_per_stage = 2;
  return cfg;
}

Image random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w, 3);
  for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = rng.unit();
  return img;
}

// closed-form parameter count from the construction rules
std::size_t expected_param_count(const ArchConfig& raw) {
  const ArchConfig cfg = resolve_arch(raw);
  const int stages = static_cast<int>(cfg.stage_widths.size());
  const auto conv_params = [](int in, int out, int k) {
    return static_cast<std::size_t>(out) * in * k * k + static_cast<std::size_t>(out);
  };
  const auto attn_params = [&](int c) {
    const int reduced = c / cfg.attention_reduction;
    return 2 * static_cast<std::size_t>(reduced) * c + static_cast<std::size_t>(c) * c + 1;
  };
  std::size_t total = 0;
  for (int s = 0; s < stages; ++s) {
    const int w = cfg.stage_widths[static_cast<std::size_t>(s)];
    int in = s == 0 ? cfg.channels : cfg.stage_widths[static_cast<std::size_t>(s - 1)];
    in += cfg.hook_channels[static_cast<std::size_t>(s)];
    for (int c = 0; c < cfg.convs_per_stage; ++c) {
      total += conv_params(in, w, 3);
      in = w;
    }
    for (int idx : *cfg.encoder_attention)
      if (idx == s) total += attn_params(w);
  }
  for (int s = stages - 2; s >= 0; --s) {
    const int w = cfg.stage_widths[static_cast<std::size_t>(s)];
    int in = cfg.stage_widths[static_cast<std::size_t>(s + 1)] + w;
    for (int c = 0; c < cfg.convs_per_stage; ++c) {
      total += conv_params(in, w, 3);
      in = w;
    }
    for (int idx : *cfg.decoder_attention)
      if (idx == s) total += attn_params(w);
  }
  total += conv_params(cfg.stage_widths.front(), 1, 1);
  return total;
}

}  // namespace

TEST_CASE("parameter count matches the closed-form formula") {
  SUBCASE("two stages, width 4 base, 16x16 input") {
    ArchConfig cfg;
    cfg.height = cfg.width = 16;
    cfg.stage_widths = {8, 16};
    cfg.convs_per_stage = 5;
    const Model model = build_model(cfg, 3);
    CHECK(model.parameter_count() == expected_param_count(cfg));
  }
  SUBCASE("default three-stage config") {
    ArchConfig cfg;
    const Model model = build_model(cfg, 4);
    CHECK(model.parameter_count() == expected_param_count(cfg));
  }
  SUBCASE("with hook channels") {
    ArchConfig cfg = tiny_arch();
    cfg.hook_channels = {0, 4};
    const Model model = build_model(cfg, 5);
    CHECK(model.parameter_count() == expected_param_count(cfg));
  }
}

TEST_CASE("identical seeds build bit-identical models") {
  const Model a = build_model(tiny_arch(), 77);
  const Model b = build_model(tiny_arch(), 77);
  REQUIRE(a.params.size() == b.params.size());
  for (const auto& [name, var] : a.params) {
    const auto& other = b.params.at(name)->value;
    for (std::size_t i = 0; i < var->value.size(); ++i) CHECK(var->value[i] == other[i]);
  }
  const Model c = build_model(tiny_arch(), 78);
  CHECK(c.params.at("enc0/conv0/w")->value[0] != a.params.at("enc0/conv0/w")->value[0]);
}

TEST_CASE("attention with zero gain is the identity map") {
  Rng rng(5);
  const int C = 16;
  Tensor x({1, C, 4, 4});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  Tensor wf({C / 8, C}), wg({C / 8, C}), wh({C, C});
  for (std::size_t i = 0; i < wf.size(); ++i) wf[i] = rng.normal();
  for (std::size_t i = 0; i < wg.size(); ++i) wg[i] = rng.normal();
  for (std::size_t i = 0; i < wh.size(); ++i) wh[i] = rng.normal();
  const Var out = self_attention(make_const(x), make_const(wf), make_const(wg), make_const(wh),
                                 make_const(Tensor::scalar(0.0)));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out->value[i] == x[i]);
}

TEST_CASE("freshly built model equals its attention-free twin (gains start at 0)") {
  ArchConfig with_attn = tiny_arch();
  with_attn.encoder_attention = std::vector<int>{1};
  with_attn.decoder_attention = std::vector<int>{0};
  ArchConfig without = tiny_arch();
  without.encoder_attention = std::vector<int>{};
  without.decoder_attention = std::vector<int>{};

  const Model a = build_model(with_attn, 11);
  Model b = build_model(without, 11);
  // conv draws happen in the same order, so copy the shared tensors over
  for (auto& [name, var] : b.params) var->value = a.params.at(name)->value;

  const Image img = random_image(16, 16, 8);
  const ErrorMap ma = infer(a, img);
  const ErrorMap mb = infer(b, img);
  for (std::size_t i = 0; i < ma.size(); ++i) CHECK(ma.data()[i] == mb.data()[i]);
}

TEST_CASE("1x1 spatial attention reduces to x + gain*h(x)") {
  Rng rng(6);
  const int C = 8;
  Tensor x({1, C, 1, 1}), wf({1, C}), wg({1, C}), wh({C, C});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  for (std::size_t i = 0; i < wf.size(); ++i) wf[i] = rng.normal();
  for (std::size_t i = 0; i < wg.size(); ++i) wg[i] = rng.normal();
  for (std::size_t i = 0; i < wh.size(); ++i) wh[i] = rng.normal();
  const double gain = 0.7;
  const Var out = self_attention(make_const(x), make_const(wf), make_const(wg), make_const(wh),
                                 make_const(Tensor::scalar(gain)));
  for (int c = 0; c < C; ++c) {
    double h = 0.0;
    for (int k = 0; k < C; ++k) h += wh.at({c, k}) * x[static_cast<std::size_t>(k)];
    CHECK(out->value[static_cast<std::size_t>(c)] ==
          doctest::Approx(x[static_cast<std::size_t>(c)] + gain * h).epsilon(1e-12));
  }
}

TEST_CASE("attention matches a nested-loop oracle and rows are stochastic") {
  Rng rng(7);
  const int C = 8, H = 4, W = 4, P = H * W;
  Tensor x({1, C, H, W}), wf({1, C}), wg({1, C}), wh({C, C});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.normal();
  for (std::size_t i = 0; i < wf.size(); ++i) wf[i] = rng.normal();
  for (std::size_t i = 0; i < wg.size(); ++i) wg[i] = rng.normal();
  for (std::size_t i = 0; i < wh.size(); ++i) wh[i] = rng.normal();
  const double gain = 1.3;

  // oracle: explicit loops over positions
  std::vector<double> f(P), g(P);
  std::vector<std::vector<double>> h(static_cast<std::size_t>(C), std::vector<double>(P));
  for (int p = 0; p < P; ++p) {
    double fa = 0.0, ga = 0.0;
    for (int c = 0; c < C; ++c) {
      const double xv = x[static_cast<std::size_t>(c) * P + p];
      fa += wf[static_cast<std::size_t>(c)] * xv;
      ga += wg[static_cast<std::size_t>(c)] * xv;
    }
    f[static_cast<std::size_t>(p)] = fa;
    g[static_cast<std::size_t>(p)] = ga;
    for (int c = 0; c < C; ++c) {
      double acc = 0.0;
      for (int k = 0; k < C; ++k)
        acc += wh.at({c, k}) * x[static_cast<std::size_t>(k) * P + p];
      h[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)] = acc;
    }
  }
  std::vector<std::vector<double>> attn(static_cast<std::size_t>(P), std::vector<double>(P));
  for (int j = 0; j < P; ++j) {
    double total = 0.0;
    for (int i = 0; i < P; ++i) {
      attn[j][i] = std::exp(f[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>(i)]);
      total += attn[j][i];
    }
    for (int i = 0; i < P; ++i) attn[j][i] /= total;
  }

  const Var out = self_attention(make_const(x), make_const(wf), make_const(wg), make_const(wh),
                                 make_const(Tensor::scalar(gain)));
  for (int j = 0; j < P; ++j) {
    double row_sum = 0.0;
    for (int i = 0; i < P; ++i) row_sum += attn[j][i];
    CHECK(std::abs(row_sum - 1.0) < 1e-12);
  }
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < P; ++j) {
      double attended = 0.0;
      for (int i = 0; i < P; ++i) attended += attn[j][i] * h[static_cast<std::size_t>(c)][i];
      const double want = x[static_cast<std::size_t>(c) * P + j] + gain * attended;
      CHECK(std::abs(out->value[static_cast<std::size_t>(c) * P + j] - want) < 1e-10);
    }
}

TEST_CASE("attention stages require widths divisible by the reduction") {
  ArchConfig cfg = tiny_arch();
  cfg.stage_widths = {6, 12};  // 6 not divisible by 8
  cfg.encoder_attention = std::vector<int>{0};
  CHECK_THROWS_AS(build_model(cfg, 0), ConfigError);
}

TEST_CASE("fresh models output values in (0,1) with mean near one half") {
  // measured over 20 seeds; band [0.3, 0.7] frozen afterwards
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Model model = build_model(tiny_arch(), seed);
    const ErrorMap map = infer(model, random_image(16, 16, seed + 300));
    double mean = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
      CHECK(map.data()[i] > 0.0);
      CHECK(map.data()[i] < 1.0);
      mean += map.data()[i];
    }
    mean /= static_cast<double>(map.size());
    CHECK(mean > 0.3);
    CHECK(mean < 0.7);
  }
}

TEST_CASE("forward output shape is [N,M,1] and deterministic") {
  const Model model = build_model(tiny_arch(), 21);
  const Image img = random_image(16, 16, 22);
  const ErrorMap a = infer(model, img);
  const ErrorMap b = infer(model, img);
  REQUIRE(a.height() == 16);
  REQUIRE(a.width() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("forward rejects images with the wrong size") {
  const Model model = build_model(tiny_arch(), 23);
  try {
    infer(model, random_image(32, 16, 24));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("16x16x3") != std::string::npos);
    CHECK(msg.find("32x16x3") != std::string::npos);
  }
}

TEST_CASE("spatial size must divide by 2^(stages-1)") {
  ArchConfig cfg = tiny_arch();
  cfg.height = 18;
  CHECK_THROWS_AS(build_model(cfg, 0), ConfigError);
}

TEST_CASE("feature hook: disabled hook leaves forward unchanged") {
  ArchConfig cfg = tiny_arch();
  const Model plain = build_model(cfg, 31);
  Model hooked = build_model(cfg, 31);
  hooked.hook = [](const Tensor&, int, int, int) -> Tensor {
    throw std::logic_error("must not be called with zero budget");
  };
  const Image img = random_image(16, 16, 32);
  const ErrorMap a = infer(plain, img);
  const ErrorMap b = infer(hooked, img);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("feature hook: constant-zero extractor equals missing extractor") {
  ArchConfig cfg = tiny_arch();
  cfg.hook_channels = {0, 4};
  Model with_zero = build_model(cfg, 33);
  with_zero.hook = [](const Tensor& input, int, int h, int w) {
    return Tensor({input.dim(0), 4, h, w});
  };
  const Model without = build_model(cfg, 33);  // same weights, zeros concatenated internally
  const Image img = random_image(16, 16, 34);
  const ErrorMap a = infer(with_zero, img);
  const ErrorMap b = infer(without, img);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("feature hook: toy extractor is deterministic and shape-checked at every stage") {
  ArchConfig cfg = tiny_arch();
  cfg.hook_channels = {2, 4};
  Model model = build_model(cfg, 35);
  Rng rng(36);
  Tensor proj({4, 3});
  for (std::size_t i = 0; i < proj.size(); ++i) proj[i] = rng.normal();
  model.hook = [proj](const Tensor& input, int stage, int h, int w) {
    const int channels = stage == 0 ? 2 : 4;
    // fixed random projection of channel means, broadcast spatially
    Tensor out({input.dim(0), channels, h, w});
    for (int b = 0; b < input.dim(0); ++b)
      for (int c = 0; c < channels; ++c) {
        double acc = 0.0;
        for (int ic = 0; ic < input.dim(1); ++ic)
          acc += proj.at({c, ic}) * input.at({b, ic, 0, 0});
        for (int i = 0; i < h; ++i)
          for (int j = 0; j < w; ++j) out.at({b, c, i, j}) = acc;
      }
    return out;
  };
  const Image img = random_image(16, 16, 37);
  const ErrorMap a = infer(model, img);
  const ErrorMap b = infer(model, img);
  REQUIRE(a.height() == 16);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("feature hook: channel overflow against the budget is a config error") {
  ArchConfig cfg = tiny_arch();
  cfg.hook_channels = {2, 0};
  Model model = build_model(cfg, 38);
  model.hook = [](const Tensor& input, int, int h, int w) {
    return Tensor({input.dim(0), 5, h, w});
  };
  CHECK_THROWS_AS(infer(model, random_image(16, 16, 39)), ConfigError);
}

TEST_CASE("model checkpoints round-trip through save and load") {
  const fs::path dir = fs::temp_directory_path() / "pixelcritic_test_model";
  fs::create_directories(dir);
  ArchConfig cfg = tiny_arch();
  const Model model = build_model(cfg, 41);
  save_model(model, dir / "m.pxc");
  const Model back = load_model(dir / "m.pxc");
  REQUIRE(back.params.size() == model.params.size());
  const Image img = random_image(16, 16, 42);
  const ErrorMap a = infer(model, img);
  const ErrorMap b = infer(back, img);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
}

TEST_CASE("end-to-end gradients of a 2-stage model match finite differences") {
  ArchConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.stage_widths = {8, 16};
  cfg.convs_per_stage = 2;
  Model model = build_model(cfg, 43);

  const Image img = random_image(8, 8, 44);
  LabelMap label(8, 8);
  Rng rng(45);
  for (std::size_t i = 0; i < label.size(); ++i) label.data()[i] = rng.unit() < 0.5 ? 0.0 : 1.0;
  LossConfig lcfg;
  lcfg.l2_coeff = 0.01;

  std::vector<Var> params;
  for (const auto& [name, var] : model.params) params.push_back(var);
  const auto build_loss = [&] {
    const Var out = forward_graph(model, make_const(image_to_tensor(img)));
    return add(pixel_loss(out, {label}, {}, lcfg), l2_penalty(model, lcfg.l2_coeff));
  };
  const auto result = pixelcritic::testing::check_gradients(params, build_loss, 1e-3, 1e-5);
  CHECK_MESSAGE(result.ok, result.detail);
}
