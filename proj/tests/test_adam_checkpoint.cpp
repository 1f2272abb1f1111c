#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pixelcritic/adam.hpp"
#include "pixelcritic/checkpoint.hpp"
#include "pixelcritic/errors.hpp"
#include "pixelcritic/rng.hpp"

using namespace pixelcritic;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "pixelcritic_test_ckpt";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("adam leaves parameters untouched under zero gradients") {
  Tensor p({3}, {1.0, -2.0, 0.5});
  std::map<std::string, Tensor*> params{{"p", &p}};
  std::map<std::string, Tensor> grads{{"p", Tensor({3})}};
  AdamState adam;
  adam.step(params, grads);
  CHECK(adam.step_count() == 1);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == -2.0);
  CHECK(p[2] == 0.5);
}

TEST_CASE("adam first step with unit gradient moves by about -lr") {
  // bias correction at t=1 makes m_hat = g and v_hat = g^2, so the update
  // is -lr * 1/(1+eps)
  Tensor p({1}, {0.0});
  std::map<std::string, Tensor*> params{{"p", &p}};
  std::map<std::string, Tensor> grads{{"p", Tensor({1}, {1.0})}};
  AdamState adam(2e-4);
  adam.step(params, grads);
  CHECK(p[0] == doctest::Approx(-2e-4 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("identical parameters with identical gradients get identical updates") {
  Tensor a({2}, {0.3, 0.3});
  Tensor b({2}, {0.3, 0.3});
  std::map<std::string, Tensor*> params{{"a", &a}, {"b", &b}};
  AdamState adam;
  for (int step = 0; step < 5; ++step) {
    std::map<std::string, Tensor> grads{{"a", Tensor({2}, {0.2, -0.1})},
                                        {"b", Tensor({2}, {0.2, -0.1})}};
    adam.step(params, grads);
  }
  CHECK(a[0] == b[0]);
  CHECK(a[1] == b[1]);
}

TEST_CASE("adam refuses non-finite gradients and names the parameter") {
  Tensor p({1}, {0.0});
  std::map<std::string, Tensor*> params{{"weights/w", &p}};
  std::map<std::string, Tensor> grads{{"weights/w", Tensor({1}, {std::nan("")})}};
  AdamState adam;
  try {
    adam.step(params, grads);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("weights/w") != std::string::npos);
  }
  CHECK(adam.step_count() == 0);
  CHECK(p[0] == 0.0);
}

TEST_CASE("checkpoint round-trips names, shapes and values") {
  Rng rng(5);
  std::map<std::string, Tensor> params;
  params["enc0/conv0/w"] = Tensor({2, 3, 3, 3});
  params["enc0/conv0/b"] = Tensor({2});
  params["head/w"] = Tensor({1, 4, 1, 1});
  for (auto& [name, t] : params)
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();

  const fs::path path = temp_dir() / "roundtrip.pxc";
  save_checkpoint(params, path);
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == params.size());
  for (const auto& [name, t] : params) {
    REQUIRE(loaded.count(name) == 1);
    REQUIRE(loaded.at(name).same_shape(t));
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(loaded.at(name)[i] == t[i]);
  }
}

TEST_CASE("checkpoint load rejects unknown magic") {
  const fs::path path = temp_dir() / "bad_magic.pxc";
  std::ofstream out(path, std::ios::binary);
  out << "NOPE" << std::string(64, '\0');
  out.close();
  CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("feature dump round-trips") {
  std::vector<std::vector<double>> feats = {{1.0, 2.5, -3.0}, {0.0, 1e-9, 4.0}};
  const fs::path path = temp_dir() / "feats.pxf";
  save_features(feats, path);
  const auto loaded = load_features(path);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded[0].size() == 3);
  CHECK(loaded[0][1] == 2.5);
  CHECK(loaded[1][2] == 4.0);

  std::ofstream out(path, std::ios::binary);
  out << "PXQ9";
  out.close();
  CHECK_THROWS_AS(load_features(path), DataError);
}
