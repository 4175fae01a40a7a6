#include <array>
#include <cmath>
#include <limits>
#include <random>

#include "deshadow/physics.hpp"
#include "oracles.hpp"

// Last, so its CHECK wins over the one c10 defines.
#include <doctest.h>

using namespace deshadow;
using namespace deshadow::testing;

namespace {

ShadowParams uniform(float w, float b) {
  ShadowParams p;
  p.w = {w, w, w};
  p.b = {b, b, b};
  return p;
}

}  // namespace

TEST_SUITE("physics") {

TEST_CASE("relight examples") {
  std::mt19937_64 rng(2);
  const auto img = random_image(rng, 4, 5);
  CHECK(relight(img, ShadowParams::identity()) == img);

  RasterImage px(1, 1, std::vector<float>{0.2f, 0.3f, 0.4f});
  const auto out = relight(px, uniform(2.0f, 0.05f));
  CHECK(out.at(0, 0, 0) == doctest::Approx(0.45f));
  CHECK(out.at(0, 0, 1) == doctest::Approx(0.65f));
  CHECK(out.at(0, 0, 2) == doctest::Approx(0.85f));

  RasterImage half(1, 1, 0.5f);
  CHECK(relight(half, uniform(10.0f, 0.0f)).at(0, 0, 0) == 1.0f);
}

TEST_CASE("relight rejects out-of-bound parameters") {
  RasterImage img(2, 2, 0.5f);
  CHECK_THROWS_AS(relight(img, uniform(0.5f, 0.0f)), std::invalid_argument);
  CHECK_THROWS_AS(relight(img, uniform(2.0f, 0.2f)), std::invalid_argument);
  CHECK_NOTHROW(relight(img, uniform(-3.0f, 0.5f), ParamBounds::unlimited()));
}

TEST_CASE("relight preserves order per channel") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> w(1.0f, 10.0f), b(-25.0f / 255, 25.0f / 255);
  for (int t = 0; t < 20; ++t) {
    const auto p = uniform(w(rng), b(rng));
    const auto img = random_image(rng, 1, 50);
    const auto out = relight(img, p);
    for (int i = 0; i < 50; ++i)
      for (int j = 0; j < 50; ++j)
        if (img.at(0, i, 0) <= img.at(0, j, 0)) CHECK(out.at(0, i, 0) <= out.at(0, j, 0));
  }
}

TEST_CASE("compose examples") {
  std::mt19937_64 rng(3);
  const auto s = random_image(rng, 3, 3), r = random_image(rng, 3, 3);
  CHECK(compose(s, r, MatteLayer(3, 3, 0.0f)) == s);
  CHECK(compose(s, r, MatteLayer(3, 3, 1.0f)) == r);
  RasterImage a(1, 1, 0.2f), b(1, 1, 0.6f);
  CHECK(compose(a, b, MatteLayer(1, 1, 0.5f)).at(0, 0, 1) == doctest::Approx(0.4f));
  CHECK_THROWS_AS(compose(s, RasterImage(2, 3), MatteLayer(3, 3)), std::invalid_argument);
  CHECK_THROWS_AS(compose(s, r, MatteLayer(3, 2)), std::invalid_argument);
}

TEST_CASE("identity relight is a fixed point of compose") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const auto img = random_image(rng, 6, 6);
    const auto a = random_matte(rng, 6, 6);
    const auto out = compose(img, relight(img, ShadowParams::identity()), a);
    for (std::size_t i = 0; i < img.data().size(); ++i) {
      CHECK(out.data()[i] == doctest::Approx(img.data()[i]).epsilon(1e-6));
    }
  }
}

TEST_CASE("compose is monotone in alpha when relit is brighter") {
  std::mt19937_64 rng(5);
  const auto s = random_image(rng, 1, 8);
  const auto r = relight(s, uniform(3.0f, 0.0f));
  float prev[24];
  for (int k = 0; k <= 10; ++k) {
    const auto out = compose(s, r, MatteLayer(1, 8, k / 10.0f));
    for (int i = 0; i < 24; ++i) {
      if (k) CHECK(out.data()[i] >= prev[i] - 1e-7f);
      prev[i] = out.data()[i];
    }
  }
}

TEST_CASE("squash examples") {
  std::array<float, 6> zeros{};
  const auto mid = squash_params(zeros);
  for (int k = 0; k < 3; ++k) {
    CHECK(mid.w[k] == doctest::Approx(5.5f));
    CHECK(mid.b[k] == 0.0f);
  }
  std::array<float, 6> big{100, 100, 100, 1, 1, 1};
  const auto sat = squash_params(big);
  for (int k = 0; k < 3; ++k) {
    CHECK(sat.w[k] == doctest::Approx(10.0f));
    CHECK(sat.b[k] == doctest::Approx(25.0 / 255.0 * std::tanh(1.0)).epsilon(1e-6));
  }
  CHECK(sat.b[0] == doctest::Approx(0.0747).epsilon(1e-3));
  std::array<float, 6> bad{0, std::numeric_limits<float>::quiet_NaN(), 0, 0, 0, 0};
  CHECK_THROWS_AS(squash_params(bad), std::invalid_argument);
  bad[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(squash_params(bad), std::invalid_argument);
}

TEST_CASE("squash output always lies in the bounds") {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> n(0.0f, 20.0f);
  for (int t = 0; t < 2000; ++t) {
    std::array<float, 6> raw;
    for (auto& v : raw) v = n(rng);
    CHECK(squash_params(raw).within(ParamBounds::standard()));
    CHECK(squash_params(raw, ParamBounds::unlimited()).within(ParamBounds::unlimited()));
  }
}

TEST_CASE("matte validates its values") {
  CHECK_THROWS_AS(MatteLayer(1, 2, std::vector<float>{0.5f, 1.5f}), std::invalid_argument);
  CHECK_THROWS_AS(MatteLayer(1, 1, std::vector<float>{std::nanf("")}), std::invalid_argument);
  MatteLayer m(1, 1);
  m.set(0, 0, 3.0f);
  CHECK(m.at(0, 0) == 1.0f);
}

TEST_CASE("params json round trip") {
  ShadowParams p = uniform(2.5f, 0.01f);
  p.w[2] = 7.0f;
  nlohmann::json j = p;
  CHECK(j.get<ShadowParams>() == p);
}

}  // TEST_SUITE
