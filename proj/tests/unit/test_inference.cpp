#include <random>

#include <torch/torch.h>

#include "deshadow/inference.hpp"
#include "deshadow/patches.hpp"
#include "oracles.hpp"

// Last, so its CHECK wins over the one c10 defines.
#include <doctest.h>

using namespace deshadow;
using namespace deshadow::testing;

namespace {

ModelBundle models_for(int n, std::uint64_t seed = 0) {
  torch::manual_seed(seed);
  return ModelBundle(ModelConfig::preset_named("desk", n));
}

/// Param-Net pinned to w = 1, b = 0 whatever the input.
void make_identity(ModelBundle& m) {
  torch::NoGradGuard ng;
  auto& head = m.param_net->head_output();
  head->weight.zero_();
  head->bias.copy_(torch::tensor({-20.0f, -20.0f, -20.0f, 0.0f, 0.0f, 0.0f}));
}

}  // namespace

TEST_SUITE("inference") {

TEST_CASE("empty mask returns the input") {
  auto m = models_for(16);
  std::mt19937_64 rng(1);
  const auto img = random_image(rng, 40, 40);
  const auto r = remove_shadow(m, img, ShadowMask(40, 40));
  CHECK(r.empty_mask);
  CHECK(r.output == img);
  CHECK(r.params == ShadowParams::identity());
}

TEST_CASE("pixels outside the dilated mask are untouched") {
  auto m = models_for(16, 3);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 5; ++t) {
    const auto img = random_image(rng, 48, 40);
    const auto mask = random_blob(rng, 48, 40);
    const auto r = remove_shadow(m, img, mask);
    const auto regions = build_regions(mask, kDefaultMorphRadius);
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 40; ++x) {
        if (!regions.nonshadow.at(y, x)) continue;
        for (int c = 0; c < 3; ++c) CHECK(r.output.at(y, x, c) == img.at(y, x, c));
      }
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 40; ++x) {
        if (regions.umbra.at(y, x)) CHECK(r.matte.at(y, x) == 1.0f);
      }
    CHECK(r.params.within(ParamBounds::standard()));
  }
}

TEST_CASE("identity networks return the input exactly") {
  auto m = models_for(16, 4);
  make_identity(m);
  std::mt19937_64 rng(3);
  const auto img = random_image(rng, 32, 32);
  const auto r = remove_shadow(m, img, random_blob(rng, 32, 32));
  CHECK(r.params == ShadowParams::identity());
  CHECK(r.output == img);
}

TEST_CASE("one estimate per boundary window, scored by the critic") {
  auto m = models_for(16, 5);
  ShadowMask mask(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 16; ++x) mask.set(y, x, true);
  std::mt19937_64 rng(4);
  const auto img = random_image(rng, 32, 32);
  const auto r = remove_shadow(m, img, mask);
  std::size_t boundary = 0;
  for (auto [t, l] : grid_positions(32, 32, 16, 4)) {
    boundary += label_for(mask.crop(t, l, 16, 16)) == PatchLabel::Boundary;
  }
  CHECK(r.estimates.size() == boundary);
  for (const auto& e : r.estimates) {
    CHECK(e.critic_score > 0.0f);
    CHECK(e.critic_score < 1.0f);
  }
  CHECK_FALSE(r.fallback);
  // Batching does not change the result.
  InferenceOptions one;
  one.batch = 1;
  const auto r1 = remove_shadow(m, img, mask, one);
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    CHECK(r1.output.data()[i] == doctest::Approx(r.output.data()[i]).epsilon(1e-5));
  }
  const auto j = to_json(r);
  CHECK(j["patch_count"] == r.estimates.size());
}

TEST_CASE("a mask with no boundary window falls back to the best overlap") {
  auto m = models_for(16, 6);
  // Shadow covers the first window entirely and no window straddles it.
  ShadowMask mask(16, 32);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) mask.set(y, x, true);
  InferenceOptions o;
  o.stride = 16;
  std::mt19937_64 rng(5);
  const auto r = remove_shadow(m, random_image(rng, 16, 32), mask, o);
  CHECK(r.fallback);
  REQUIRE(r.estimates.size() == 1);
  CHECK(r.estimates[0].left == 0);
  CHECK(to_json(r)["fallback"] == true);
}

TEST_CASE("argument errors") {
  auto m = models_for(16);
  CHECK_THROWS_AS(remove_shadow(m, RasterImage(20, 20), ShadowMask(20, 21)), std::invalid_argument);
  ShadowMask small(8, 8);
  small.set(1, 1, true);
  CHECK_THROWS_AS(remove_shadow(m, RasterImage(8, 8), small), std::invalid_argument);
}

}  // TEST_SUITE
