#include <fstream>
#include <random>
#include <sstream>

#include "deshadow/errors.hpp"
#include "deshadow/patches.hpp"
#include "oracles.hpp"

// Last, so its CHECK wins over the one c10 defines.
#include <doctest.h>

using namespace deshadow;
using namespace deshadow::testing;

namespace {

ShadowMask left_half(int h, int w) {
  ShadowMask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w / 2; ++x) m.set(y, x, true);
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("patches") {

TEST_CASE("grid arithmetic on 640x480") {
  RasterImage img(480, 640, 0.5f);
  const auto recs = crop_grid(img, ShadowMask(480, 640), 128, 32);
  CHECK(recs.size() == 204);
  for (const auto& r : recs) CHECK(r.label == PatchLabel::NonShadow);
  // Row-major order.
  CHECK(recs[0].top == 0);
  CHECK(recs[0].left == 0);
  CHECK(recs[1].left == 32);
  CHECK(recs[17].top == 32);
  CHECK(recs[17].left == 0);
  CHECK(recs.back().top == 352);
  CHECK(recs.back().left == 512);
}

TEST_CASE("grid completeness formula") {
  for (auto [h, w, n, m] : {std::array{100, 70, 16, 5}, std::array{64, 64, 64, 1},
                            std::array{33, 90, 32, 7}}) {
    const auto pos = grid_positions(h, w, n, m);
    CHECK(pos.size() == static_cast<std::size_t>(((h - n) / m + 1) * ((w - n) / m + 1)));
    for (auto [t, l] : pos) {
      CHECK(t + n <= h);
      CHECK(l + n <= w);
    }
  }
}

TEST_CASE("left-half mask labels") {
  RasterImage img(64, 64, 0.5f);
  const auto mask = left_half(64, 64);
  for (const auto& r : crop_grid(img, mask, 16, 8)) {
    PatchLabel want = PatchLabel::NonShadow;
    if (r.left + 16 <= 32) want = PatchLabel::FullShadow;
    else if (r.left < 32) want = PatchLabel::Boundary;
    CHECK(r.label == want);
    CHECK(label_for(r.mask_patch) == r.label);
    CHECK(r.patch == img.crop(r.top, r.left, 16, 16));
  }
}

TEST_CASE("crop_grid argument errors") {
  RasterImage img(20, 30, 0.0f);
  CHECK_THROWS_AS(crop_grid(img, ShadowMask(20, 30), 21, 4), std::invalid_argument);
  CHECK_THROWS_AS(crop_grid(img, ShadowMask(20, 30), 8, 0), std::invalid_argument);
  CHECK_THROWS_AS(crop_grid(img, ShadowMask(20, 31), 8, 4), std::invalid_argument);
}

TEST_CASE("label codes") {
  for (auto l : {PatchLabel::NonShadow, PatchLabel::Boundary, PatchLabel::FullShadow}) {
    CHECK(parse_label(std::string(1, label_code(l))) == l);
  }
  CHECK_THROWS_AS(parse_label("X"), FormatError);
}

TEST_CASE("manifest building, round trip and determinism") {
  std::mt19937_64 rng(12);
  TempDir dir;
  std::filesystem::create_directories(dir / "img");
  std::filesystem::create_directories(dir / "mask");
  for (int i = 0; i < 3; ++i) {
    const auto name = "im" + std::to_string(i) + ".png";
    save_image(random_image(rng, 48, 64), dir / "img" / name);
    save_mask(random_blob(rng, 48, 64), dir / "mask" / name);
  }
  save_image(random_image(rng, 48, 64), dir / "img" / "orphan.png");

  const auto a = build_manifest(dir / "img", dir / "mask", 16, 8);
  const auto b = build_manifest(dir / "img", dir / "mask", 16, 8, 3);
  CHECK(a.sources.size() == 3);
  CHECK(a.errors.size() == 1);
  CHECK(a.records.size() == 3u * 5u * 7u);
  CHECK(a.counts.total() == a.records.size());
  CHECK(manifest_to_string(a) == manifest_to_string(b));

  write_manifest(a, dir / "m1.jsonl");
  const auto back = read_manifest(dir / "m1.jsonl");
  CHECK(back.records == a.records);
  CHECK(back.counts == a.counts);
  CHECK(back.sources == a.sources);
  write_manifest(back, dir / "m2.jsonl");
  CHECK(slurp(dir / "m1.jsonl") == slurp(dir / "m2.jsonl"));

  // Stored labels agree with relabeling the mask window.
  for (const auto& r : a.records) {
    const auto* src = a.find_source(r.image_id);
    REQUIRE(src);
    const auto mask = load_mask(a.mask_path(*src));
    CHECK(label_for(mask.crop(r.top, r.left, r.size, r.size)) == r.label);
  }
}

TEST_CASE("empty directory gives an empty manifest") {
  TempDir dir;
  std::filesystem::create_directories(dir / "i");
  std::filesystem::create_directories(dir / "m");
  const auto m = build_manifest(dir / "i", dir / "m", 128, 32);
  CHECK(m.records.empty());
  CHECK(m.counts == PatchCounts{});
}

TEST_CASE("manifest reader rejects bad files") {
  TempDir dir;
  CHECK_THROWS_AS(read_manifest(dir / "none.jsonl"), IoError);
  std::ofstream(dir / "bad.jsonl") << "{\"type\":\"record\"}\n";
  CHECK_THROWS_AS(read_manifest(dir / "bad.jsonl"), FormatError);
}

}  // TEST_SUITE
