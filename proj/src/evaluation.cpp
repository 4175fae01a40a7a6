#include "deshadow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "deshadow/errors.hpp"
#include "deshadow/patches.hpp"

namespace deshadow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Accum {
  std::array<double, 3> sse{};
  std::size_t n = 0;

  std::optional<double> rmse() const {
    if (n == 0) return std::nullopt;
    return std::sqrt((sse[0] + sse[1] + sse[2]) / (3.0 * static_cast<double>(n)));
  }
  std::optional<double> rmse_channel(int c) const {
    if (n == 0) return std::nullopt;
    return std::sqrt(sse[c] / static_cast<double>(n));
  }
};

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

RmseResult rmse_lab(const RasterImage& pred, const RasterImage& gt, const ShadowMask& mask,
                    const RmseOptions& options) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("rmse_lab: pred and gt sizes differ");
  if (!mask.same_shape(gt)) throw std::invalid_argument("rmse_lab: mask size differs");
  const bool scale = options.resize > 0;
  const int side = options.resize;
  const LabImage a = rgb_to_lab(scale ? resize(pred, side, side) : pred);
  const LabImage b = rgb_to_lab(scale ? resize(gt, side, side) : gt);
  const ShadowMask m = scale ? resize_nearest(mask, side, side) : mask;

  Accum shadow, nonshadow;
  const auto pa = a.data();
  const auto pb = b.data();
  const auto bits = m.bits();
  for (std::size_t p = 0; p < bits.size(); ++p) {
    Accum& acc = bits[p] ? shadow : nonshadow;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = static_cast<double>(pa[3 * p + c]) - static_cast<double>(pb[3 * p + c]);
      acc.sse[c] += d * d;
    }
    ++acc.n;
  }
  Accum all;
  all.n = shadow.n + nonshadow.n;
  for (int c = 0; c < 3; ++c) all.sse[c] = shadow.sse[c] + nonshadow.sse[c];

  RmseResult r;
  r.shadow = shadow.rmse();
  r.nonshadow = nonshadow.rmse();
  r.all = all.rmse().value_or(0.0);
  r.n_shadow = shadow.n;
  r.n_nonshadow = nonshadow.n;
  r.n_all = all.n;
  for (int c = 0; c < 3; ++c) {
    r.shadow_channel[c] = shadow.rmse_channel(c);
    r.nonshadow_channel[c] = nonshadow.rmse_channel(c);
    r.all_channel[c] = all.rmse_channel(c).value_or(0.0);
  }
  return r;
}

std::vector<float> lab_error_map(const RasterImage& pred, const RasterImage& gt) {
  if (!pred.same_shape(gt)) throw std::invalid_argument("lab_error_map: sizes differ");
  const LabImage a = rgb_to_lab(pred);
  const LabImage b = rgb_to_lab(gt);
  std::vector<float> out(pred.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = a.data()[3 * p + c] - b.data()[3 * p + c];
      s += d * d;
    }
    out[p] = static_cast<float>(std::sqrt(s));
  }
  return out;
}

RmseReport aggregate_rmse(std::vector<ImageRmse> items, Aggregation aggregation) {
  RmseReport report;
  report.aggregation = aggregation;
  report.per_image = std::move(items);
  if (report.per_image.empty()) return report;

  if (aggregation == Aggregation::PerImageMean) {
    auto mean_of = [&](auto get) -> std::optional<double> {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& it : report.per_image) {
        if (auto v = get(it.result)) {
          sum += *v;
          ++n;
        }
      }
      if (n == 0) return std::nullopt;
      return sum / static_cast<double>(n);
    };
    report.rmse_shadow = mean_of([](const RmseResult& r) { return r.shadow; });
    report.rmse_nonshadow = mean_of([](const RmseResult& r) { return r.nonshadow; });
    report.rmse_all = mean_of([](const RmseResult& r) { return std::optional<double>(r.all); });
  } else {
    double sse_s = 0.0, sse_n = 0.0;
    std::size_t n_s = 0, n_n = 0;
    for (const auto& it : report.per_image) {
      const auto& r = it.result;
      if (r.shadow) sse_s += *r.shadow * *r.shadow * 3.0 * static_cast<double>(r.n_shadow);
      if (r.nonshadow) {
        sse_n += *r.nonshadow * *r.nonshadow * 3.0 * static_cast<double>(r.n_nonshadow);
      }
      n_s += r.n_shadow;
      n_n += r.n_nonshadow;
    }
    if (n_s) report.rmse_shadow = std::sqrt(sse_s / (3.0 * static_cast<double>(n_s)));
    if (n_n) report.rmse_nonshadow = std::sqrt(sse_n / (3.0 * static_cast<double>(n_n)));
    if (n_s + n_n) {
      report.rmse_all = std::sqrt((sse_s + sse_n) / (3.0 * static_cast<double>(n_s + n_n)));
    }
  }
  for (const auto& it : report.per_image) {
    if (!it.result.shadow) report.warnings.push_back(it.id + ": empty shadow mask");
  }
  return report;
}

RmseReport eval_istd(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& mask_dir,
                     const RmseOptions& options, Aggregation aggregation) {
  std::map<std::string, fs::path> gt_by_stem, mask_by_stem;
  for (const auto& p : list_images(gt_dir)) gt_by_stem.emplace(p.stem().string(), p);
  for (const auto& p : list_images(mask_dir)) mask_by_stem.emplace(p.stem().string(), p);

  std::vector<ImageRmse> items;
  std::vector<std::string> warnings;
  for (const auto& pred_path : list_images(pred_dir)) {
    const std::string stem = pred_path.stem().string();
    auto g = gt_by_stem.find(stem);
    auto m = mask_by_stem.find(stem);
    if (g == gt_by_stem.end() || m == mask_by_stem.end()) {
      warnings.push_back(pred_path.filename().string() + ": missing ground truth or mask");
      continue;
    }
    const RasterImage gt = load_image(g->second);
    RasterImage pred = load_image(pred_path);
    // Predictions at another resolution are brought to the ground-truth size first.
    if (!pred.same_shape(gt)) pred = resize(pred, gt.height(), gt.width());
    ShadowMask mask = load_mask(m->second);
    if (!mask.same_shape(gt)) mask = resize_nearest(mask, gt.height(), gt.width());
    items.push_back({pred_path.filename().string(), rmse_lab(pred, gt, mask, options)});
  }
  RmseReport report = aggregate_rmse(std::move(items), aggregation);
  report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
  return report;
}

json to_json(const RmseReport& report, bool per_channel) {
  json per_image = json::array();
  for (const auto& it : report.per_image) {
    json e = {{"id", it.id},
              {"shadow", opt(it.result.shadow)},
              {"nonshadow", opt(it.result.nonshadow)},
              {"all", it.result.all},
              {"n_shadow", it.result.n_shadow},
              {"n_nonshadow", it.result.n_nonshadow}};
    if (per_channel) {
      json s = json::array(), n = json::array(), a = json::array();
      for (int c = 0; c < 3; ++c) {
        s.push_back(opt(it.result.shadow_channel[c]));
        n.push_back(opt(it.result.nonshadow_channel[c]));
        a.push_back(it.result.all_channel[c]);
      }
      e["channels"] = {{"shadow", s}, {"nonshadow", n}, {"all", a}};
    }
    per_image.push_back(std::move(e));
  }
  return {{"aggregation",
           report.aggregation == Aggregation::PerImageMean ? "per_image_mean" : "pooled"},
          {"rmse_shadow", opt(report.rmse_shadow)},
          {"rmse_nonshadow", opt(report.rmse_nonshadow)},
          {"rmse_all", opt(report.rmse_all)},
          {"images", report.per_image.size()},
          {"per_image", per_image},
          {"warnings", report.warnings}};
}

VideoPseudoGT build_video_pseudo_gt(std::span<const RasterImage> frames, float epsilon) {
  if (frames.size() < 2) throw std::invalid_argument("video pseudo ground truth needs >= 2 frames");
  VideoPseudoGT gt;
  gt.v_max = frames[0];
  gt.v_min = frames[0];
  for (std::size_t f = 1; f < frames.size(); ++f) {
    if (!frames[f].same_shape(frames[0])) throw FormatError("video frames differ in size");
    const auto src = frames[f].data();
    auto hi = gt.v_max.data();
    auto lo = gt.v_min.data();
    for (std::size_t i = 0; i < src.size(); ++i) {
      hi[i] = std::max(hi[i], src[i]);
      lo[i] = std::min(lo[i], src[i]);
    }
  }
  gt.moving_mask = moving_shadow_mask(gt.v_max, gt.v_min, epsilon);
  gt.epsilon = epsilon;
  gt.frame_count = frames.size();
  return gt;
}

std::vector<RasterImage> load_frames(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
  std::vector<RasterImage> frames;
  for (const auto& p : list_images(dir)) frames.push_back(load_image(p));
  return frames;
}

VideoPseudoGT build_video_pseudo_gt(const fs::path& frames_dir, float epsilon) {
  const auto frames = load_frames(frames_dir);
  return build_video_pseudo_gt(frames, epsilon);
}

void save_pseudo_gt(const VideoPseudoGT& gt, const fs::path& dir) {
  fs::create_directories(dir);
  save_image(gt.v_max, dir / "v_max.png");
  save_image(gt.v_min, dir / "v_min.png");
  save_mask(gt.moving_mask, dir / "moving_mask.png");
  std::ofstream f(dir / "pseudo_gt.json");
  f << json{{"epsilon", gt.epsilon},
            {"epsilon_255", gt.epsilon * 255.0f},
            {"frame_count", gt.frame_count},
            {"moving_pixels", gt.moving_mask.count()}}
           .dump(2)
    << '\n';
  if (!f) throw IoError("cannot write " + (dir / "pseudo_gt.json").string());
}

VideoPseudoGT load_pseudo_gt(const fs::path& dir) {
  VideoPseudoGT gt;
  gt.v_max = load_image(dir / "v_max.png");
  gt.v_min = load_image(dir / "v_min.png");
  gt.moving_mask = load_mask(dir / "moving_mask.png");
  std::ifstream f(dir / "pseudo_gt.json");
  if (f) {
    try {
      const json meta = json::parse(f);
      gt.epsilon = meta.value("epsilon", kVideoEpsilon);
      gt.frame_count = meta.value("frame_count", std::size_t{0});
    } catch (const json::exception& e) {
      throw FormatError("malformed pseudo_gt.json: " + std::string(e.what()));
    }
  }
  return gt;
}

VideoScore eval_video(std::span<const RasterImage> pred_frames, const VideoPseudoGT& pseudo_gt,
                      const RmseOptions& options) {
  if (pseudo_gt.frame_count != 0 && pred_frames.size() != pseudo_gt.frame_count) {
    throw std::invalid_argument("eval_video: expected " + std::to_string(pseudo_gt.frame_count) +
                                " frames, got " + std::to_string(pred_frames.size()));
  }
  VideoScore score;
  score.frames = pred_frames.size();
  if (pseudo_gt.moving_mask.none()) {
    score.warning = "empty moving-shadow mask; video skipped";
    return score;
  }
  if (pred_frames.empty()) {
    score.warning = "no frames";
    return score;
  }
  double sum = 0.0;
  for (const auto& frame : pred_frames) {
    if (!frame.same_shape(pseudo_gt.v_max)) {
      throw std::invalid_argument("eval_video: frame size differs from pseudo ground truth");
    }
    const RmseResult r = rmse_lab(frame, pseudo_gt.v_max, pseudo_gt.moving_mask, options);
    const double v = r.shadow.value_or(0.0);
    score.per_frame.push_back(v);
    sum += v;
  }
  score.rmse = sum / static_cast<double>(pred_frames.size());
  return score;
}

VideoReport summarize_videos(std::vector<VideoEntry> entries) {
  VideoReport report;
  report.videos = std::move(entries);
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : report.videos) {
    if (v.score.rmse) {
      sum += *v.score.rmse;
      ++n;
    }
  }
  if (n) report.rmse = sum / static_cast<double>(n);
  return report;
}

json to_json(const VideoReport& report) {
  json videos = json::array();
  for (const auto& v : report.videos) {
    json e = {{"name", v.name},
              {"rmse", opt(v.score.rmse)},
              {"frames", v.score.frames},
              {"per_frame", v.score.per_frame}};
    if (!v.score.warning.empty()) e["warning"] = v.score.warning;
    videos.push_back(std::move(e));
  }
  return {{"rmse", opt(report.rmse)}, {"videos", videos}};
}

}  // namespace deshadow
