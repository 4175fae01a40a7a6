#include "deshadow/patches.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "deshadow/errors.hpp"

namespace deshadow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

struct ImageResult {
  std::vector<PatchRef> refs;
  std::string error;
};

ImageResult grid_one(const fs::path& image_path, const fs::path& mask_path,
                     const std::string& image_id, int size, int stride) {
  ImageResult result;
  try {
    const RasterImage img = load_image(image_path);
    const ShadowMask mask = load_mask(mask_path);
    if (!mask.same_shape(img)) {
      result.error = image_id + ": mask dimensions differ from image";
      return result;
    }
    if (size > img.height() || size > img.width()) {
      result.error = image_id + ": image smaller than patch size";
      return result;
    }
    for (const auto& [top, left] : grid_positions(img.height(), img.width(), size, stride)) {
      result.refs.push_back(
          {image_id, top, left, size, label_for(mask.crop(top, left, size, size))});
    }
  } catch (const std::exception& e) {
    result.error = image_id + ": " + e.what();
  }
  return result;
}

}  // namespace

char label_code(PatchLabel label) noexcept {
  switch (label) {
    case PatchLabel::NonShadow:
      return 'N';
    case PatchLabel::Boundary:
      return 'B';
    case PatchLabel::FullShadow:
      return 'F';
  }
  return '?';
}

PatchLabel parse_label(std::string_view code) {
  if (code == "N") return PatchLabel::NonShadow;
  if (code == "B") return PatchLabel::Boundary;
  if (code == "F") return PatchLabel::FullShadow;
  throw FormatError("unknown patch label: " + std::string(code));
}

PatchLabel label_for(const ShadowMask& mask_patch) noexcept {
  const std::size_t n = mask_patch.count();
  if (n == 0) return PatchLabel::NonShadow;
  if (n == mask_patch.pixel_count()) return PatchLabel::FullShadow;
  return PatchLabel::Boundary;
}

void PatchCounts::add(PatchLabel label) noexcept {
  switch (label) {
    case PatchLabel::NonShadow:
      ++non_shadow;
      break;
    case PatchLabel::Boundary:
      ++boundary;
      break;
    case PatchLabel::FullShadow:
      ++full_shadow;
      break;
  }
}

std::vector<std::pair<int, int>> grid_positions(int height, int width, int size, int stride) {
  if (size < 1) throw std::invalid_argument("patch size must be >= 1");
  if (stride < 1) throw std::invalid_argument("patch stride must be >= 1");
  if (size > height || size > width) {
    throw std::invalid_argument("patch size " + std::to_string(size) + " exceeds image " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  std::vector<std::pair<int, int>> out;
  for (int top = 0; top + size <= height; top += stride) {
    for (int left = 0; left + size <= width; left += stride) out.emplace_back(top, left);
  }
  return out;
}

std::vector<PatchRecord> crop_grid(const RasterImage& img, const ShadowMask& mask, int size,
                                   int stride, std::string_view image_id) {
  if (!mask.same_shape(img)) throw std::invalid_argument("mask does not match image");
  std::vector<PatchRecord> out;
  for (const auto& [top, left] : grid_positions(img.height(), img.width(), size, stride)) {
    PatchRecord rec;
    rec.image_id = std::string(image_id);
    rec.top = top;
    rec.left = left;
    rec.size = size;
    rec.patch = img.crop(top, left, size, size);
    rec.mask_patch = mask.crop(top, left, size, size);
    rec.label = label_for(rec.mask_patch);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<PatchRef> PatchManifest::with_label(PatchLabel label) const {
  std::vector<PatchRef> out;
  for (const auto& r : records) {
    if (r.label == label) out.push_back(r);
  }
  return out;
}

const PatchSource* PatchManifest::find_source(std::string_view image_id) const {
  auto it = std::lower_bound(sources.begin(), sources.end(), image_id,
                             [](const PatchSource& s, std::string_view id) { return s.image_id < id; });
  if (it == sources.end() || it->image_id != image_id) return nullptr;
  return &*it;
}

fs::path PatchManifest::image_path(const PatchSource& src) const {
  return fs::path(image_dir) / src.image_file;
}

fs::path PatchManifest::mask_path(const PatchSource& src) const {
  return fs::path(mask_dir) / src.mask_file;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower(entry.path().extension().string());
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

PatchManifest build_manifest(const fs::path& image_dir, const fs::path& mask_dir, int size,
                             int stride, int workers) {
  if (size < 1 || stride < 1) throw std::invalid_argument("patch size and stride must be >= 1");
  PatchManifest manifest;
  manifest.size = size;
  manifest.stride = stride;
  manifest.image_dir = image_dir.string();
  manifest.mask_dir = mask_dir.string();

  std::map<std::string, fs::path> masks_by_stem;
  for (const auto& m : list_images(mask_dir)) masks_by_stem.emplace(m.stem().string(), m);

  std::vector<PatchSource> candidates;
  for (const auto& img : list_images(image_dir)) {
    const std::string id = img.filename().string();
    auto it = masks_by_stem.find(img.stem().string());
    if (it == masks_by_stem.end()) {
      manifest.errors.push_back(id + ": no matching mask");
      continue;
    }
    candidates.push_back({id, id, it->second.filename().string()});
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const PatchSource& a, const PatchSource& b) { return a.image_id < b.image_id; });

  std::vector<ImageResult> results(candidates.size());
  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < candidates.size(); i += step) {
      results[i] = grid_one(image_dir / candidates[i].image_file,
                            mask_dir / candidates[i].mask_file, candidates[i].image_id, size,
                            stride);
    }
  };
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)),
                                                     candidates.size()));
  if (n_workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work, w, n_workers);
  }

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!results[i].error.empty()) {
      manifest.errors.push_back(results[i].error);
      continue;
    }
    manifest.sources.push_back(candidates[i]);
    for (auto& ref : results[i].refs) {
      manifest.counts.add(ref.label);
      manifest.records.push_back(std::move(ref));
    }
  }
  std::sort(manifest.errors.begin(), manifest.errors.end());
  return manifest;
}

std::string manifest_to_string(const PatchManifest& manifest) {
  json sources = json::array();
  for (const auto& s : manifest.sources) {
    sources.push_back({{"image_id", s.image_id}, {"image", s.image_file}, {"mask", s.mask_file}});
  }
  const json header = {{"type", "header"},
                       {"version", kManifestVersion},
                       {"size", manifest.size},
                       {"stride", manifest.stride},
                       {"image_dir", manifest.image_dir},
                       {"mask_dir", manifest.mask_dir},
                       {"counts",
                        {{"N", manifest.counts.non_shadow},
                         {"B", manifest.counts.boundary},
                         {"F", manifest.counts.full_shadow}}},
                       {"total", manifest.counts.total()},
                       {"sources", sources},
                       {"errors", manifest.errors}};
  std::ostringstream out;
  out << header.dump() << '\n';
  for (const auto& r : manifest.records) {
    const json line = {{"image_id", r.image_id},
                       {"top", r.top},
                       {"left", r.left},
                       {"size", r.size},
                       {"label", std::string(1, label_code(r.label))}};
    out << line.dump() << '\n';
  }
  return out.str();
}

void write_manifest(const PatchManifest& manifest, const fs::path& path) {
  const fs::path tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write manifest: " + path.string());
    f << manifest_to_string(manifest);
    if (!f) throw IoError("cannot write manifest: " + path.string());
  }
  fs::rename(tmp, path);
}

PatchManifest read_manifest(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open manifest: " + path.string());
  PatchManifest m;
  std::string line;
  if (!std::getline(f, line)) throw FormatError("empty manifest: " + path.string());
  try {
    const json header = json::parse(line);
    if (header.value("type", "") != "header") throw FormatError("manifest header missing");
    m.size = header.at("size").get<int>();
    m.stride = header.at("stride").get<int>();
    m.image_dir = header.value("image_dir", "");
    m.mask_dir = header.value("mask_dir", "");
    for (const auto& s : header.value("sources", json::array())) {
      m.sources.push_back({s.at("image_id").get<std::string>(), s.at("image").get<std::string>(),
                           s.at("mask").get<std::string>()});
    }
    m.errors = header.value("errors", std::vector<std::string>{});
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json r = json::parse(line);
      PatchRef ref{r.at("image_id").get<std::string>(), r.at("top").get<int>(),
                   r.at("left").get<int>(), r.at("size").get<int>(),
                   parse_label(r.at("label").get<std::string>())};
      m.counts.add(ref.label);
      m.records.push_back(std::move(ref));
    }
    const auto& c = header.at("counts");
    const PatchCounts declared{c.at("N").get<std::size_t>(), c.at("B").get<std::size_t>(),
                               c.at("F").get<std::size_t>()};
    if (!(declared == m.counts)) {
      throw FormatError("manifest counts do not match its records: " + path.string());
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  std::sort(m.sources.begin(), m.sources.end(),
            [](const PatchSource& a, const PatchSource& b) { return a.image_id < b.image_id; });
  return m;
}

}  // namespace deshadow
