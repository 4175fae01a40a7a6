#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deshadow/imaging.hpp"
#include "deshadow/mask_ops.hpp"

namespace deshadow {

/// N: no shadow pixel. B: both shadow and non-shadow pixels. F: all shadow.
enum class PatchLabel { NonShadow, Boundary, FullShadow };

char label_code(PatchLabel label) noexcept;
/// Inverse of label_code; throws FormatError on anything but 'N', 'B', 'F'.
PatchLabel parse_label(std::string_view code);
PatchLabel label_for(const ShadowMask& mask_patch) noexcept;

struct PatchRecord {
  std::string image_id;
  int top = 0;
  int left = 0;
  int size = 0;
  RasterImage patch;
  ShadowMask mask_patch;
  PatchLabel label = PatchLabel::NonShadow;
};

/// Top-left corners of every size x size window at multiples of `stride` that
/// fits entirely inside an H x W frame, row-major.
std::vector<std::pair<int, int>> grid_positions(int height, int width, int size, int stride);

/// Cuts the image/mask pair into overlapping windows and labels each one.
/// Throws std::invalid_argument when size exceeds either image dimension,
/// stride < 1, or the mask does not match the image.
std::vector<PatchRecord> crop_grid(const RasterImage& img, const ShadowMask& mask, int size,
                                   int stride, std::string_view image_id = {});

/// Coordinates only; pixels are re-cut from the source image on demand.
struct PatchRef {
  std::string image_id;
  int top = 0;
  int left = 0;
  int size = 0;
  PatchLabel label = PatchLabel::NonShadow;

  friend bool operator==(const PatchRef&, const PatchRef&) = default;
};

struct PatchCounts {
  std::size_t non_shadow = 0;
  std::size_t boundary = 0;
  std::size_t full_shadow = 0;

  std::size_t total() const noexcept { return non_shadow + boundary + full_shadow; }
  void add(PatchLabel label) noexcept;
  friend bool operator==(const PatchCounts&, const PatchCounts&) = default;
};

/// Image/mask file pair behind an image_id.
struct PatchSource {
  std::string image_id;
  std::string image_file;
  std::string mask_file;

  friend bool operator==(const PatchSource&, const PatchSource&) = default;
};

struct PatchManifest {
  int size = 0;
  int stride = 0;
  std::string image_dir;
  std::string mask_dir;
  std::vector<PatchSource> sources;
  std::vector<PatchRef> records;  // sorted by (image_id, top, left)
  PatchCounts counts;
  std::vector<std::string> errors;  // images skipped, with reasons

  std::vector<PatchRef> with_label(PatchLabel label) const;
  const PatchSource* find_source(std::string_view image_id) const;
  std::filesystem::path image_path(const PatchSource& src) const;
  std::filesystem::path mask_path(const PatchSource& src) const;
};

/// Pairs images and masks by file stem and grids every pair. Images without
/// a mask (or with mismatched dimensions) land in `errors` and are skipped.
PatchManifest build_manifest(const std::filesystem::path& image_dir,
                             const std::filesystem::path& mask_dir, int size, int stride,
                             int workers = 1);

/// JSON lines: one header object, then one object per record.
void write_manifest(const PatchManifest& manifest, const std::filesystem::path& path);
std::string manifest_to_string(const PatchManifest& manifest);
PatchManifest read_manifest(const std::filesystem::path& path);

/// Regular files with an image extension (png, jpg, jpeg, bmp), sorted by name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace deshadow
