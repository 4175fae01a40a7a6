#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace deshadow {

/// H x W x 3 RGB image, interleaved, components in [0,1].
class RasterImage {
 public:
  static constexpr int kChannels = 3;

  RasterImage() = default;
  /// Filled with `value`. Throws std::invalid_argument unless height, width >= 1.
  RasterImage(int height, int width, float value = 0.0f);
  /// Takes ownership of interleaved RGB data; values are clamped to [0,1].
  RasterImage(int height, int width, std::vector<float> pixels);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  bool empty() const noexcept { return pixels_.empty(); }

  float at(int y, int x, int c) const noexcept { return pixels_[index(y, x, c)]; }
  float& at(int y, int x, int c) noexcept { return pixels_[index(y, x, c)]; }

  std::span<const float> data() const noexcept { return pixels_; }
  std::span<float> data() noexcept { return pixels_; }

  /// Copies the window [top, top+h) x [left, left+w).
  RasterImage crop(int top, int left, int h, int w) const;

  bool same_shape(const RasterImage& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               kChannels +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// CIE L*a*b* image (D65). L in [0,100]; a, b roughly [-128,127].
class LabImage {
 public:
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  float at(int y, int x, int c) const noexcept {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * 3 + c];
  }
  std::span<const float> data() const noexcept { return pixels_; }

 private:
  friend LabImage rgb_to_lab(const RasterImage& img);
  LabImage(int height, int width, std::vector<float> pixels)
      : height_(height), width_(width), pixels_(std::move(pixels)) {}

  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

/// Decodes an 8-bit, 3-channel PNG or JPEG. Each value v maps to v/255.
/// Throws IoError when the file is missing or unreadable and FormatError when
/// it does not decode to 8-bit RGB.
RasterImage load_image(const std::filesystem::path& path);

/// Writes an 8-bit image; the encoder is picked from the extension.
void save_image(const RasterImage& img, const std::filesystem::path& path);

/// Writes a single-channel 8-bit image from values in [0,1] (row-major).
void save_gray(std::span<const float> values, int height, int width,
               const std::filesystem::path& path);

/// sRGB (gamma-encoded) -> linear RGB -> XYZ -> L*a*b*, D65 white.
LabImage rgb_to_lab(const RasterImage& img);

/// Inverse of rgb_to_lab for a single pixel; output is clamped to [0,1].
std::array<float, 3> lab_to_rgb(float l, float a, float b);
std::array<float, 3> rgb_to_lab(float r, float g, float b);

/// Bilinear resize with half-pixel centers (no corner alignment).
/// Throws std::invalid_argument for a non-positive target size.
RasterImage resize(const RasterImage& img, int out_h, int out_w);

/// 8-bit quantization used by save_image: round(v * 255).
inline unsigned char to_byte(float v) noexcept {
  const float s = v * 255.0f + 0.5f;
  return static_cast<unsigned char>(s < 0.0f ? 0.0f : (s > 255.0f ? 255.0f : s));
}

}  // namespace deshadow
