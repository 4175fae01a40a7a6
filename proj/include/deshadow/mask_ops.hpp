#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "deshadow/imaging.hpp"

namespace deshadow {

/// Binary H x W mask, 1 = shadow.
class ShadowMask {
 public:
  ShadowMask() = default;
  ShadowMask(int height, int width, bool value = false);
  /// Any non-zero byte counts as shadow.
  ShadowMask(int height, int width, std::vector<std::uint8_t> bits);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t pixel_count() const noexcept { return bits_.size(); }

  bool at(int y, int x) const noexcept { return bits_[index(y, x)] != 0; }
  void set(int y, int x, bool v) noexcept { bits_[index(y, x)] = v ? 1 : 0; }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  std::size_t count() const noexcept;
  bool none() const noexcept { return count() == 0; }
  bool all() const noexcept { return count() == bits_.size(); }

  ShadowMask crop(int top, int left, int h, int w) const;

  bool same_shape(const ShadowMask& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_;
  }
  bool same_shape(const RasterImage& img) const noexcept {
    return height_ == img.height() && width_ == img.width();
  }

  // Set algebra on equally shaped masks.
  ShadowMask operator|(const ShadowMask& o) const;
  ShadowMask operator&(const ShadowMask& o) const;
  /// Set difference: this AND NOT o.
  ShadowMask operator-(const ShadowMask& o) const;
  ShadowMask operator~() const;
  /// True when every set pixel of this is also set in o.
  bool subset_of(const ShadowMask& o) const;

  friend bool operator==(const ShadowMask&, const ShadowMask&) = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Penumbra geometry around a shadow mask M.
///   m_dilated = dilate(M), m_out = m_dilated - M, m_in = M - erode(M),
///   umbra = M - m_in, nonshadow = NOT m_dilated.
struct RegionMasks {
  ShadowMask m_in;
  ShadowMask m_out;
  ShadowMask m_dilated;
  ShadowMask umbra;
  ShadowMask nonshadow;

  RegionMasks crop(int top, int left, int h, int w) const;
};

constexpr int kDefaultMorphRadius = 3;
constexpr std::uint8_t kMaskThreshold = 128;

/// Reads an 8-bit mask; pixels >= 128 are shadow. Multi-channel files are
/// reduced to grayscale first.
ShadowMask load_mask(const std::filesystem::path& path);
void save_mask(const ShadowMask& mask, const std::filesystem::path& path);

/// Square structuring element of side 2*radius+1, zero padding outside the frame.
ShadowMask dilate(const ShadowMask& mask, int radius);
/// Dual of dilate; shadow pixels within `radius` of the frame edge erode away.
ShadowMask erode(const ShadowMask& mask, int radius);

/// Nearest-neighbour resize (pixel-center sampling); keeps the mask binary.
ShadowMask resize_nearest(const ShadowMask& mask, int out_h, int out_w);

RegionMasks build_regions(const ShadowMask& mask, int radius = kDefaultMorphRadius);

/// Channel-mean intensity per pixel.
std::vector<float> gray_intensity(const RasterImage& img);

/// 1 where gray(v_max) > gray(v_min) + epsilon; epsilon on the [0,1] scale.
ShadowMask moving_shadow_mask(const RasterImage& v_max, const RasterImage& v_min, float epsilon);

}  // namespace deshadow
