#include "deshadow/mask_ops.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "deshadow/errors.hpp"

namespace deshadow {

namespace {

void require_same(const ShadowMask& a, const ShadowMask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask dimensions differ");
}

// Running max (dilation) or min (erosion) along one axis. Out-of-frame taps
// read as 0, which matters only for erosion.
void sweep(std::span<const std::uint8_t> src, std::span<std::uint8_t> dst, int height, int width,
           int radius, bool horizontal, bool take_max) {
  const int len = horizontal ? width : height;
  const int lines = horizontal ? height : width;
  std::vector<int> prefix(static_cast<std::size_t>(len) + 1);
  for (int line = 0; line < lines; ++line) {
    auto at = [&](int i) -> std::size_t {
      return horizontal ? static_cast<std::size_t>(line) * width + i
                        : static_cast<std::size_t>(i) * width + line;
    };
    prefix[0] = 0;
    for (int i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + (src[at(i)] ? 1 : 0);
    for (int i = 0; i < len; ++i) {
      const int lo = i - radius;
      const int hi = i + radius;
      const int ones = prefix[std::min(hi, len - 1) + 1] - prefix[std::max(lo, 0)];
      if (take_max) {
        dst[at(i)] = ones > 0 ? 1 : 0;
      } else {
        // Window must be entirely inside the frame and entirely set.
        dst[at(i)] = (lo >= 0 && hi < len && ones == 2 * radius + 1) ? 1 : 0;
      }
    }
  }
}

ShadowMask morph(const ShadowMask& mask, int radius, bool take_max) {
  if (radius < 1) throw std::invalid_argument("morphology radius must be >= 1");
  const int h = mask.height();
  const int w = mask.width();
  std::vector<std::uint8_t> tmp(mask.pixel_count());
  std::vector<std::uint8_t> out(mask.pixel_count());
  sweep(mask.bits(), tmp, h, w, radius, true, take_max);
  sweep(tmp, out, h, w, radius, false, take_max);
  return ShadowMask(h, w, std::move(out));
}

}  // namespace

ShadowMask::ShadowMask(int height, int width, bool value) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw std::invalid_argument("mask dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(height) * width, value ? 1 : 0);
}

ShadowMask::ShadowMask(int height, int width, std::vector<std::uint8_t> bits)
    : height_(height), width_(width), bits_(std::move(bits)) {
  if (height < 1 || width < 1) throw std::invalid_argument("mask dimensions must be positive");
  if (bits_.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("mask buffer size mismatch");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

std::size_t ShadowMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

ShadowMask ShadowMask::crop(int top, int left, int h, int w) const {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > height_ || left + w > width_) {
    throw std::invalid_argument("crop window out of bounds");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const auto* src = &bits_[index(top + y, left)];
    std::copy(src, src + w, out.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return ShadowMask(h, w, std::move(out));
}

ShadowMask ShadowMask::operator|(const ShadowMask& o) const {
  require_same(*this, o);
  ShadowMask r = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) r.bits_[i] = bits_[i] | o.bits_[i];
  return r;
}

ShadowMask ShadowMask::operator&(const ShadowMask& o) const {
  require_same(*this, o);
  ShadowMask r = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) r.bits_[i] = bits_[i] & o.bits_[i];
  return r;
}

ShadowMask ShadowMask::operator-(const ShadowMask& o) const {
  require_same(*this, o);
  ShadowMask r = *this;
  for (std::size_t i = 0; i < bits_.size(); ++i) r.bits_[i] = bits_[i] & (o.bits_[i] ^ 1);
  return r;
}

ShadowMask ShadowMask::operator~() const {
  ShadowMask r = *this;
  for (auto& b : r.bits_) b ^= 1;
  return r;
}

bool ShadowMask::subset_of(const ShadowMask& o) const {
  require_same(*this, o);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] && !o.bits_[i]) return false;
  }
  return true;
}

RegionMasks RegionMasks::crop(int top, int left, int h, int w) const {
  return {m_in.crop(top, left, h, w), m_out.crop(top, left, h, w),
          m_dilated.crop(top, left, h, w), umbra.crop(top, left, h, w),
          nonshadow.crop(top, left, h, w)};
}

ShadowMask load_mask(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot open mask: " + path.string());
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw FormatError("cannot decode mask: " + path.string());
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(raw.rows) * raw.cols);
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<unsigned char>(y);
    for (int x = 0; x < raw.cols; ++x) {
      bits[static_cast<std::size_t>(y) * raw.cols + x] = row[x] >= kMaskThreshold ? 1 : 0;
    }
  }
  return ShadowMask(raw.rows, raw.cols, std::move(bits));
}

void save_mask(const ShadowMask& mask, const std::filesystem::path& path) {
  cv::Mat out(mask.height(), mask.width(), CV_8UC1);
  for (int y = 0; y < mask.height(); ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < mask.width(); ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write mask: " + path.string());
}

ShadowMask dilate(const ShadowMask& mask, int radius) { return morph(mask, radius, true); }

ShadowMask erode(const ShadowMask& mask, int radius) { return morph(mask, radius, false); }

ShadowMask resize_nearest(const ShadowMask& mask, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize target must be positive");
  if (out_h == mask.height() && out_w == mask.width()) return mask;
  auto src_index = [](int o, int in, int out) {
    const int i = static_cast<int>((o + 0.5) * in / out);
    return std::min(i, in - 1);
  };
  ShadowMask out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const int sy = src_index(y, mask.height(), out_h);
    for (int x = 0; x < out_w; ++x) out.set(y, x, mask.at(sy, src_index(x, mask.width(), out_w)));
  }
  return out;
}

RegionMasks build_regions(const ShadowMask& mask, int radius) {
  RegionMasks r;
  r.m_dilated = dilate(mask, radius);
  const ShadowMask eroded = erode(mask, radius);
  r.m_out = r.m_dilated - mask;
  r.m_in = mask - eroded;
  r.umbra = mask - r.m_in;
  r.nonshadow = ~r.m_dilated;
  return r;
}

std::vector<float> gray_intensity(const RasterImage& img) {
  std::vector<float> g(img.pixel_count());
  const auto px = img.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = (px[3 * i] + px[3 * i + 1] + px[3 * i + 2]) / 3.0f;
  }
  return g;
}

ShadowMask moving_shadow_mask(const RasterImage& v_max, const RasterImage& v_min, float epsilon) {
  if (!v_max.same_shape(v_min)) {
    throw std::invalid_argument("v_max and v_min dimensions differ");
  }
  const auto hi = gray_intensity(v_max);
  const auto lo = gray_intensity(v_min);
  std::vector<std::uint8_t> bits(hi.size());
  for (std::size_t i = 0; i < hi.size(); ++i) bits[i] = hi[i] > lo[i] + epsilon ? 1 : 0;
  return ShadowMask(v_max.height(), v_max.width(), std::move(bits));
}

}  // namespace deshadow
