#include "deshadow/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "deshadow/errors.hpp"

namespace deshadow {

namespace {

void check_dims(int height, int width) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("image dimensions must be positive, got " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
}

// sRGB primaries, D65.
constexpr double kRgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};
constexpr double kXyzToRgb[3][3] = {{3.2404542, -1.5371385, -0.4985314},
                                    {-0.9692660, 1.8760108, 0.0415560},
                                    {0.0556434, -0.2040259, 1.0572252}};
// White point as the row sums of kRgbToXyz so that neutral grays map to a = b = 0.
constexpr double kWhite[3] = {0.4124564 + 0.3575761 + 0.1804375,
                              0.2126729 + 0.7151522 + 0.0721750,
                              0.0193339 + 0.1191920 + 0.9503041};

constexpr double kDelta = 6.0 / 29.0;

double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double srgb_encode(double c) {
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  return t > kDelta * kDelta * kDelta ? std::cbrt(t) : t / (3.0 * kDelta * kDelta) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  return t > kDelta ? t * t * t : 3.0 * kDelta * kDelta * (t - 4.0 / 29.0);
}

}  // namespace

RasterImage::RasterImage(int height, int width, float value) : height_(height), width_(width) {
  check_dims(height, width);
  pixels_.assign(pixel_count() * kChannels, std::clamp(value, 0.0f, 1.0f));
}

RasterImage::RasterImage(int height, int width, std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  check_dims(height, width);
  if (pixels_.size() != pixel_count() * kChannels) {
    throw std::invalid_argument("pixel buffer size does not match " + std::to_string(height) +
                                "x" + std::to_string(width) + "x3");
  }
  for (float& v : pixels_) v = std::clamp(v, 0.0f, 1.0f);
}

RasterImage RasterImage::crop(int top, int left, int h, int w) const {
  if (top < 0 || left < 0 || h < 1 || w < 1 || top + h > height_ || left + w > width_) {
    throw std::invalid_argument("crop window out of bounds");
  }
  RasterImage out(h, w);
  for (int y = 0; y < h; ++y) {
    const float* src = &pixels_[index(top + y, left, 0)];
    std::copy(src, src + static_cast<std::size_t>(w) * kChannels, &out.at(y, 0, 0));
  }
  return out;
}

RasterImage load_image(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw IoError("cannot open image: " + path.string());
  }
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw FormatError("cannot decode image: " + path.string());
  if (raw.depth() != CV_8U) throw FormatError("expected 8-bit image: " + path.string());
  if (raw.channels() != 3) {
    throw FormatError("expected 3 channels, found " + std::to_string(raw.channels()) + ": " +
                      path.string());
  }
  RasterImage img(raw.rows, raw.cols);
  for (int y = 0; y < raw.rows; ++y) {
    const auto* row = raw.ptr<cv::Vec3b>(y);
    for (int x = 0; x < raw.cols; ++x) {
      // OpenCV stores BGR.
      img.at(y, x, 0) = row[x][2] / 255.0f;
      img.at(y, x, 1) = row[x][1] / 255.0f;
      img.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return img;
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
  cv::Mat out(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      row[x] = cv::Vec3b(to_byte(img.at(y, x, 2)), to_byte(img.at(y, x, 1)),
                         to_byte(img.at(y, x, 0)));
    }
  }
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write image: " + path.string());
}

void save_gray(std::span<const float> values, int height, int width,
               const std::filesystem::path& path) {
  check_dims(height, width);
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw std::invalid_argument("gray buffer size mismatch");
  }
  cv::Mat out(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < width; ++x) row[x] = to_byte(values[static_cast<std::size_t>(y) * width + x]);
  }
  if (!cv::imwrite(path.string(), out)) throw IoError("cannot write image: " + path.string());
}

std::array<float, 3> rgb_to_lab(float r, float g, float b) {
  const double lin[3] = {srgb_decode(r), srgb_decode(g), srgb_decode(b)};
  double f[3];
  for (int i = 0; i < 3; ++i) {
    const double xyz =
        kRgbToXyz[i][0] * lin[0] + kRgbToXyz[i][1] * lin[1] + kRgbToXyz[i][2] * lin[2];
    f[i] = lab_f(xyz / kWhite[i]);
  }
  return {static_cast<float>(116.0 * f[1] - 16.0), static_cast<float>(500.0 * (f[0] - f[1])),
          static_cast<float>(200.0 * (f[1] - f[2]))};
}

std::array<float, 3> lab_to_rgb(float l, float a, float b) {
  const double fy = (l + 16.0) / 116.0;
  const double fx = fy + a / 500.0;
  const double fz = fy - b / 200.0;
  const double xyz[3] = {kWhite[0] * lab_f_inv(fx), kWhite[1] * lab_f_inv(fy),
                         kWhite[2] * lab_f_inv(fz)};
  std::array<float, 3> rgb{};
  for (int i = 0; i < 3; ++i) {
    const double lin =
        kXyzToRgb[i][0] * xyz[0] + kXyzToRgb[i][1] * xyz[1] + kXyzToRgb[i][2] * xyz[2];
    rgb[i] = static_cast<float>(std::clamp(srgb_encode(std::max(lin, 0.0)), 0.0, 1.0));
  }
  return rgb;
}

LabImage rgb_to_lab(const RasterImage& img) {
  std::vector<float> out(img.data().size());
  const auto src = img.data();
  for (std::size_t i = 0; i < src.size(); i += 3) {
    const auto lab = rgb_to_lab(src[i], src[i + 1], src[i + 2]);
    out[i] = lab[0];
    out[i + 1] = lab[1];
    out[i + 2] = lab[2];
  }
  return LabImage(img.height(), img.width(), std::move(out));
}

RasterImage resize(const RasterImage& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("resize target must be positive, got " + std::to_string(out_h) +
                                "x" + std::to_string(out_w));
  }
  if (out_h == img.height() && out_w == img.width()) return img;

  struct Tap {
    int i0, i1;
    float t;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> result(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      int i0 = static_cast<int>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      const int i1 = std::min(i0 + 1, in - 1);
      result[static_cast<std::size_t>(o)] = {i0, i1, static_cast<float>(src - i0)};
    }
    return result;
  };
  const auto ys = taps(img.height(), out_h);
  const auto xs = taps(img.width(), out_w);

  RasterImage out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    const Tap& ty = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_w; ++x) {
      const Tap& tx = xs[static_cast<std::size_t>(x)];
      for (int c = 0; c < RasterImage::kChannels; ++c) {
        // a + (b - a) t keeps constant regions exact.
        const float a = img.at(ty.i0, tx.i0, c);
        const float b = img.at(ty.i1, tx.i0, c);
        const float top = a + (img.at(ty.i0, tx.i1, c) - a) * tx.t;
        const float bot = b + (img.at(ty.i1, tx.i1, c) - b) * tx.t;
        out.at(y, x, c) = std::clamp(top + (bot - top) * ty.t, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

}  // namespace deshadow
