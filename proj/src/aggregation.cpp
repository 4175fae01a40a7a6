#include "deshadow/aggregation.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <stdexcept>

namespace deshadow {

namespace {

constexpr int kUnreached = std::numeric_limits<int>::max();

// Multi-source BFS with 8-connectivity (chessboard metric).
std::vector<int> distance_to(const ShadowMask& seeds) {
  const int h = seeds.height();
  const int w = seeds.width();
  std::vector<int> dist(seeds.pixel_count(), kUnreached);
  std::deque<int> queue;
  for (int i = 0; i < static_cast<int>(dist.size()); ++i) {
    if (seeds.bits()[static_cast<std::size_t>(i)]) {
      dist[static_cast<std::size_t>(i)] = 0;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const int y = cur / w;
    const int x = cur % w;
    const int next_d = dist[static_cast<std::size_t>(cur)] + 1;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy;
        const int nx = x + dx;
        if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
        const auto ni = static_cast<std::size_t>(ny * w + nx);
        if (dist[ni] > next_d) {
          dist[ni] = next_d;
          queue.push_back(static_cast<int>(ni));
        }
      }
    }
  }
  return dist;
}

}  // namespace

std::vector<double> normalized_scores(std::span<const PatchEstimate> estimates) {
  std::vector<double> weights(estimates.size());
  double total = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    weights[k] = std::max(0.0, static_cast<double>(estimates[k].critic_score));
    total += weights[k];
  }
  if (!(total > 0.0)) {
    std::fill(weights.begin(), weights.end(), 1.0 / static_cast<double>(estimates.size()));
    return weights;
  }
  for (auto& v : weights) v /= total;
  return weights;
}

ShadowParams aggregate_params(std::span<const PatchEstimate> estimates, const ParamBounds& bounds) {
  if (estimates.empty()) throw std::invalid_argument("aggregate_params: no patch estimates");
  const auto weights = normalized_scores(estimates);
  std::array<double, 3> w{}, b{};
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    for (std::size_t c = 0; c < 3; ++c) {
      w[c] += weights[k] * estimates[k].params.w[c];
      b[c] += weights[k] * estimates[k].params.b[c];
    }
  }
  ShadowParams out;
  for (std::size_t c = 0; c < 3; ++c) {
    // Rounding can step a convex combination an ulp outside the box.
    out.w[c] = std::clamp(static_cast<float>(w[c]), bounds.w_min, bounds.w_max);
    out.b[c] = std::clamp(static_cast<float>(b[c]), -bounds.b_max, bounds.b_max);
  }
  return out;
}

std::vector<float> penumbra_ramp(const RegionMasks& regions) {
  const ShadowMask& shadow_side = regions.umbra.none() ? regions.m_in : regions.umbra;
  const ShadowMask& lit_side = regions.nonshadow.none() ? regions.m_out : regions.nonshadow;
  const auto d1 = distance_to(shadow_side);
  const auto d0 = distance_to(lit_side);
  std::vector<float> ramp(d1.size());
  for (std::size_t i = 0; i < ramp.size(); ++i) {
    if (d1[i] == kUnreached && d0[i] == kUnreached) {
      ramp[i] = 0.5f;
    } else if (d1[i] == kUnreached) {
      ramp[i] = 0.0f;
    } else if (d0[i] == kUnreached) {
      ramp[i] = 1.0f;
    } else {
      ramp[i] = static_cast<float>(d0[i]) / static_cast<float>(d0[i] + d1[i]);
    }
  }
  return ramp;
}

MatteLayer stitch_matte(std::span<const PatchEstimate> estimates, const RegionMasks& regions,
                        int height, int width) {
  if (regions.umbra.height() != height || regions.umbra.width() != width) {
    throw std::invalid_argument("stitch_matte: region size mismatch");
  }
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::vector<double> num(n, 0.0), den(n, 0.0);
  const auto weights = estimates.empty() ? std::vector<double>{} : normalized_scores(estimates);
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const auto& e = estimates[k];
    for (int y = 0; y < e.matte.height(); ++y) {
      const int iy = e.top + y;
      if (iy < 0 || iy >= height) continue;
      for (int x = 0; x < e.matte.width(); ++x) {
        const int ix = e.left + x;
        if (ix < 0 || ix >= width) continue;
        const auto i = static_cast<std::size_t>(iy) * width + ix;
        num[i] += weights[k] * e.matte.at(y, x);
        den[i] += weights[k];
      }
    }
  }

  std::vector<float> ramp;
  MatteLayer matte(height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto i = static_cast<std::size_t>(y) * width + x;
      float a;
      if (regions.nonshadow.at(y, x)) {
        a = 0.0f;
      } else if (regions.umbra.at(y, x)) {
        a = 1.0f;
      } else if (den[i] > 0.0) {
        a = static_cast<float>(num[i] / den[i]);
      } else {
        if (ramp.empty()) ramp = penumbra_ramp(regions);
        a = ramp[i];
      }
      matte.set(y, x, a);
    }
  }
  return matte;
}

}  // namespace deshadow
