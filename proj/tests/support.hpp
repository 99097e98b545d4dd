#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pixprop/geometry.hpp"
#include "pixprop/rng.hpp"
#include "pixprop/tensor.hpp"

namespace testing_support {

using pixprop::CounterRng;
using pixprop::NormalizedBox;
using pixprop::Proposal;

inline NormalizedBox random_box(CounterRng& rng) {
  double a = rng.uniform(), b = rng.uniform(), c = rng.uniform(), d = rng.uniform();
  return {std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
}

// Boxes snapped to a 1/q lattice, so overlaps are exact multiples of 1/q^2.
inline NormalizedBox lattice_box(CounterRng& rng, int q) {
  int a = static_cast<int>(rng.below(q + 1)), b = static_cast<int>(rng.below(q + 1));
  int c = static_cast<int>(rng.below(q + 1)), d = static_cast<int>(rng.below(q + 1));
  if (a > b) std::swap(a, b);
  if (c > d) std::swap(c, d);
  return {double(a) / q, double(c) / q, double(b) / q, double(d) / q};
}

// IoU by counting pixel centres of an n x n raster.
inline double raster_iou(const NormalizedBox& a, const NormalizedBox& b, int n) {
  long long ia = 0, ib = 0, both = 0;
  auto lo = [n](double v) { return static_cast<int>(std::ceil(v * n - 0.5)); };
  const int ax0 = lo(a.x_min), ax1 = lo(a.x_max), ay0 = lo(a.y_min), ay1 = lo(a.y_max);
  const int bx0 = lo(b.x_min), bx1 = lo(b.x_max), by0 = lo(b.y_min), by1 = lo(b.y_max);
  ia = 1LL * std::max(0, ax1 - ax0) * std::max(0, ay1 - ay0);
  ib = 1LL * std::max(0, bx1 - bx0) * std::max(0, by1 - by0);
  for (int y = std::max(ay0, by0); y < std::min(ay1, by1); ++y) {
    const int w = std::min(ax1, bx1) - std::max(ax0, bx0);
    if (w > 0) both += w;
  }
  const long long uni = ia + ib - both;
  return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

// Plain-formula IoU written independently of the library.
inline double oracle_iou(const NormalizedBox& a, const NormalizedBox& b) {
  const double aa = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double ab = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  if (aa <= 0 || ab <= 0) return 0.0;
  const double w = std::max(0.0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const double h = std::max(0.0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const double i = w * h;
  return i / (aa + ab - i);
}

// Quadratic NMS: a proposal survives when no better-ranked survivor overlaps
// it by more than the threshold. Ranking by selection, not sorting.
inline std::vector<Proposal> oracle_nms(std::vector<Proposal> props, double thr) {
  auto before = [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.provenance.scale != b.provenance.scale) return a.provenance.scale < b.provenance.scale;
    if (a.provenance.variant != b.provenance.variant) return a.provenance.variant < b.provenance.variant;
    return a.provenance.cell < b.provenance.cell;
  };
  std::vector<Proposal> kept;
  std::vector<bool> used(props.size(), false);
  for (size_t round = 0; round < props.size(); ++round) {
    size_t best = props.size();
    for (size_t i = 0; i < props.size(); ++i) {
      if (used[i]) continue;
      if (best == props.size() || before(props[i], props[best])) best = i;
    }
    used[best] = true;
    bool suppressed = false;
    for (const Proposal& k : kept)
      if (oracle_iou(k.box, props[best].box) > thr) suppressed = true;
    if (!suppressed) kept.push_back(props[best]);
  }
  return kept;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("pixprop_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline pixprop::Tensor random_image(std::uint64_t seed, int c, int h, int w) {
  CounterRng rng(seed);
  pixprop::Tensor t(c, h, w);
  for (double& v : t.data) v = rng.uniform();
  return t;
}

}  // namespace testing_support
