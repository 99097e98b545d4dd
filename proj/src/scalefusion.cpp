#include "pixprop/scalefusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pixprop {
namespace {

double blend(double large, double small, double z) {
  if (z == 1.0) return large;
  if (z == 0.0) return small;
  const double v = small + z * (large - small);
  return std::clamp(v, std::min(large, small), std::max(large, small));
}

// Exact when both ends agree, so constant regions stay constant.
double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

PredictionGrid fuse(const PredictionGrid& t_large, const PredictionGrid& t_small, const CellGrid<double>& z) {
  if (!(t_large.geometry == t_small.geometry) || t_large.cells.size() != t_small.cells.size() ||
      !z.same_shape(t_large.geometry.rows, t_large.geometry.cols))
    throw std::invalid_argument("fuse: geometry mismatch");
  if (t_large.mode != GridMode::kAbsolute || t_small.mode != GridMode::kAbsolute)
    throw std::invalid_argument("fuse: inputs must hold absolute coordinates");
  PredictionGrid out(t_large.geometry, GridMode::kAbsolute);
  for (size_t i = 0; i < out.cells.size(); ++i) {
    const double w = z[i];
    if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("fuse: weight outside [0, 1]");
    for (int k = 0; k < 4; ++k) out.cells[i][k] = blend(t_large.cells[i][k], t_small.cells[i][k], w);
  }
  return out;
}

Tensor enlarge_image(const Tensor& image, double factor) {
  if (!(factor >= 1.0)) throw std::invalid_argument("enlarge_image: factor must be >= 1");
  const int out_h = static_cast<int>(std::lround(image.height * factor));
  const int out_w = static_cast<int>(std::lround(image.width * factor));
  if (out_h == image.height && out_w == image.width) return image;
  const double sy = static_cast<double>(image.height) / out_h;
  const double sx = static_cast<double>(image.width) / out_w;

  struct Tap {
    int lo;
    int hi;
    double frac;
  };
  auto taps = [](int out_n, int in_n, double scale) {
    std::vector<Tap> t(out_n);
    for (int i = 0; i < out_n; ++i) {
      const double src = std::clamp((i + 0.5) * scale - 0.5, 0.0, static_cast<double>(in_n - 1));
      const int lo = static_cast<int>(std::floor(src));
      t[i] = {lo, std::min(lo + 1, in_n - 1), src - lo};
    }
    return t;
  };
  const std::vector<Tap> ty = taps(out_h, image.height, sy);
  const std::vector<Tap> tx = taps(out_w, image.width, sx);

  Tensor out(image.channels, out_h, out_w);
  for (int c = 0; c < image.channels; ++c) {
    for (int y = 0; y < out_h; ++y) {
      const Tap& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const Tap& b = tx[x];
        const double top = lerp(image.at(c, a.lo, b.lo), image.at(c, a.lo, b.hi), b.frac);
        const double bot = lerp(image.at(c, a.hi, b.lo), image.at(c, a.hi, b.hi), b.frac);
        out.at(c, y, x) = lerp(top, bot, a.frac);
      }
    }
  }
  return out;
}

std::vector<Proposal> map_back(std::span<const Proposal> enlarged) {
  std::vector<Proposal> out(enlarged.begin(), enlarged.end());
  for (Proposal& p : out) p.provenance.scale = ScaleTag::kEnlarged;
  return out;
}

}  // namespace pixprop
