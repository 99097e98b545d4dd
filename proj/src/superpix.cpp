#include "pixprop/superpix.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pixprop/synthdata.hpp"

namespace pixprop {

void PixelRect::extend(const PixelRect& o) {
  if (o.empty()) return;
  if (empty()) {
    *this = o;
    return;
  }
  x0 = std::min(x0, o.x0);
  y0 = std::min(y0, o.y0);
  x1 = std::max(x1, o.x1);
  y1 = std::max(y1, o.y1);
}

PixelRect pixel_span(const NormalizedBox& box, int width, int height) {
  constexpr double kEps = 1e-9;
  PixelRect r;
  r.x0 = std::max(0, static_cast<int>(std::floor(box.x_min * width + kEps)));
  r.y0 = std::max(0, static_cast<int>(std::floor(box.y_min * height + kEps)));
  r.x1 = std::min(width - 1, static_cast<int>(std::ceil(box.x_max * width - kEps)) - 1);
  r.y1 = std::min(height - 1, static_cast<int>(std::ceil(box.y_max * height - kEps)) - 1);
  return r;
}

NormalizedBox normalized_from_rect(const PixelRect& rect, int width, int height) {
  return {static_cast<double>(rect.x0) / width, static_cast<double>(rect.y0) / height,
          static_cast<double>(rect.x1 + 1) / width, static_cast<double>(rect.y1 + 1) / height};
}

SuperpixelMap make_superpixel_map(int width, int height, std::vector<std::int32_t> labels) {
  if (labels.size() != static_cast<size_t>(width) * height)
    throw std::invalid_argument("superpixel labels do not cover the image");
  SuperpixelMap m;
  m.width = width;
  m.height = height;
  std::int32_t max_label = -1;
  for (std::int32_t v : labels) {
    if (v < 0) throw std::invalid_argument("unlabeled pixel in superpixel map");
    max_label = std::max(max_label, v);
  }
  m.count = max_label + 1;
  m.pixel_counts.assign(m.count, 0);
  m.rects.assign(m.count, PixelRect{});
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::int32_t v = labels[static_cast<size_t>(y) * width + x];
      ++m.pixel_counts[v];
      m.rects[v].extend({x, y, x, y});
    }
  }
  for (std::int64_t c : m.pixel_counts)
    if (c == 0) throw std::invalid_argument("superpixel map has an empty label");
  m.labels = std::move(labels);
  return m;
}

int default_segment_count(int width, int height) { return std::max(1, width * height / 64); }

namespace {

struct Center {
  double l0, l1, l2;
  double x, y;
};

// 4-connected components of `labels`; returns the component id per pixel
// and each component's size.
std::vector<int> components(const std::vector<std::int32_t>& labels, int w, int h, std::vector<int>& sizes) {
  std::vector<int> comp(labels.size(), -1);
  std::vector<size_t> stack;
  sizes.clear();
  for (size_t start = 0; start < labels.size(); ++start) {
    if (comp[start] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    const std::int32_t lab = labels[start];
    int size = 0;
    comp[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(p % w);
      const int y = static_cast<int>(p / w);
      const size_t nb[4] = {p - 1, p + 1, p - w, p + w};
      const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
      for (int k = 0; k < 4; ++k) {
        if (!ok[k]) continue;
        const size_t q = nb[k];
        if (comp[q] < 0 && labels[q] == lab) {
          comp[q] = id;
          stack.push_back(q);
        }
      }
    }
    sizes.push_back(size);
  }
  return comp;
}

// Keeps the largest component of every label and moves every other fragment
// to the neighbouring settled segment closest in mean colour, longest shared
// border breaking ties.
void enforce_connectivity(std::vector<std::int32_t>& labels, int w, int h,
                          const std::vector<std::array<double, 3>>& colour) {
  std::vector<int> sizes;
  const std::vector<int> comp = components(labels, w, h, sizes);
  const int n_comp = static_cast<int>(sizes.size());

  std::vector<std::int32_t> comp_label(n_comp);
  std::vector<size_t> first_pixel(n_comp, labels.size());
  for (size_t p = 0; p < labels.size(); ++p) {
    comp_label[comp[p]] = labels[p];
    first_pixel[comp[p]] = std::min(first_pixel[comp[p]], p);
  }
  std::int32_t max_label = -1;
  for (std::int32_t l : labels) max_label = std::max(max_label, l);
  std::vector<int> best_comp(max_label + 1, -1);
  for (int c = 0; c < n_comp; ++c) {
    const std::int32_t l = comp_label[c];
    if (l < 0) continue;
    if (best_comp[l] < 0 || sizes[c] > sizes[best_comp[l]]) best_comp[l] = c;
  }
  std::vector<char> settled(n_comp, 0);
  std::vector<int> orphans;
  for (int c = 0; c < n_comp; ++c) {
    if (comp_label[c] >= 0 && best_comp[comp_label[c]] == c) settled[c] = 1;
    else orphans.push_back(c);
  }
  if (orphans.empty()) return;

  std::vector<std::vector<size_t>> pixels(n_comp);
  for (int c : orphans) pixels[c].reserve(sizes[c]);
  for (size_t p = 0; p < labels.size(); ++p)
    if (!settled[comp[p]]) pixels[comp[p]].push_back(p);

  std::vector<std::int32_t> final_label = comp_label;
  bool any_settled = std::any_of(settled.begin(), settled.end(), [](char s) { return s != 0; });
  if (!any_settled) {
    std::fill(labels.begin(), labels.end(), 0);
    return;
  }
  std::vector<std::array<double, 3>> comp_mean(n_comp, {0.0, 0.0, 0.0});
  for (size_t p = 0; p < labels.size(); ++p)
    for (int c = 0; c < 3; ++c) comp_mean[comp[p]][c] += colour[p][c];
  for (int c = 0; c < n_comp; ++c)
    for (double& v : comp_mean[c]) v /= sizes[c];
  // Mean colour of each label's settled pixels, grown as fragments join.
  std::vector<std::array<double, 3>> label_sum(max_label + 1, {0.0, 0.0, 0.0});
  std::vector<std::int64_t> label_count(max_label + 1, 0);
  for (int c = 0; c < n_comp; ++c) {
    if (!settled[c]) continue;
    for (int k = 0; k < 3; ++k) label_sum[comp_label[c]][k] += comp_mean[c][k] * sizes[c];
    label_count[comp_label[c]] += sizes[c];
  }
  std::vector<int> border(max_label + 1, 0);
  while (!orphans.empty()) {
    std::vector<int> pending;
    for (int c : orphans) {
      std::fill(border.begin(), border.end(), 0);
      bool found = false;
      for (size_t p : pixels[c]) {
        const int x = static_cast<int>(p % w);
        const int y = static_cast<int>(p / w);
        const size_t nb[4] = {p - 1, p + 1, p - w, p + w};
        const bool ok[4] = {x > 0, x + 1 < w, y > 0, y + 1 < h};
        for (int k = 0; k < 4; ++k) {
          if (!ok[k]) continue;
          const int qc = comp[nb[k]];
          if (qc == c || !settled[qc]) continue;
          ++border[final_label[qc]];
          found = true;
        }
      }
      if (!found) {
        pending.push_back(c);
        continue;
      }
      std::int32_t best = -1;
      double best_d = 0.0;
      for (std::int32_t l = 0; l <= max_label; ++l) {
        if (border[l] == 0) continue;
        double d = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double e = comp_mean[c][k] - label_sum[l][k] / static_cast<double>(label_count[l]);
          d += e * e;
        }
        if (best < 0 || d < best_d || (d == best_d && border[l] > border[best])) {
          best = l;
          best_d = d;
        }
      }
      final_label[c] = best;
      for (int k = 0; k < 3; ++k) label_sum[best][k] += comp_mean[c][k] * sizes[c];
      label_count[best] += sizes[c];
      settled[c] = 1;
    }
    if (pending.size() == orphans.size()) break;  // unreachable on a connected image
    orphans.swap(pending);
  }
  for (size_t p = 0; p < labels.size(); ++p) labels[p] = final_label[comp[p]];
}

void relabel_dense(std::vector<std::int32_t>& labels) {
  std::int32_t max_label = -1;
  for (std::int32_t l : labels) max_label = std::max(max_label, l);
  std::vector<std::int32_t> remap(max_label + 1, -1);
  std::int32_t next = 0;
  for (std::int32_t& l : labels) {
    if (remap[l] < 0) remap[l] = next++;
    l = remap[l];
  }
}

}  // namespace

SuperpixelMap slic(const Tensor& image, const SlicParams& params) {
  const int w = image.width;
  const int h = image.height;
  const int n = w * h;
  if (image.channels < 1 || n == 0) throw std::invalid_argument("slic: empty image");
  if (params.segments < 0) throw std::invalid_argument("slic: negative segment count");
  const int k = params.segments > 0 ? params.segments : default_segment_count(w, h);
  if (k > n) throw std::invalid_argument("slic: more segments than pixels");
  if (params.iterations < 0 || !(params.compactness >= 0.0)) throw std::invalid_argument("slic: bad parameters");

  const double step = std::sqrt(static_cast<double>(n) / k);
  const int channels = std::min(image.channels, 3);
  auto feature = [&](int c, int x, int y) { return c < channels ? params.color_scale * image.at(c, y, x) : 0.0; };
  auto color_sq = [&](int x0, int y0, int x1, int y1) {
    double s = 0.0;
    for (int c = 0; c < channels; ++c) {
      const double d = feature(c, x0, y0) - feature(c, x1, y1);
      s += d * d;
    }
    return s;
  };
  auto gradient = [&](int x, int y) {
    const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
    const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
    return color_sq(xr, y, xl, y) + color_sq(x, yd, x, yu);
  };

  const int nx = std::clamp(static_cast<int>(std::lround(std::sqrt(static_cast<double>(k) * w / h))), 1, w);
  const int ny = std::min(h, std::max(1, static_cast<int>(std::lround(static_cast<double>(k) / nx))));
  std::vector<Center> centers;
  centers.reserve(static_cast<size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int cx = static_cast<int>(((2LL * i + 1) * w) / (2LL * nx));
      int cy = static_cast<int>(((2LL * j + 1) * h) / (2LL * ny));
      double best = gradient(cx, cy);
      int bx = cx, by = cy;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || x >= w || y < 0 || y >= h) continue;
          const double g = gradient(x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      centers.push_back({feature(0, bx, by), feature(1, bx, by), feature(2, bx, by), static_cast<double>(bx),
                         static_cast<double>(by)});
    }
  }

  std::vector<std::int32_t> labels(n, -1);
  std::vector<double> dist(n);
  const double spatial_weight = (params.compactness / step) * (params.compactness / step);
  const int iterations = std::max(params.iterations, 1);
  for (int it = 0; it < iterations; ++it) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(labels.begin(), labels.end(), -1);
    for (size_t ci = 0; ci < centers.size(); ++ci) {
      const Center& c = centers[ci];
      const int x0 = std::max(0, static_cast<int>(std::floor(c.x - step)));
      const int x1 = std::min(w - 1, static_cast<int>(std::ceil(c.x + step)));
      const int y0 = std::max(0, static_cast<int>(std::floor(c.y - step)));
      const int y1 = std::min(h - 1, static_cast<int>(std::ceil(c.y + step)));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const double d0 = feature(0, x, y) - c.l0;
          const double d1 = feature(1, x, y) - c.l1;
          const double d2 = feature(2, x, y) - c.l2;
          const double dx = x - c.x;
          const double dy = y - c.y;
          const double d = d0 * d0 + d1 * d1 + d2 * d2 + (dx * dx + dy * dy) * spatial_weight;
          const size_t p = static_cast<size_t>(y) * w + x;
          if (d < dist[p]) {
            dist[p] = d;
            labels[p] = static_cast<std::int32_t>(ci);
          }
        }
      }
    }
    if (it + 1 == iterations) {
      // Pixels no window reached go to the nearest centre overall.
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const size_t p = static_cast<size_t>(y) * w + x;
          if (labels[p] >= 0) continue;
          for (size_t ci = 0; ci < centers.size(); ++ci) {
            const Center& c = centers[ci];
            const double d0 = feature(0, x, y) - c.l0;
            const double d1 = feature(1, x, y) - c.l1;
            const double d2 = feature(2, x, y) - c.l2;
            const double dx = x - c.x;
            const double dy = y - c.y;
            const double d = d0 * d0 + d1 * d1 + d2 * d2 + (dx * dx + dy * dy) * spatial_weight;
            if (d < dist[p]) {
              dist[p] = d;
              labels[p] = static_cast<std::int32_t>(ci);
            }
          }
        }
      }
      break;
    }
    std::vector<Center> sum(centers.size(), Center{0, 0, 0, 0, 0});
    std::vector<std::int64_t> count(centers.size(), 0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int32_t l = labels[static_cast<size_t>(y) * w + x];
        if (l < 0) continue;
        Center& s = sum[l];
        s.l0 += feature(0, x, y);
        s.l1 += feature(1, x, y);
        s.l2 += feature(2, x, y);
        s.x += x;
        s.y += y;
        ++count[l];
      }
    }
    for (size_t ci = 0; ci < centers.size(); ++ci) {
      if (count[ci] == 0) continue;
      const double inv = 1.0 / static_cast<double>(count[ci]);
      centers[ci] = {sum[ci].l0 * inv, sum[ci].l1 * inv, sum[ci].l2 * inv, sum[ci].x * inv, sum[ci].y * inv};
    }
  }

  std::vector<std::array<double, 3>> colour(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) colour[static_cast<size_t>(y) * w + x] = {feature(0, x, y), feature(1, x, y), feature(2, x, y)};
  enforce_connectivity(labels, w, h, colour);
  relabel_dense(labels);
  return make_superpixel_map(w, h, std::move(labels));
}

std::pair<Proposal, Proposal> refine(const Proposal& proposal, const SuperpixelMap& sp) {
  Proposal shrunk = proposal;
  Proposal expanded = proposal;
  shrunk.provenance.variant = VariantTag::kShrunk;
  expanded.provenance.variant = VariantTag::kExpanded;

  const PixelRect span = pixel_span(proposal.box, sp.width, sp.height);
  if (span.empty()) return {shrunk, expanded};

  std::vector<std::int32_t> present;
  std::vector<char> seen(sp.count, 0);
  for (int y = span.y0; y <= span.y1; ++y) {
    for (int x = span.x0; x <= span.x1; ++x) {
      const std::int32_t l = sp.at(x, y);
      if (!seen[l]) {
        seen[l] = 1;
        present.push_back(l);
      }
    }
  }
  PixelRect inside;
  PixelRect touching;
  for (std::int32_t l : present) {
    touching.extend(sp.rects[l]);
    if (span.contains(sp.rects[l])) inside.extend(sp.rects[l]);
  }
  if (!inside.empty()) shrunk.box = normalized_from_rect(inside, sp.width, sp.height);
  expanded.box = normalized_from_rect(touching, sp.width, sp.height);
  return {shrunk, expanded};
}

void write_label_pgm(const std::filesystem::path& path, const SuperpixelMap& map) {
  LabelImage img(map.width, map.height);
  img.labels = map.labels;
  write_pgm16(path, img);
}

bool segments_connected(const SuperpixelMap& map) {
  std::vector<int> sizes;
  components(map.labels, map.width, map.height, sizes);
  return static_cast<int>(sizes.size()) == map.count;
}

}  // namespace pixprop
