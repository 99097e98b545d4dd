#include "pixprop/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "pixprop/errors.hpp"
#include "pixprop/parallel.hpp"

namespace pixprop {

namespace fs = std::filesystem;

double best_overlap(const NormalizedBox& gt, std::span<const NormalizedBox> proposals, size_t n) {
  const size_t m = std::min(n, proposals.size());
  double best = 0.0;
  for (size_t i = 0; i < m; ++i) best = std::max(best, iou(gt, proposals[i]));
  return best;
}

namespace {

std::vector<double> overlaps(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals,
                             size_t n) {
  std::vector<double> out;
  out.reserve(gts.size());
  for (const NormalizedBox& g : gts) out.push_back(best_overlap(g, proposals, n));
  return out;
}

}  // namespace

std::vector<double> default_iou_grid() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back((50 + 5 * i) / 100.0);
  return t;
}

double recall_from_overlaps(std::span<const double> best, double iou_threshold) {
  if (best.empty()) return 0.0;
  const auto hits = std::count_if(best.begin(), best.end(), [&](double b) { return b >= iou_threshold; });
  return static_cast<double>(hits) / static_cast<double>(best.size());
}

double average_recall_from_overlaps(std::span<const double> best) {
  const std::vector<double> grid = default_iou_grid();
  double s = 0.0;
  for (double t : grid) s += recall_from_overlaps(best, t);
  return s / static_cast<double>(grid.size());
}

double mean_overlap(std::span<const double> best) {
  if (best.empty()) return 0.0;
  double s = 0.0;
  for (double b : best) s += b;
  return s / static_cast<double>(best.size());
}

double recall_at(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals,
                 double iou_threshold, size_t n) {
  return recall_from_overlaps(overlaps(gts, proposals, n), iou_threshold);
}

double average_recall(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals, size_t n) {
  return average_recall_from_overlaps(overlaps(gts, proposals, n));
}

double abo(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals, size_t n) {
  return mean_overlap(overlaps(gts, proposals, n));
}

std::vector<AreaBin> abo_by_area(std::span<const double> best, std::span<const std::int64_t> areas,
                                 std::span<const double> edges) {
  if (best.size() != areas.size()) throw std::invalid_argument("abo_by_area: overlaps and areas differ in length");
  std::vector<AreaBin> out;
  for (size_t b = 0; b + 1 < edges.size(); ++b) {
    AreaBin bin{edges[b], edges[b + 1], 0.0, 0};
    double sum = 0.0;
    for (size_t i = 0; i < best.size(); ++i) {
      const double a = static_cast<double>(areas[i]);
      if (a >= bin.area_lo && a < bin.area_hi) {
        sum += best[i];
        ++bin.count;
      }
    }
    if (bin.count == 0) continue;
    bin.abo = sum / static_cast<double>(bin.count);
    out.push_back(bin);
  }
  return out;
}

std::vector<AreaBin> abo_by_area(std::span<const NormalizedBox> gts, std::span<const std::int64_t> areas,
                                 std::span<const NormalizedBox> proposals, size_t n,
                                 std::span<const double> edges) {
  return abo_by_area(overlaps(gts, proposals, n), areas, edges);
}

void EvalGrids::validate() const {
  if (n_values.empty()) throw ConfigError("eval.n_values must not be empty");
  for (size_t i = 0; i < n_values.size(); ++i)
    if (n_values[i] < 1 || (i > 0 && n_values[i] <= n_values[i - 1]))
      throw ConfigError("eval.n_values must be positive and increasing");
  if (iou_thresholds.empty()) throw ConfigError("eval.iou_thresholds must not be empty");
  for (size_t i = 0; i < iou_thresholds.size(); ++i)
    if (!(iou_thresholds[i] >= 0.0 && iou_thresholds[i] <= 1.0) ||
        (i > 0 && iou_thresholds[i] <= iou_thresholds[i - 1]))
      throw ConfigError("eval.iou_thresholds must be increasing within [0, 1]");
  for (size_t i = 1; i < area_edges.size(); ++i)
    if (!(area_edges[i] > area_edges[i - 1])) throw ConfigError("eval.area_edges must be increasing");
  if (area_n < 1) throw ConfigError("eval.area_n must be positive");
}

size_t EvalReport::n_index(int n) const {
  const auto it = std::find(grids.n_values.begin(), grids.n_values.end(), n);
  if (it == grids.n_values.end()) throw std::out_of_range("n = " + std::to_string(n) + " is not on the grid");
  return static_cast<size_t>(it - grids.n_values.begin());
}

double EvalReport::abo_in_range(size_t ni, double area_lo, double area_hi) const {
  double s = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < areas.size(); ++i) {
    const double a = static_cast<double>(areas[i]);
    if (a >= area_lo && a < area_hi) {
      s += best[ni][i];
      ++count;
    }
  }
  return count == 0 ? 0.0 : s / static_cast<double>(count);
}

EvalReport evaluate(std::span<const ImageEval> images, const EvalGrids& grids, int workers) {
  grids.validate();
  const size_t nn = grids.n_values.size();
  // per image: [n index][counted gt], plus the area budget row last
  std::vector<std::vector<std::vector<double>>> per_image(images.size());
  parallel_for(images.size(), workers, [&](size_t i) {
    const ImageEval& img = images[i];
    auto& rows = per_image[i];
    rows.assign(nn + 1, {});
    for (const GroundTruth& g : img.gts) {
      if (g.ignore) continue;
      for (size_t k = 0; k < nn; ++k)
        rows[k].push_back(best_overlap(g.box, img.proposals, static_cast<size_t>(grids.n_values[k])));
      rows[nn].push_back(best_overlap(g.box, img.proposals, static_cast<size_t>(grids.area_n)));
    }
  });

  EvalReport r;
  r.grids = grids;
  r.best.assign(nn, {});
  std::vector<double> area_best;
  for (size_t i = 0; i < images.size(); ++i) {
    for (const GroundTruth& g : images[i].gts)
      if (!g.ignore) r.areas.push_back(g.area);
    for (size_t k = 0; k < nn; ++k) r.best[k].insert(r.best[k].end(), per_image[i][k].begin(), per_image[i][k].end());
    area_best.insert(area_best.end(), per_image[i][nn].begin(), per_image[i][nn].end());
  }
  for (size_t k = 0; k < nn; ++k) {
    std::vector<double> row;
    for (double t : grids.iou_thresholds) row.push_back(recall_from_overlaps(r.best[k], t));
    r.recall.push_back(std::move(row));
    r.ar.push_back(average_recall_from_overlaps(r.best[k]));
    r.abo.push_back(mean_overlap(r.best[k]));
  }
  r.area_bins = abo_by_area(area_best, r.areas, grids.area_edges);
  return r;
}

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

void emit_report(const EvalReport& report, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const EvalGrids& g = report.grids;
  std::string recall = "n,iou,recall\n";
  std::string ar = "n,ar\n";
  std::string abo_csv = "n,abo\n";
  for (size_t k = 0; k < report.recall.size(); ++k) {
    const std::string n = std::to_string(g.n_values[k]);
    for (size_t t = 0; t < g.iou_thresholds.size(); ++t)
      recall += n + "," + fixed6(g.iou_thresholds[t]) + "," + fixed6(report.recall[k][t]) + "\n";
    ar += n + "," + fixed6(report.ar[k]) + "\n";
    abo_csv += n + "," + fixed6(report.abo[k]) + "\n";
  }
  std::string area = "area_lo,area_hi,abo\n";
  for (const AreaBin& b : report.area_bins)
    area += fixed6(b.area_lo) + "," + fixed6(b.area_hi) + "," + fixed6(b.abo) + "\n";
  write_text(dir / "recall.csv", recall);
  write_text(dir / "ar.csv", ar);
  write_text(dir / "abo.csv", abo_csv);
  write_text(dir / "abo_by_area.csv", area);
}

}  // namespace pixprop
