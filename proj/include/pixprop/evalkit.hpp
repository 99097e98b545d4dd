#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pixprop/geometry.hpp"

namespace pixprop {

// Max IoU of gt against the first n proposals; 0 when there are none.
double best_overlap(const NormalizedBox& gt, std::span<const NormalizedBox> proposals, size_t n);

double recall_at(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals,
                 double iou_threshold, size_t n);
double average_recall(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals, size_t n);
double abo(std::span<const NormalizedBox> gts, std::span<const NormalizedBox> proposals, size_t n);

// 0.50, 0.55, ..., 0.95.
std::vector<double> default_iou_grid();

// Same metrics from precomputed best overlaps.
double recall_from_overlaps(std::span<const double> best, double iou_threshold);
double average_recall_from_overlaps(std::span<const double> best);
double mean_overlap(std::span<const double> best);

struct AreaBin {
  double area_lo = 0.0;  // inclusive
  double area_hi = 0.0;  // exclusive
  double abo = 0.0;
  std::int64_t count = 0;
};

// ABO per [edges[i], edges[i + 1]) bin of ground-truth pixel area; bins
// without ground truths are left out.
std::vector<AreaBin> abo_by_area(std::span<const double> best, std::span<const std::int64_t> areas,
                                 std::span<const double> edges);
std::vector<AreaBin> abo_by_area(std::span<const NormalizedBox> gts, std::span<const std::int64_t> areas,
                                 std::span<const NormalizedBox> proposals, size_t n,
                                 std::span<const double> edges);

struct GroundTruth {
  NormalizedBox box;
  std::int64_t area = 0;
  bool ignore = false;  // excluded from every metric
};

struct ImageEval {
  std::vector<GroundTruth> gts;
  std::vector<NormalizedBox> proposals;  // rank order
};

struct EvalGrids {
  std::vector<int> n_values{1, 2, 5, 10, 20, 50, 100, 200, 500, 1000};
  std::vector<double> iou_thresholds = default_iou_grid();
  std::vector<double> area_edges{0, 16, 32, 64, 128, 256, 512, 1024, 4096};
  int area_n = 1000;  // proposal budget for the per-area breakdown

  void validate() const;
};

struct EvalReport {
  EvalGrids grids;
  std::vector<std::int64_t> areas;               // per counted gt
  std::vector<std::vector<double>> best;         // [n index][gt]
  std::vector<std::vector<double>> recall;       // [n index][threshold index]
  std::vector<double> ar;                        // per n
  std::vector<double> abo;                       // per n
  std::vector<AreaBin> area_bins;                // at grids.area_n

  // ABO at the n-th budget over gts with area in [area_lo, area_hi).
  double abo_in_range(size_t n_index, double area_lo, double area_hi) const;
  size_t n_index(int n) const;
};

// Pools every counted ground truth across images. Parallel over images with
// an ordered reduction.
EvalReport evaluate(std::span<const ImageEval> images, const EvalGrids& grids, int workers = 1);

// recall.csv (n,iou,recall), ar.csv (n,ar), abo.csv (n,abo) and
// abo_by_area.csv (area_lo,area_hi,abo), six decimals.
void emit_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace pixprop
