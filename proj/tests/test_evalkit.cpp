#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "pixprop/evalkit.hpp"
#include "support.hpp"

using namespace pixprop;
using testing_support::oracle_iou;
using testing_support::random_box;

namespace {

struct Instance {
  std::vector<NormalizedBox> gts, props;
  std::vector<std::int64_t> areas;
};

Instance random_instance(std::uint64_t seed) {
  CounterRng rng(seed);
  Instance in;
  const int g = 1 + static_cast<int>(rng.below(8)), p = static_cast<int>(rng.below(60));
  for (int i = 0; i < g; ++i) {
    in.gts.push_back(random_box(rng));
    in.areas.push_back(static_cast<std::int64_t>(rng.below(3000)));
  }
  for (int i = 0; i < p; ++i) {
    // Some proposals are jittered copies of gts so high overlaps occur.
    if (rng.below(2)) {
      NormalizedBox b = in.gts[rng.below(g)];
      const double j = rng.uniform(0, 0.08);
      b = clip({b.x_min - j, b.y_min + j * rng.uniform(), b.x_max + j * rng.uniform(), b.y_max - j});
      in.props.push_back(b);
    } else {
      in.props.push_back(random_box(rng));
    }
  }
  return in;
}

double oracle_best(const NormalizedBox& gt, const std::vector<NormalizedBox>& props, size_t n) {
  double best = 0;
  for (size_t i = 0; i < props.size() && i < n; ++i) best = std::max(best, oracle_iou(gt, props[i]));
  return best;
}

double oracle_recall(const Instance& in, double t, size_t n) {
  int hit = 0;
  for (const auto& g : in.gts) hit += oracle_best(g, in.props, n) >= t;
  return double(hit) / in.gts.size();
}

double oracle_ar(const Instance& in, size_t n) {
  double s = 0;
  for (int k = 0; k < 10; ++k) s += oracle_recall(in, 0.5 + 0.05 * k, n);
  return s / 10;
}

double oracle_abo(const Instance& in, size_t n) {
  double s = 0;
  for (const auto& g : in.gts) s += oracle_best(g, in.props, n);
  return s / in.gts.size();
}

}  // namespace

TEST(Metrics, HandExamples) {
  const std::vector<NormalizedBox> gts{{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 1}};
  const std::vector<NormalizedBox> props{{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 0.82}, {0, 0, 1, 1}};
  EXPECT_NEAR(best_overlap(gts[1], props, 3), 0.64, 1e-12);
  EXPECT_DOUBLE_EQ(best_overlap(gts[1], props, 1), 0.0);
  EXPECT_DOUBLE_EQ(recall_at(gts, props, 0.5, 3), 1.0);
  EXPECT_DOUBLE_EQ(recall_at(gts, props, 0.7, 3), 0.5);
  EXPECT_DOUBLE_EQ(recall_at(gts, props, 0.5, 1), 0.5);
  EXPECT_NEAR(abo(gts, props, 3), 0.82, 1e-12);
  // gt 0 is hit at every threshold, gt 1 (0.64) at 0.50, 0.55 and 0.60.
  EXPECT_DOUBLE_EQ(average_recall(gts, props, 3), (10 + 3) / 20.0);
}

TEST(Metrics, ThresholdIsInclusive) {
  const std::vector<NormalizedBox> gts{{0, 0, 0.5, 1}};
  const std::vector<NormalizedBox> props{{0, 0, 1, 1}};
  EXPECT_DOUBLE_EQ(recall_at(gts, props, 0.5, 1), 1.0);
}

TEST(Metrics, NoProposals) {
  const std::vector<NormalizedBox> gts{{0, 0, 0.5, 1}};
  EXPECT_EQ(recall_at(gts, {}, 0.5, 10), 0.0);
  EXPECT_EQ(abo(gts, {}, 10), 0.0);
  EXPECT_EQ(average_recall(gts, {}, 10), 0.0);
}

TEST(Metrics, DefaultIouGrid) {
  const auto g = default_iou_grid();
  ASSERT_EQ(g.size(), 10u);
  EXPECT_DOUBLE_EQ(g.front(), 0.5);
  EXPECT_DOUBLE_EQ(g.back(), 0.95);
  for (size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.5 + 0.05 * i, 1e-12);
}

TEST(Metrics, MatchDoubleLoopOracles) {
  for (std::uint64_t s = 1; s <= 50; ++s) {
    const Instance in = random_instance(s);
    for (size_t n : {1u, 5u, 20u, 100u}) {
      for (double t : {0.5, 0.7, 0.9}) EXPECT_NEAR(recall_at(in.gts, in.props, t, n), oracle_recall(in, t, n), 1e-12);
      EXPECT_NEAR(average_recall(in.gts, in.props, n), oracle_ar(in, n), 1e-12);
      EXPECT_NEAR(abo(in.gts, in.props, n), oracle_abo(in, n), 1e-12);
    }
  }
}

TEST(Metrics, MonotoneInBudgetAndThreshold) {
  for (std::uint64_t s = 100; s < 130; ++s) {
    const Instance in = random_instance(s);
    double prev_abo = 0, prev_rec = 0, prev_ar = 0;
    for (size_t n = 1; n <= 60; ++n) {
      const double a = abo(in.gts, in.props, n), r = recall_at(in.gts, in.props, 0.6, n),
                   ar = average_recall(in.gts, in.props, n);
      EXPECT_GE(a, prev_abo);
      EXPECT_GE(r, prev_rec);
      EXPECT_GE(ar, prev_ar);
      prev_abo = a, prev_rec = r, prev_ar = ar;
    }
    double prev = 1.0;
    for (double t = 0.3; t <= 1.0; t += 0.05) {
      const double r = recall_at(in.gts, in.props, t, 60);
      EXPECT_LE(r, prev);
      prev = r;
    }
  }
}

TEST(Metrics, AverageRecallBounds) {
  for (std::uint64_t s = 200; s < 230; ++s) {
    const Instance in = random_instance(s);
    const double ar = average_recall(in.gts, in.props, 100);
    EXPECT_LE(ar, recall_at(in.gts, in.props, 0.5, 100) + 1e-15);
    EXPECT_GE(ar, recall_at(in.gts, in.props, 0.95, 100) - 1e-15);
  }
}

TEST(AreaBins, OracleAndEmptyBins) {
  const std::vector<double> edges{0, 16, 32, 64};
  const std::vector<double> best{0.2, 0.4, 0.9, 0.1};
  const std::vector<std::int64_t> areas{3, 15, 40, 64};
  const auto bins = abo_by_area(best, areas, edges);
  // [16, 32) is empty and area 64 falls outside every bin.
  ASSERT_EQ(bins.size(), 2u);
  EXPECT_EQ(bins[0].count, 2);
  EXPECT_DOUBLE_EQ(bins[0].abo, 0.3);
  EXPECT_EQ(bins[1].area_lo, 32);
  EXPECT_EQ(bins[1].area_hi, 64);
  EXPECT_DOUBLE_EQ(bins[1].abo, 0.9);
}

TEST(AreaBins, BoxOverloadMatchesOracle) {
  const std::vector<double> edges{0, 100, 500, 1000, 4096};
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const Instance in = random_instance(s);
    const auto bins = abo_by_area(in.gts, in.areas, in.props, 30, edges);
    for (const AreaBin& b : bins) {
      double sum = 0;
      int cnt = 0;
      for (size_t i = 0; i < in.gts.size(); ++i)
        if (in.areas[i] >= b.area_lo && in.areas[i] < b.area_hi) sum += oracle_best(in.gts[i], in.props, 30), ++cnt;
      EXPECT_EQ(b.count, cnt);
      EXPECT_NEAR(b.abo, sum / cnt, 1e-12);
    }
  }
}

TEST(Evaluate, PoolsImagesAndSkipsIgnored) {
  EvalGrids grids;
  grids.n_values = {1, 2};
  grids.area_n = 2;
  grids.area_edges = {0, 100, 1000};
  std::vector<ImageEval> images(2);
  images[0].gts = {{{0, 0, 0.5, 0.5}, 50, false}, {{0.5, 0.5, 1, 1}, 500, true}};
  images[0].proposals = {{0, 0, 0.5, 0.5}};
  images[1].gts = {{{0.5, 0.5, 1, 1}, 500, false}};
  images[1].proposals = {{0, 0, 0.2, 0.2}, {0.5, 0.5, 1, 0.8}};
  const EvalReport r = evaluate(images, grids);
  ASSERT_EQ(r.areas.size(), 2u);
  EXPECT_DOUBLE_EQ(r.abo[0], 0.5);
  EXPECT_NEAR(r.abo[1], 0.8, 1e-12);
  EXPECT_DOUBLE_EQ(r.recall[1][0], 1.0);
  EXPECT_DOUBLE_EQ(r.recall[1][4], 0.5);  // 0.70
  EXPECT_NEAR(r.abo_in_range(1, 100, 1000), 0.6, 1e-12);
  ASSERT_EQ(r.area_bins.size(), 2u);
  EXPECT_EQ(r.n_index(2), 1u);
  EXPECT_THROW(r.n_index(7), std::out_of_range);
}

TEST(Evaluate, WorkersDoNotChangeReport) {
  std::vector<ImageEval> images;
  for (std::uint64_t s = 1; s <= 12; ++s) {
    const Instance in = random_instance(s);
    ImageEval e;
    for (size_t i = 0; i < in.gts.size(); ++i) e.gts.push_back({in.gts[i], in.areas[i], false});
    e.proposals = in.props;
    images.push_back(e);
  }
  const EvalReport a = evaluate(images, {}, 1), b = evaluate(images, {}, 4);
  EXPECT_EQ(a.best, b.best);
  EXPECT_EQ(a.recall, b.recall);
  EXPECT_EQ(a.ar, b.ar);
}

TEST(Evaluate, RejectsBadGrids) {
  EvalGrids g;
  g.n_values = {5, 2};
  EXPECT_THROW(g.validate(), std::exception);
  g = {};
  g.iou_thresholds = {1.5};
  EXPECT_THROW(g.validate(), std::exception);
}

TEST(EmitReport, WritesFourTables) {
  EvalGrids grids;
  grids.n_values = {1, 10};
  std::vector<ImageEval> images(1);
  images[0].gts = {{{0, 0, 0.5, 0.5}, 20, false}};
  images[0].proposals = {{0, 0, 0.5, 0.5}};
  const auto dir = testing_support::temp_dir("emit");
  emit_report(evaluate(images, grids), dir);
  auto slurp = [&](const char* f) {
    std::ifstream in(dir / f);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  EXPECT_EQ(slurp("ar.csv"), "n,ar\n1,1.000000\n10,1.000000\n");
  EXPECT_EQ(slurp("abo.csv"), "n,abo\n1,1.000000\n10,1.000000\n");
  EXPECT_EQ(slurp("abo_by_area.csv"), "area_lo,area_hi,abo\n16.000000,32.000000,1.000000\n");
  const std::string rec = slurp("recall.csv");
  EXPECT_EQ(rec.substr(0, rec.find('\n')), "n,iou,recall");
  EXPECT_EQ(std::count(rec.begin(), rec.end(), '\n'), 21);
}
