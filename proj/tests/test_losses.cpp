#include <gtest/gtest.h>

#include <cmath>

#include "pixprop/losses.hpp"
#include "support.hpp"

using namespace pixprop;

namespace {

constexpr double kStep = 1e-5;

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7}); }

struct LocCase {
  PredictionGrid pred, target;
  CellGrid<double> mask;
};

LocCase random_loc_case(std::uint64_t seed) {
  CounterRng rng(seed);
  const GridGeometry g{24, 20, 6, 5};
  LocCase c{PredictionGrid(g, GridMode::kAbsolute), PredictionGrid(g, GridMode::kAbsolute), CellGrid<double>(5, 6)};
  for (size_t i = 0; i < c.pred.cells.size(); ++i) {
    for (int k = 0; k < 4; ++k) {
      c.pred.cells[i][k] = rng.uniform();
      c.target.cells[i][k] = rng.uniform();
    }
    c.mask[i] = rng.below(2) ? 1.0 : 0.0;
  }
  return c;
}

struct ConfCase {
  CellGrid<double> p, z, ps, zs, w;
};

ConfCase random_conf_case(std::uint64_t seed) {
  CounterRng rng(seed);
  ConfCase c{CellGrid<double>(4, 5), CellGrid<double>(4, 5), CellGrid<double>(4, 5), CellGrid<double>(4, 5),
             CellGrid<double>(4, 5)};
  for (size_t i = 0; i < c.p.size(); ++i) {
    c.p[i] = rng.uniform(0.05, 0.95);
    c.z[i] = rng.uniform(0.05, 0.95);
    c.ps[i] = static_cast<double>(rng.below(2));
    c.zs[i] = c.ps[i] * static_cast<double>(rng.below(2));
    c.w[i] = static_cast<double>(rng.below(2));
  }
  return c;
}

}  // namespace

TEST(LocLoss, ZeroMask) {
  LocCase c = random_loc_case(1);
  for (double& m : c.mask.values) m = 0;
  const LossResult r = loc_loss(c.pred, c.target, c.mask);
  EXPECT_EQ(r.value, 0.0);
  for (const Coords& g : r.gradient) EXPECT_EQ(g, (Coords{0, 0, 0, 0}));
}

TEST(LocLoss, PerfectPrediction) {
  LocCase c = random_loc_case(2);
  const LossResult r = loc_loss(c.target, c.target, c.mask);
  EXPECT_EQ(r.value, 0.0);
}

TEST(LocLoss, SingleCellHandValue) {
  const GridGeometry g{4, 4, 2, 2};
  PredictionGrid pred(g, GridMode::kAbsolute, {0.3, 0.2, 0.6, 0.7});
  PredictionGrid target = pred;
  pred.at(1, 0)[0] += 0.1;
  CellGrid<double> mask(2, 2);
  mask.at(1, 0) = 1.0;
  const LossResult r = loc_loss(pred, target, mask);
  EXPECT_NEAR(r.value, 0.01, 1e-15);
  EXPECT_NEAR(r.gradient[2][0], 0.2, 1e-14);
  EXPECT_EQ(r.gradient[2][1], 0.0);
}

TEST(LocLoss, ShapeMismatchThrows) {
  LocCase c = random_loc_case(3);
  EXPECT_THROW(loc_loss(c.pred, c.target, CellGrid<double>(2, 2)), std::invalid_argument);
}

TEST(LocLoss, NonNegativeAndZeroOnlyAtTarget) {
  for (std::uint64_t s = 10; s < 30; ++s) {
    LocCase c = random_loc_case(s);
    const double v = loc_loss(c.pred, c.target, c.mask).value;
    EXPECT_GE(v, 0.0);
    PredictionGrid fixed = c.pred;
    for (size_t i = 0; i < fixed.cells.size(); ++i)
      if (c.mask[i] > 0) fixed.cells[i] = c.target.cells[i];
    EXPECT_EQ(loc_loss(fixed, c.target, c.mask).value, 0.0);
  }
}

TEST(LocLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    LocCase c = random_loc_case(seed);
    const LossResult r = loc_loss(c.pred, c.target, c.mask);
    double worst = 0.0;
    for (size_t i = 0; i < c.pred.cells.size(); ++i)
      for (int k = 0; k < 4; ++k) {
        PredictionGrid up = c.pred, dn = c.pred;
        up.cells[i][k] += kStep;
        dn.cells[i][k] -= kStep;
        const double fd =
            (loc_loss(up, c.target, c.mask).value - loc_loss(dn, c.target, c.mask).value) / (2 * kStep);
        worst = std::max(worst, rel_err(r.gradient[i][k], fd));
      }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(ConfidenceLoss, SaturatedCorrectIsNearZero) {
  CellGrid<double> p(1, 1, 1.0), z(1, 1, 0.3), ps(1, 1, 1.0), zs(1, 1, 1.0), w(1, 1, 0.0);
  const auto r = confidence_loss(p, z, ps, zs, w);
  EXPECT_LT(r.value, 1e-6);
}

TEST(ConfidenceLoss, HalfProbabilities) {
  CellGrid<double> p(1, 1, 0.5), z(1, 1, 0.5), ps(1, 1, 1.0), zs(1, 1, 1.0), w(1, 1, 1.0);
  EXPECT_NEAR(confidence_loss(p, z, ps, zs, w).value, 2 * std::log(2.0), 1e-12);
}

TEST(ConfidenceLoss, BackgroundHasNoSizeGradient) {
  ConfCase c = random_conf_case(4);
  const auto r = confidence_loss(c.p, c.z, c.ps, c.zs, c.w);
  for (size_t i = 0; i < c.p.size(); ++i)
    if (c.ps[i] == 0.0) { EXPECT_EQ(r.grad_z[i], 0.0); }
}

TEST(ConfidenceLoss, ClampsSaturatedWrongPredictions) {
  CellGrid<double> p(1, 1, 0.0), z(1, 1, 1.0), ps(1, 1, 1.0), zs(1, 1, 0.0), w(1, 1, 1.0);
  const auto r = confidence_loss(p, z, ps, zs, w);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_NEAR(r.value, -2 * std::log(kProbabilityEpsilon), 1e-6);
}

TEST(ConfidenceLoss, DecreasesTowardTarget) {
  ConfCase c = random_conf_case(5);
  for (size_t i = 0; i < c.p.size(); ++i) {
    double prev = INFINITY;
    for (int step = 0; step <= 10; ++step) {
      ConfCase d = c;
      d.p[i] = c.ps[i] == 1.0 ? 0.05 + 0.09 * step : 0.95 - 0.09 * step;
      const double v = confidence_loss(d.p, d.z, d.ps, d.zs, d.w).value;
      EXPECT_LT(v, prev);
      prev = v;
    }
  }
}

TEST(ConfidenceLoss, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ConfCase c = random_conf_case(seed);
    const auto r = confidence_loss(c.p, c.z, c.ps, c.zs, c.w);
    double worst = 0.0;
    for (size_t i = 0; i < c.p.size(); ++i) {
      ConfCase up = c, dn = c;
      up.p[i] += kStep;
      dn.p[i] -= kStep;
      double fd = (confidence_loss(up.p, up.z, up.ps, up.zs, up.w).value -
                   confidence_loss(dn.p, dn.z, dn.ps, dn.zs, dn.w).value) /
                  (2 * kStep);
      worst = std::max(worst, rel_err(r.grad_p[i], fd));
      up = c;
      dn = c;
      up.z[i] += kStep;
      dn.z[i] -= kStep;
      fd = (confidence_loss(up.p, up.z, up.ps, up.zs, up.w).value -
            confidence_loss(dn.p, dn.z, dn.ps, dn.zs, dn.w).value) /
           (2 * kStep);
      worst = std::max(worst, rel_err(r.grad_z[i], fd));
    }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}
