#include <gtest/gtest.h>

#include "pixprop/scalefusion.hpp"
#include "support.hpp"

using namespace pixprop;

namespace {

PredictionGrid random_grid(std::uint64_t seed, const GridGeometry& g) {
  CounterRng rng(seed);
  PredictionGrid p(g, GridMode::kAbsolute);
  for (Coords& c : p.cells)
    for (double& v : c) v = rng.uniform(-0.2, 1.2);
  return p;
}

const GridGeometry kGeom{40, 32, 10, 8};

}  // namespace

TEST(Fuse, EndpointsAreBitExact) {
  const PredictionGrid a = random_grid(1, kGeom), b = random_grid(2, kGeom);
  EXPECT_EQ(fuse(a, b, CellGrid<double>(8, 10, 1.0)).cells, a.cells);
  EXPECT_EQ(fuse(a, b, CellGrid<double>(8, 10, 0.0)).cells, b.cells);
}

TEST(Fuse, HalfWeightIsMidpoint) {
  const PredictionGrid a = random_grid(3, kGeom), b = random_grid(4, kGeom);
  const PredictionGrid f = fuse(a, b, CellGrid<double>(8, 10, 0.5));
  for (size_t i = 0; i < f.cells.size(); ++i)
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(f.cells[i][k], 0.5 * (a.cells[i][k] + b.cells[i][k]), 1e-15);
}

TEST(Fuse, ConvexAndMonotone) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const PredictionGrid a = random_grid(10 + s, kGeom), b = random_grid(100 + s, kGeom);
    CounterRng rng(s);
    CellGrid<double> z(8, 10);
    for (double& v : z.values) v = rng.uniform();
    const PredictionGrid f = fuse(a, b, z);
    CellGrid<double> z2 = z;
    for (double& v : z2.values) v = std::min(1.0, v + 0.1);
    const PredictionGrid f2 = fuse(a, b, z2);
    for (size_t i = 0; i < f.cells.size(); ++i)
      for (int k = 0; k < 4; ++k) {
        const double lo = std::min(a.cells[i][k], b.cells[i][k]), hi = std::max(a.cells[i][k], b.cells[i][k]);
        EXPECT_GE(f.cells[i][k], lo);
        EXPECT_LE(f.cells[i][k], hi);
        // Moving weight toward the large localizer moves the value toward it.
        EXPECT_LE(std::abs(f2.cells[i][k] - a.cells[i][k]), std::abs(f.cells[i][k] - a.cells[i][k]) + 1e-15);
      }
  }
}

TEST(Fuse, EqualInputsStayPut) {
  const PredictionGrid a = random_grid(5, kGeom);
  CounterRng rng(6);
  CellGrid<double> z(8, 10);
  for (double& v : z.values) v = rng.uniform();
  EXPECT_EQ(fuse(a, a, z).cells, a.cells);
}

TEST(Fuse, RejectsBadInputs) {
  const PredictionGrid a = random_grid(1, kGeom);
  EXPECT_THROW(fuse(a, a, CellGrid<double>(7, 10, 0.5)), std::invalid_argument);
  EXPECT_THROW(fuse(a, a, CellGrid<double>(8, 10, 1.5)), std::invalid_argument);
  EXPECT_THROW(fuse(a, random_grid(1, {40, 32, 5, 4}), CellGrid<double>(8, 10, 0.5)), std::invalid_argument);
  PredictionGrid off = a;
  off.mode = GridMode::kOffsets;
  EXPECT_THROW(fuse(off, a, CellGrid<double>(8, 10, 0.5)), std::invalid_argument);
}

TEST(Enlarge, DoublesExtent) {
  const Tensor img = testing_support::random_image(1, 3, 13, 20);
  const Tensor big = enlarge_image(img, 2.0);
  EXPECT_EQ(big.channels, 3);
  EXPECT_EQ(big.height, 26);
  EXPECT_EQ(big.width, 40);
  EXPECT_EQ(enlarge_image(img, 1.5).height, 20);  // round(19.5)
}

TEST(Enlarge, FactorOneIsIdentity) {
  const Tensor img = testing_support::random_image(2, 3, 9, 7);
  EXPECT_EQ(enlarge_image(img, 1.0), img);
}

TEST(Enlarge, ConstantImageStaysConstant) {
  const Tensor img(3, 10, 10, 0.37);
  for (double v : enlarge_image(img, 2.0).data) EXPECT_EQ(v, 0.37);
}

TEST(Enlarge, BilinearHalfPixelExample) {
  Tensor img(1, 1, 2);
  img.at(0, 0, 0) = 0.0;
  img.at(0, 0, 1) = 1.0;
  const Tensor big = enlarge_image(img, 2.0);
  ASSERT_EQ(big.width, 4);
  EXPECT_DOUBLE_EQ(big.at(0, 0, 0), 0.0);
  EXPECT_DOUBLE_EQ(big.at(0, 0, 1), 0.25);
  EXPECT_DOUBLE_EQ(big.at(0, 0, 2), 0.75);
  EXPECT_DOUBLE_EQ(big.at(0, 0, 3), 1.0);
}

TEST(Enlarge, ValuesWithinInputRange) {
  const Tensor img = testing_support::random_image(3, 3, 11, 11);
  for (double v : enlarge_image(img, 2.7).data) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Enlarge, RejectsShrinking) {
  EXPECT_THROW(enlarge_image(Tensor(3, 4, 4), 0.5), std::invalid_argument);
  EXPECT_THROW(enlarge_image(Tensor(3, 4, 4), std::nan("")), std::invalid_argument);
}

TEST(MapBack, KeepsBoxesAndRetagsScale) {
  Proposal p;
  p.box = {0.1, 0.2, 0.3, 0.4};
  p.score = 0.7;
  p.provenance.cell = 12;
  const std::vector<Proposal> in{p};
  const auto out = map_back(in);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].box, p.box);
  EXPECT_EQ(out[0].score, 0.7);
  EXPECT_EQ(out[0].provenance.scale, ScaleTag::kEnlarged);
  EXPECT_EQ(out[0].provenance.cell, 12);
}
