#include "pixprop/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pixprop {

LossResult loc_loss(const PredictionGrid& pred, const PredictionGrid& target,
                    const CellGrid<double>& mask) {
  if (pred.cells.size() != target.cells.size() || !(pred.geometry == target.geometry) ||
      !mask.same_shape(pred.geometry.rows, pred.geometry.cols))
    throw std::invalid_argument("loc_loss: shape mismatch");
  LossResult out;
  out.gradient.assign(pred.cells.size(), Coords{0, 0, 0, 0});
  for (size_t i = 0; i < pred.cells.size(); ++i) {
    const double m = mask[i];
    if (m == 0.0) continue;
    for (int k = 0; k < 4; ++k) {
      const double d = pred.cells[i][k] - target.cells[i][k];
      out.value += m * d * d;
      out.gradient[i][k] = 2.0 * m * d;
    }
  }
  return out;
}

namespace {

struct Xent {
  double value;
  double grad;
};

// -[y log q + (1 - y) log(1 - q)] with q clamped away from 0 and 1.
Xent binary_xent(double q, double y) {
  const double c = std::clamp(q, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return {-(y * std::log(c) + (1.0 - y) * std::log(1.0 - c)), -y / c + (1.0 - y) / (1.0 - c)};
}

}  // namespace

ConfidenceLossResult confidence_loss(const CellGrid<double>& p, const CellGrid<double>& z,
                                     const CellGrid<double>& p_star,
                                     const CellGrid<double>& z_star,
                                     const CellGrid<double>& z_weights) {
  const int rows = p.rows;
  const int cols = p.cols;
  if (!z.same_shape(rows, cols) || !p_star.same_shape(rows, cols) ||
      !z_star.same_shape(rows, cols) || !z_weights.same_shape(rows, cols))
    throw std::invalid_argument("confidence_loss: shape mismatch");

  ConfidenceLossResult out;
  out.grad_p = CellGrid<double>(rows, cols);
  out.grad_z = CellGrid<double>(rows, cols);
  for (size_t i = 0; i < p.size(); ++i) {
    const Xent obj = binary_xent(p[i], p_star[i]);
    out.value += obj.value;
    out.grad_p[i] = obj.grad;
    const double w = z_weights[i] * p_star[i];
    if (w != 0.0) {
      const Xent size = binary_xent(z[i], z_star[i]);
      out.value += w * size.value;
      out.grad_z[i] = w * size.grad;
    }
  }
  if (!std::isfinite(out.value)) throw std::domain_error("confidence_loss: non-finite value");
  return out;
}

}  // namespace pixprop
