#pragma once

#include "pixprop/gridcodec.hpp"
#include "pixprop/tensor.hpp"

namespace pixprop {

// Masked squared-error localization loss and its gradient with respect to
// the predicted coordinates. With mask = p* this is the plain pixel-wise
// objective; with l* or s* it trains the large- or small-size localizer.
struct LossResult {
  double value = 0.0;
  std::vector<Coords> gradient;  // per cell, same layout as the prediction
};

LossResult loc_loss(const PredictionGrid& pred, const PredictionGrid& target,
                    const CellGrid<double>& mask);

inline constexpr double kProbabilityEpsilon = 1e-7;

struct ConfidenceLossResult {
  double value = 0.0;
  CellGrid<double> grad_p;
  CellGrid<double> grad_z;
};

// Negative log-likelihood of the objectness branch over every cell plus the
// weighted large/small term over foreground cells only. Probabilities are
// clamped to [eps, 1 - eps] before taking logs.
ConfidenceLossResult confidence_loss(const CellGrid<double>& p, const CellGrid<double>& z,
                                     const CellGrid<double>& p_star,
                                     const CellGrid<double>& z_star,
                                     const CellGrid<double>& z_weights);

}  // namespace pixprop
