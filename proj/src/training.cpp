#include "pixprop/training.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pixprop/errors.hpp"
#include "pixprop/losses.hpp"
#include "pixprop/parallel.hpp"
#include "pixprop/rng.hpp"

namespace pixprop {

std::string role_name(NetworkRole role) {
  switch (role) {
    case NetworkRole::kLargeLocalizer: return "large";
    case NetworkRole::kSmallLocalizer: return "small";
    case NetworkRole::kAllSizesLocalizer: return "all_sizes";
    case NetworkRole::kConfidence: return "confidence";
  }
  return "unknown";
}

std::uint64_t role_seed(std::uint64_t seed, NetworkRole role) {
  return CounterRng::derive(seed, 0x100 + static_cast<std::uint64_t>(role));
}

SampleLoss sample_loss(const ModelState& state, const NetworkSpec& spec, NetworkRole role,
                       const TrainingSample& sample) {
  ForwardResult fw = forward(state, spec, sample.image);
  const TargetBundle& t = sample.targets;
  if (!(fw.geometry == t.coord_targets.geometry))
    throw std::invalid_argument("training targets do not match the network output grid");

  SampleLoss out;
  std::map<std::string, Tensor> grads;
  if (role == NetworkRole::kConfidence) {
    const Tensor& obj = fw.outputs.at(kObjectnessHead);
    const Tensor& size = fw.outputs.at(kSizeHead);
    const int rows = obj.height;
    const int cols = obj.width;
    CellGrid<double> p(rows, cols);
    CellGrid<double> z(rows, cols);
    for (size_t i = 0; i < p.size(); ++i) {
      p[i] = obj.data[obj.plane() + i];
      z[i] = size.data[size.plane() + i];
    }
    const ConfidenceLossResult r = confidence_loss(p, z, t.fg_mask, t.size_mask, t.sample_weights);
    out.loss = r.value;
    Tensor gp(2, rows, cols);
    Tensor gz(2, rows, cols);
    for (size_t i = 0; i < p.size(); ++i) {
      gp.data[gp.plane() + i] = r.grad_p[i];
      gz.data[gz.plane() + i] = r.grad_z[i];
    }
    grads[kObjectnessHead] = std::move(gp);
    grads[kSizeHead] = std::move(gz);
  } else {
    const PredictionGrid pred = grid_from_tensor(fw.outputs.at(kBoxHead), fw.geometry, GridMode::kAbsolute);
    CellGrid<double> mask;
    if (role == NetworkRole::kLargeLocalizer) mask = t.large_mask();
    else if (role == NetworkRole::kSmallLocalizer) mask = t.small_mask();
    else mask = t.fg_mask;
    const LossResult r = loc_loss(pred, t.coord_targets, mask);
    out.loss = r.value;
    PredictionGrid g(fw.geometry, GridMode::kAbsolute);
    g.cells = r.gradient;
    grads[kBoxHead] = tensor_from_grid(g);
  }
  out.gradients = backward(state, spec, fw.cache, grads);
  return out;
}

TrainResult train_network(const NetworkSpec& spec, NetworkRole role,
                          std::span<const TrainingSample> samples, const TrainConfig& config,
                          std::uint64_t seed, const EpochCallback& on_epoch) {
  if (samples.empty()) throw std::invalid_argument("training requires a nonempty dataset");
  if (config.batch_size < 1) throw std::invalid_argument("batch size must be positive");
  TrainResult result;
  result.state = init(spec, seed, config.init);
  ModelState& state = result.state;

  std::vector<size_t> order(samples.size());
  std::vector<SampleLoss> slots(static_cast<size_t>(config.batch_size));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), size_t{0});
    CounterRng rng(CounterRng::derive(seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t n = std::min<size_t>(config.batch_size, order.size() - start);
      parallel_for(n, config.workers, [&](size_t k) {
        slots[k] = sample_loss(state, spec, role, samples[order[start + k]]);
      });
      Gradients batch = zero_gradients(state);
      double batch_loss = 0.0;
      for (size_t k = 0; k < n; ++k) {
        batch_loss += slots[k].loss;
        accumulate(batch, slots[k].gradients, 1.0 / static_cast<double>(n));
      }
      if (!std::isfinite(batch_loss))
        throw DivergenceError(role_name(role) + " network diverged at epoch " + std::to_string(epoch) +
                              ", batch starting at " + std::to_string(start));
      epoch_loss += batch_loss;
      sgd_step(state, batch, config.schedule);
    }
    ++state.epoch;
    const double mean = epoch_loss / static_cast<double>(samples.size());
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(role, epoch, mean);
  }
  return result;
}

TrainedModels train(const NetworkSpec& large_spec, const NetworkSpec& small_spec,
                    const NetworkSpec& confidence_spec, std::span<const TrainingSample> samples,
                    const TrainConfig& config, std::uint64_t seed, const EpochCallback& on_epoch) {
  TrainedModels m;
  m.large = train_network(large_spec, NetworkRole::kLargeLocalizer, samples, config,
                          role_seed(seed, NetworkRole::kLargeLocalizer), on_epoch);
  m.small = train_network(small_spec, NetworkRole::kSmallLocalizer, samples, config,
                          role_seed(seed, NetworkRole::kSmallLocalizer), on_epoch);
  m.confidence = train_network(confidence_spec, NetworkRole::kConfidence, samples, config,
                               role_seed(seed, NetworkRole::kConfidence), on_epoch);
  return m;
}

}  // namespace pixprop
