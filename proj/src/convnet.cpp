#include "pixprop/convnet.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pixprop/errors.hpp"
#include "pixprop/hashing.hpp"
#include "pixprop/rng.hpp"

namespace pixprop {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

void validate_layer(const LayerSpec& l) {
  if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.padding < 0 || l.dilation < 1)
    throw std::invalid_argument("layer spec: sizes must be positive");
}

// Layers in ModelState order paired with their input channel counts.
struct FlatLayer {
  const LayerSpec* spec;
  int in_channels;
  ParamGroup group;
};

std::vector<FlatLayer> flatten(const NetworkSpec& spec) {
  std::vector<FlatLayer> out;
  int ch = spec.in_channels;
  for (const LayerSpec& l : spec.trunk) {
    out.push_back({&l, ch, ParamGroup::kTrunk});
    ch = l.out_channels;
  }
  const int trunk_ch = ch;
  for (const HeadSpec& h : spec.heads) {
    int hc = trunk_ch;
    for (const LayerSpec& l : h.layers) {
      out.push_back({&l, hc, ParamGroup::kHead});
      hc = l.out_channels;
    }
  }
  return out;
}

void im2col(const Tensor& in, const LayerSpec& l, int out_h, int out_w, std::vector<double>& cols) {
  const int k = l.kernel;
  const size_t hw = static_cast<size_t>(out_h) * out_w;
  cols.assign(static_cast<size_t>(in.channels) * k * k * hw, 0.0);
  for (int c = 0; c < in.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* row = cols.data() + ((static_cast<size_t>(c) * k + ki) * k + kj) * hw;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * l.stride - l.padding + ki * l.dilation;
          if (iy < 0 || iy >= in.height) continue;
          const double* src = in.data.data() + (static_cast<size_t>(c) * in.height + iy) * in.width;
          double* dst = row + static_cast<size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * l.stride - l.padding + kj * l.dilation;
            if (ix >= 0 && ix < in.width) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

void col2im(const std::vector<double>& cols, const LayerSpec& l, int out_h, int out_w, Tensor& dx) {
  const int k = l.kernel;
  const size_t hw = static_cast<size_t>(out_h) * out_w;
  for (int c = 0; c < dx.channels; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* row = cols.data() + ((static_cast<size_t>(c) * k + ki) * k + kj) * hw;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * l.stride - l.padding + ki * l.dilation;
          if (iy < 0 || iy >= dx.height) continue;
          double* dst = dx.data.data() + (static_cast<size_t>(c) * dx.height + iy) * dx.width;
          const double* src = row + static_cast<size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * l.stride - l.padding + kj * l.dilation;
            if (ix >= 0 && ix < dx.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

Tensor conv_forward(const ConvParams& p, const LayerSpec& l, const Tensor& in, LayerCache& cache) {
  if (in.channels != p.in_channels) throw std::invalid_argument("convolution: input channel mismatch");
  const int out_h = l.output_extent(in.height);
  const int out_w = l.output_extent(in.width);
  if (out_h < 1 || out_w < 1) throw std::invalid_argument("convolution: input too small for layer");
  cache.in_channels = in.channels;
  cache.in_height = in.height;
  cache.in_width = in.width;
  im2col(in, l, out_h, out_w, cache.cols);

  const Eigen::Index hw = static_cast<Eigen::Index>(out_h) * out_w;
  const Eigen::Index fan = static_cast<Eigen::Index>(p.fan_in());
  Tensor out(p.out_channels, out_h, out_w);
  MatMap y(out.data.data(), p.out_channels, hw);
  y.noalias() = ConstMatMap(p.weight.data(), p.out_channels, fan) * ConstMatMap(cache.cols.data(), fan, hw);
  y.colwise() += ConstVecMap(p.bias.data(), p.out_channels);
  if (l.nonlinearity == Nonlinearity::kRectifier) y = y.cwiseMax(0.0);
  return out;
}

// dy is the gradient with respect to the post-activation output; it is
// masked in place by the rectifier derivative.
Tensor conv_backward(const ConvParams& p, const LayerSpec& l, const LayerCache& cache, Tensor& dy,
                     ConvParams& grad, bool need_input_grad) {
  const int out_h = cache.output.height;
  const int out_w = cache.output.width;
  const Eigen::Index hw = static_cast<Eigen::Index>(out_h) * out_w;
  const Eigen::Index fan = static_cast<Eigen::Index>(p.fan_in());
  if (l.nonlinearity == Nonlinearity::kRectifier) {
    for (size_t i = 0; i < dy.data.size(); ++i)
      if (!(cache.output.data[i] > 0.0)) dy.data[i] = 0.0;
  }
  ConstMatMap dym(dy.data.data(), p.out_channels, hw);
  ConstMatMap cols(cache.cols.data(), fan, hw);
  MatMap(grad.weight.data(), p.out_channels, fan).noalias() += dym * cols.transpose();
  // Plain loop: Eigen's vectorized reductions round differently depending on
  // buffer alignment, which would make training depend on the allocator.
  for (int o = 0; o < p.out_channels; ++o) {
    const double* row = dy.data.data() + static_cast<size_t>(o) * hw;
    double s = 0.0;
    for (Eigen::Index i = 0; i < hw; ++i) s += row[i];
    grad.bias[o] += s;
  }
  if (!need_input_grad) return {};
  std::vector<double> dcols(static_cast<size_t>(fan) * hw);
  MatMap(dcols.data(), fan, hw).noalias() =
      ConstMatMap(p.weight.data(), p.out_channels, fan).transpose() * dym;
  Tensor dx(cache.in_channels, cache.in_height, cache.in_width);
  col2im(dcols, l, out_h, out_w, dx);
  return dx;
}

const char* nonlinearity_code(Nonlinearity n) { return n == Nonlinearity::kRectifier ? "r" : "n"; }

void write_layer(std::ostringstream& s, const LayerSpec& l) {
  s << l.out_channels << "x" << l.kernel << "s" << l.stride << "p" << l.padding << "d" << l.dilation
    << nonlinearity_code(l.nonlinearity);
}

}  // namespace

int LayerSpec::output_extent(int in) const {
  const int span = dilation * (kernel - 1) + 1;
  const int padded = in + 2 * padding;
  if (padded < span) return 0;
  return (padded - span) / stride + 1;
}

void NetworkSpec::validate() const {
  if (in_channels < 1) throw std::invalid_argument("network spec: no input channels");
  for (const LayerSpec& l : trunk) validate_layer(l);
  if (heads.empty()) throw std::invalid_argument("network spec: no heads");
  for (const HeadSpec& h : heads) {
    if (h.layers.empty()) throw std::invalid_argument("network spec: empty head " + h.name);
    for (const LayerSpec& l : h.layers) validate_layer(l);
    const LayerSpec& last = h.layers.back();
    const int want = h.kind == HeadKind::kBoxOffsets ? 4 : 2;
    if (last.out_channels != want || last.nonlinearity != Nonlinearity::kNone)
      throw std::invalid_argument("network spec: head " + h.name + " has the wrong output layer");
  }
}

std::string NetworkSpec::canonical() const {
  std::ostringstream s;
  s << "net;in=" << in_channels << ";shift=" << input_shift << ";trunk=";
  for (const LayerSpec& l : trunk) {
    write_layer(s, l);
    s << ",";
  }
  for (const HeadSpec& h : heads) {
    s << ";head=" << h.name << ":" << (h.kind == HeadKind::kBoxOffsets ? "box" : "softmax2") << ":";
    for (const LayerSpec& l : h.layers) {
      write_layer(s, l);
      s << ",";
    }
  }
  return s.str();
}

std::string NetworkSpec::hash() const { return sha256_hex(canonical()).substr(0, 16); }

int NetworkSpec::output_extent(int in) const {
  int e = in;
  for (const LayerSpec& l : trunk) e = e > 0 ? l.output_extent(e) : 0;
  const int trunk_out = e;
  int result = -1;
  for (const HeadSpec& h : heads) {
    int he = trunk_out;
    for (const LayerSpec& l : h.layers) he = he > 0 ? l.output_extent(he) : 0;
    if (result >= 0 && he != result) return 0;
    result = he;
  }
  return result < 0 ? 0 : result;
}

size_t NetworkSpec::layer_count() const {
  size_t n = trunk.size();
  for (const HeadSpec& h : heads) n += h.layers.size();
  return n;
}

std::vector<LayerSpec> default_trunk() {
  return {
      {16, 3, 2, 1, 1, Nonlinearity::kRectifier},
      {32, 3, 2, 1, 1, Nonlinearity::kRectifier},
      {32, 3, 1, 1, 1, Nonlinearity::kRectifier},
      {64, 3, 1, 2, 2, Nonlinearity::kRectifier},
  };
}

NetworkSpec default_localizer_spec(const std::string& name) {
  NetworkSpec spec;
  spec.name = name;
  spec.trunk = default_trunk();
  spec.heads.push_back({kBoxHead, HeadKind::kBoxOffsets, {{4, 1, 1, 0, 1, Nonlinearity::kNone}}});
  return spec;
}

NetworkSpec default_confidence_spec(const std::string& name) {
  NetworkSpec spec;
  spec.name = name;
  spec.trunk = default_trunk();
  const std::vector<LayerSpec> branch = {{32, 3, 1, 1, 1, Nonlinearity::kRectifier},
                                         {2, 1, 1, 0, 1, Nonlinearity::kNone}};
  spec.heads.push_back({kObjectnessHead, HeadKind::kSoftmax2, branch});
  spec.heads.push_back({kSizeHead, HeadKind::kSoftmax2, branch});
  return spec;
}

size_t ModelState::parameter_count() const {
  size_t n = 0;
  for (const ConvParams& p : layers) n += p.weight.size() + p.bias.size();
  return n;
}

bool ModelState::all_finite() const {
  for (const ConvParams& p : layers) {
    for (double v : p.weight)
      if (!std::isfinite(v)) return false;
    for (double v : p.bias)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

Gradients zero_gradients(const ModelState& state) {
  Gradients g = state.layers;
  for (ConvParams& p : g) {
    std::fill(p.weight.begin(), p.weight.end(), 0.0);
    std::fill(p.bias.begin(), p.bias.end(), 0.0);
  }
  return g;
}

void accumulate(Gradients& into, const Gradients& g, double scale) {
  if (into.size() != g.size()) throw std::invalid_argument("gradient layout mismatch");
  for (size_t i = 0; i < g.size(); ++i) {
    if (into[i].weight.size() != g[i].weight.size() || into[i].bias.size() != g[i].bias.size())
      throw std::invalid_argument("gradient layout mismatch");
    for (size_t j = 0; j < g[i].weight.size(); ++j) into[i].weight[j] += scale * g[i].weight[j];
    for (size_t j = 0; j < g[i].bias.size(); ++j) into[i].bias[j] += scale * g[i].bias[j];
  }
}

double max_abs(const Gradients& g) {
  double m = 0.0;
  for (const ConvParams& p : g) {
    for (double v : p.weight) m = std::max(m, std::abs(v));
    for (double v : p.bias) m = std::max(m, std::abs(v));
  }
  return m;
}

ModelState init(const NetworkSpec& spec, std::uint64_t seed, const InitOptions& options) {
  spec.validate();
  ModelState state;
  state.name = spec.name;
  state.spec_hash = spec.hash();
  state.seed = seed;
  const std::vector<FlatLayer> flat = flatten(spec);
  for (size_t i = 0; i < flat.size(); ++i) {
    const LayerSpec& l = *flat[i].spec;
    ConvParams p;
    p.out_channels = l.out_channels;
    p.in_channels = flat[i].in_channels;
    p.kernel = l.kernel;
    p.weight.resize(static_cast<size_t>(p.out_channels) * p.fan_in());
    p.bias.assign(p.out_channels, 0.0);
    double std_dev = options.head_std;
    if (flat[i].group == ParamGroup::kTrunk)
      std_dev = options.trunk_std > 0.0 ? options.trunk_std : std::sqrt(2.0 / p.fan_in());
    CounterRng rng(CounterRng::derive(seed, i));
    for (double& w : p.weight) w = std_dev * rng.gaussian();
    state.layers.push_back(std::move(p));
    state.groups.push_back(flat[i].group);
  }
  state.velocity = zero_gradients(state);
  return state;
}

ForwardResult forward(const ModelState& state, const NetworkSpec& spec, const Tensor& image) {
  const std::string hash = spec.hash();
  if (state.spec_hash != hash) throw std::invalid_argument("model state was built for a different network spec");
  if (image.channels != spec.in_channels) throw std::invalid_argument("image channel count does not match spec");
  if (state.layers.size() != spec.layer_count()) throw std::invalid_argument("model state layer count mismatch");

  ForwardResult result;
  result.cache.spec_hash = hash;
  result.cache.state_version = state.version;
  result.cache.layers.resize(state.layers.size());

  Tensor x = image;
  for (double& v : x.data) v -= spec.input_shift;
  size_t li = 0;
  for (const LayerSpec& l : spec.trunk) {
    LayerCache& lc = result.cache.layers[li];
    lc.output = conv_forward(state.layers[li], l, x, lc);
    x = lc.output;
    ++li;
  }
  const Tensor trunk_out = x;

  for (const HeadSpec& h : spec.heads) {
    Tensor y = trunk_out;
    for (const LayerSpec& l : h.layers) {
      LayerCache& lc = result.cache.layers[li];
      lc.output = conv_forward(state.layers[li], l, y, lc);
      y = lc.output;
      ++li;
    }
    GridGeometry geo{image.width, image.height, y.width, y.height};
    geo.validate();
    result.geometry = geo;
    if (h.kind == HeadKind::kBoxOffsets) {
      const CoordBasis basis = make_coord_basis(geo);
      for (int r = 0; r < y.height; ++r) {
        for (int c = 0; c < y.width; ++c) {
          y.at(0, r, c) += basis.x[c];
          y.at(1, r, c) += basis.y[r];
          y.at(2, r, c) += basis.x[c];
          y.at(3, r, c) += basis.y[r];
        }
      }
    } else {
      for (size_t i = 0; i < y.plane(); ++i) {
        double& a = y.data[i];
        double& b = y.data[y.plane() + i];
        const double m = std::max(a, b);
        const double ea = std::exp(a - m);
        const double eb = std::exp(b - m);
        a = ea / (ea + eb);
        b = eb / (ea + eb);
      }
    }
    result.cache.head_outputs[h.name] = y;
    result.outputs[h.name] = std::move(y);
  }
  return result;
}

Gradients backward(const ModelState& state, const NetworkSpec& spec, const ForwardCache& cache,
                   const std::map<std::string, Tensor>& output_grads) {
  if (cache.spec_hash != state.spec_hash || cache.state_version != state.version ||
      cache.layers.size() != state.layers.size())
    throw std::logic_error("stale forward cache: model changed since the forward pass");
  const std::vector<FlatLayer> flat = flatten(spec);
  Gradients grads = zero_gradients(state);

  const size_t trunk_n = spec.trunk.size();
  Tensor trunk_grad;
  if (trunk_n > 0) {
    const Tensor& to = cache.layers[trunk_n - 1].output;
    trunk_grad = Tensor(to.channels, to.height, to.width);
  }

  size_t li = trunk_n;
  for (const HeadSpec& h : spec.heads) {
    const size_t first = li;
    const size_t last = li + h.layers.size();
    li = last;
    const auto it = output_grads.find(h.name);
    if (it == output_grads.end()) continue;
    const Tensor& out = cache.head_outputs.at(h.name);
    if (!it->second.same_shape(out)) throw std::invalid_argument("output gradient shape mismatch for " + h.name);

    Tensor g = it->second;
    if (h.kind == HeadKind::kSoftmax2) {
      const size_t n = out.plane();
      for (size_t i = 0; i < n; ++i) {
        const double q0 = out.data[i];
        const double q1 = out.data[n + i];
        const double dot = g.data[i] * q0 + g.data[n + i] * q1;
        g.data[i] = q0 * (g.data[i] - dot);
        g.data[n + i] = q1 * (g.data[n + i] - dot);
      }
    }
    for (size_t k = last; k-- > first;) {
      const bool feeds_trunk = k == first;
      Tensor dx = conv_backward(state.layers[k], *flat[k].spec, cache.layers[k], g, grads[k],
                                !feeds_trunk || trunk_n > 0);
      if (feeds_trunk) {
        if (trunk_n > 0)
          for (size_t i = 0; i < dx.data.size(); ++i) trunk_grad.data[i] += dx.data[i];
      } else {
        g = std::move(dx);
      }
    }
  }

  for (size_t k = trunk_n; k-- > 0;) {
    trunk_grad = conv_backward(state.layers[k], *flat[k].spec, cache.layers[k], trunk_grad, grads[k], k > 0);
  }
  return grads;
}

double Schedule::learning_rate(ParamGroup group, int epoch) const {
  const double base = group == ParamGroup::kTrunk ? trunk_lr : head_lr;
  const int steps = decay_epochs > 0 ? epoch / decay_epochs : 0;
  return base * std::pow(decay_factor, steps);
}

void sgd_step(ModelState& state, const Gradients& gradients, const Schedule& schedule) {
  if (gradients.size() != state.layers.size()) throw std::invalid_argument("sgd_step: gradient layout mismatch");
  for (const ConvParams& g : gradients) {
    for (double v : g.weight)
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in " + state.name);
    for (double v : g.bias)
      if (!std::isfinite(v)) throw DivergenceError("non-finite gradient in " + state.name);
  }
  if (state.velocity.size() != state.layers.size()) state.velocity = zero_gradients(state);
  for (size_t i = 0; i < state.layers.size(); ++i) {
    ConvParams& p = state.layers[i];
    ConvParams& v = state.velocity[i];
    const ConvParams& g = gradients[i];
    if (g.weight.size() != p.weight.size() || g.bias.size() != p.bias.size())
      throw std::invalid_argument("sgd_step: gradient shape mismatch");
    const double lr = schedule.learning_rate(state.groups[i], state.epoch);
    for (size_t j = 0; j < p.weight.size(); ++j) {
      v.weight[j] = schedule.momentum * v.weight[j] + g.weight[j];
      p.weight[j] -= lr * v.weight[j];
    }
    for (size_t j = 0; j < p.bias.size(); ++j) {
      v.bias[j] = schedule.momentum * v.bias[j] + g.bias[j];
      p.bias[j] -= lr * v.bias[j];
    }
  }
  ++state.version;
}

namespace {

void put_le(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw DataError("checkpoint: truncated parameter data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

constexpr const char* kCheckpointMagic = "pixprop-checkpoint 1";

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << "\n";
  out << "name " << state.name << "\n";
  out << "spec_hash " << state.spec_hash << "\n";
  out << "seed " << state.seed << "\n";
  out << "epoch " << state.epoch << "\n";
  out << "layers " << state.layers.size() << "\n";
  for (size_t i = 0; i < state.layers.size(); ++i) {
    const ConvParams& p = state.layers[i];
    out << "layer " << i << " " << p.out_channels << " " << p.in_channels << " " << p.kernel << " "
        << (state.groups[i] == ParamGroup::kTrunk ? "trunk" : "head") << "\n";
  }
  out << "end\n";
  for (const ConvParams& p : state.layers) {
    for (double v : p.weight) put_le(out, v);
    for (double v : p.bias) put_le(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

ModelState load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic)
    throw DataError("checkpoint " + path.string() + ": bad magic");

  auto expect = [&](const std::string& key) {
    if (!std::getline(in, line) || line.rfind(key + " ", 0) != 0)
      throw DataError("checkpoint " + path.string() + ": expected '" + key + "'");
    return line.substr(key.size() + 1);
  };
  ModelState state;
  state.name = expect("name");
  state.spec_hash = expect("spec_hash");
  if (state.spec_hash != spec.hash())
    throw DataError("checkpoint " + path.string() + " was trained for a different network spec");
  state.seed = std::stoull(expect("seed"));
  state.epoch = std::stoi(expect("epoch"));
  const size_t n = std::stoull(expect("layers"));
  const std::vector<FlatLayer> flat = flatten(spec);
  if (n != flat.size()) throw DataError("checkpoint " + path.string() + ": layer count mismatch");
  for (size_t i = 0; i < n; ++i) {
    std::istringstream ls(expect("layer"));
    size_t idx = 0;
    ConvParams p;
    std::string group;
    ls >> idx >> p.out_channels >> p.in_channels >> p.kernel >> group;
    if (idx != i || p.out_channels != flat[i].spec->out_channels || p.in_channels != flat[i].in_channels ||
        p.kernel != flat[i].spec->kernel)
      throw DataError("checkpoint " + path.string() + ": layer shape mismatch");
    p.weight.resize(static_cast<size_t>(p.out_channels) * p.fan_in());
    p.bias.resize(p.out_channels);
    state.layers.push_back(std::move(p));
    state.groups.push_back(group == "trunk" ? ParamGroup::kTrunk : ParamGroup::kHead);
  }
  if (!std::getline(in, line) || line != "end") throw DataError("checkpoint " + path.string() + ": missing end");
  for (ConvParams& p : state.layers) {
    for (double& v : p.weight) v = get_le(in);
    for (double& v : p.bias) v = get_le(in);
  }
  state.velocity = zero_gradients(state);
  return state;
}

}  // namespace pixprop
