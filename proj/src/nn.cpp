#include "roer/nn.hpp"

#include <cmath>

#include "roer/errors.hpp"
#include "roer/rng.hpp"

namespace roer::nn {

namespace {

constexpr std::uint16_t kParamsVersion = 1;

void check_same_shape(const ParameterSet& a, const ParameterSet& b) {
  if (a.weights.size() != b.weights.size()) throw InvalidInput("parameter sets differ in layer count");
  for (std::size_t k = 0; k < a.weights.size(); ++k) {
    if (a.weights[k].rows() != b.weights[k].rows() || a.weights[k].cols() != b.weights[k].cols() ||
        a.biases[k].size() != b.biases[k].size()) {
      throw InvalidInput("parameter sets differ in shape at layer " + std::to_string(k));
    }
  }
}

Matrix relu_mask(const Matrix& pre) { return (pre.array() > 0.0).cast<double>().matrix(); }

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim == 0 || output_dim == 0) throw InvalidInput("network dimensions must be >= 1");
  for (auto h : hidden_dims) {
    if (h == 0) throw InvalidInput("hidden dimensions must be >= 1");
  }
}

std::size_t ParameterSet::num_params() const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
  return n;
}

bool ParameterSet::all_finite() const {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (!weights[k].allFinite() || !biases[k].allFinite()) return false;
  }
  return true;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet z;
  z.spec = spec;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    z.weights.push_back(Matrix::Zero(weights[k].rows(), weights[k].cols()));
    z.biases.push_back(Vector::Zero(biases[k].size()));
  }
  return z;
}

void ParameterSet::axpy(double alpha, const ParameterSet& other) {
  check_same_shape(*this, other);
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += alpha * other.weights[k];
    biases[k] += alpha * other.biases[k];
  }
}

void ParameterSet::scale(double alpha) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] *= alpha;
    biases[k] *= alpha;
  }
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(num_params());
  for (std::size_t k = 0; k < weights.size(); ++k) {
    flat.insert(flat.end(), weights[k].data(), weights[k].data() + weights[k].size());
    flat.insert(flat.end(), biases[k].data(), biases[k].data() + biases[k].size());
  }
  return flat;
}

void ParameterSet::unflatten(std::span<const double> flat) {
  if (flat.size() != num_params()) throw InvalidInput("flat parameter vector has the wrong length");
  std::size_t pos = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    std::copy_n(flat.data() + pos, weights[k].size(), weights[k].data());
    pos += weights[k].size();
    std::copy_n(flat.data() + pos, biases[k].size(), biases[k].data());
    pos += biases[k].size();
  }
}

ParameterSet init(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(splitmix64(seed));
  ParameterSet p;
  p.spec = spec;
  std::vector<std::size_t> dims{spec.input_dim};
  dims.insert(dims.end(), spec.hidden_dims.begin(), spec.hidden_dims.end());
  dims.push_back(spec.output_dim);
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    const auto fan_in = static_cast<Eigen::Index>(dims[k]);
    const auto fan_out = static_cast<Eigen::Index>(dims[k + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = bound * (2.0 * uniform01(rng) - 1.0);
    }
    Vector b(fan_out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = bound * (2.0 * uniform01(rng) - 1.0);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

Matrix forward(const ParameterSet& params, const Matrix& input, ForwardCache& cache) {
  if (params.weights.empty()) throw InvalidInput("empty network");
  if (input.rows() != params.weights.front().cols()) {
    throw InvalidInput("input dimension " + std::to_string(input.rows()) + " != network input dimension " +
                       std::to_string(params.weights.front().cols()));
  }
  const std::size_t layers = params.num_layers();
  cache.inputs.resize(layers);
  cache.pre_activations.resize(layers);
  cache.inputs[0] = input;
  for (std::size_t k = 0; k < layers; ++k) {
    Matrix h = params.weights[k] * cache.inputs[k];
    h.colwise() += params.biases[k];
    cache.pre_activations[k] = std::move(h);
    if (k + 1 < layers) cache.inputs[k + 1] = cache.pre_activations[k].cwiseMax(0.0);
  }
  return cache.pre_activations.back();
}

Matrix forward(const ParameterSet& params, const Matrix& input) {
  ForwardCache cache;
  return forward(params, input, cache);
}

Gradients backward(const ParameterSet& params, const ForwardCache& cache, const Matrix& output_gradient) {
  const std::size_t layers = params.num_layers();
  if (cache.pre_activations.size() != layers) throw InvalidInput("forward cache does not match network");
  const auto& out = cache.pre_activations.back();
  if (output_gradient.rows() != out.rows() || output_gradient.cols() != out.cols()) {
    throw InvalidInput("output gradient shape mismatch");
  }
  Gradients g{params.zeros_like(), Matrix()};
  Matrix delta = output_gradient;
  for (std::size_t k = layers; k-- > 0;) {
    g.params.weights[k].noalias() = delta * cache.inputs[k].transpose();
    g.params.biases[k] = delta.rowwise().sum();
    Matrix upstream = params.weights[k].transpose() * delta;
    if (k > 0) {
      delta = upstream.cwiseProduct(relu_mask(cache.pre_activations[k - 1]));
    } else {
      g.input = std::move(upstream);
    }
  }
  return g;
}

Gradients backward(const ParameterSet& params, const Matrix& input, const Matrix& output_gradient) {
  ForwardCache cache;
  forward(params, input, cache);
  return backward(params, cache, output_gradient);
}

namespace {

// Pre-activation gradients E_k of each sample's scalar output.
std::vector<Matrix> scalar_output_deltas(const ParameterSet& params, const ForwardCache& cache) {
  if (params.spec.output_dim != 1 || params.weights.back().rows() != 1) {
    throw InvalidInput("input-gradient machinery needs a scalar-output network");
  }
  const std::size_t layers = params.num_layers();
  const auto batch = cache.inputs[0].cols();
  std::vector<Matrix> deltas(layers);
  deltas[layers - 1] = Matrix::Ones(1, batch);
  for (std::size_t k = layers - 1; k > 0; --k) {
    deltas[k - 1] = (params.weights[k].transpose() * deltas[k]).cwiseProduct(relu_mask(cache.pre_activations[k - 1]));
  }
  return deltas;
}

}  // namespace

Matrix input_gradients(const ParameterSet& params, const ForwardCache& cache) {
  const auto deltas = scalar_output_deltas(params, cache);
  return params.weights[0].transpose() * deltas[0];
}

ParameterSet input_gradient_vjp(const ParameterSet& params, const ForwardCache& cache, const Matrix& directions) {
  const auto deltas = scalar_output_deltas(params, cache);
  if (directions.rows() != cache.inputs[0].rows() || directions.cols() != cache.inputs[0].cols()) {
    throw InvalidInput("direction matrix shape mismatch");
  }
  ParameterSet g = params.zeros_like();
  Matrix tangent = directions;
  const std::size_t layers = params.num_layers();
  for (std::size_t k = 0; k < layers; ++k) {
    g.weights[k].noalias() = deltas[k] * tangent.transpose();
    if (k + 1 < layers) {
      tangent = (params.weights[k] * tangent).cwiseProduct(relu_mask(cache.pre_activations[k]));
    }
  }
  return g;
}

Adam::Adam(const ParameterSet& like, AdamConfig cfg) : cfg_(cfg), m_(like.zeros_like()), v_(like.zeros_like()) {}

bool Adam::step(ParameterSet& params, const ParameterSet& grads) {
  check_same_shape(params, grads);
  if (!grads.all_finite()) {
    ++skipped_;
    return false;
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  const double lr = cfg_.learning_rate;
  auto apply = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.epsilon);
  };
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    apply(params.weights[k], m_.weights[k], v_.weights[k], grads.weights[k]);
    apply(params.biases[k], m_.biases[k], v_.biases[k], grads.biases[k]);
  }
  return true;
}

void Adam::restore(ParameterSet m, ParameterSet v, std::uint64_t step, std::uint64_t skipped) {
  check_same_shape(m_, m);
  check_same_shape(v_, v);
  m_ = std::move(m);
  v_ = std::move(v);
  step_ = step;
  skipped_ = skipped;
}

bool ScalarAdam::step(double& param, double grad) {
  if (!std::isfinite(grad)) return false;
  ++t;
  m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
  v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad * grad;
  const double mhat = m / (1.0 - std::pow(cfg_.beta1, static_cast<double>(t)));
  const double vhat = v / (1.0 - std::pow(cfg_.beta2, static_cast<double>(t)));
  param -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
  return true;
}

void polyak(ParameterSet& target, const ParameterSet& online, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw InvalidInput("polyak coefficient must lie in (0, 1]");
  check_same_shape(target, online);
  for (std::size_t k = 0; k < target.weights.size(); ++k) {
    target.weights[k] = (1.0 - tau) * target.weights[k] + tau * online.weights[k];
    target.biases[k] = (1.0 - tau) * target.biases[k] + tau * online.biases[k];
  }
}

void write_parameters(ByteWriter& w, const ParameterSet& params) {
  w.u32(static_cast<std::uint32_t>(params.spec.input_dim));
  w.u32(static_cast<std::uint32_t>(params.spec.hidden_dims.size()));
  for (auto h : params.spec.hidden_dims) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(params.spec.output_dim));
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    w.f64s({params.weights[k].data(), static_cast<std::size_t>(params.weights[k].size())});
    w.f64s({params.biases[k].data(), static_cast<std::size_t>(params.biases[k].size())});
  }
}

ParameterSet read_parameters(ByteReader& r) {
  NetworkSpec spec;
  spec.input_dim = r.u32();
  const auto n_hidden = r.u32();
  if (n_hidden > 64) throw FormatError("implausible hidden layer count");
  for (std::uint32_t i = 0; i < n_hidden; ++i) spec.hidden_dims.push_back(r.u32());
  spec.output_dim = r.u32();
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("bad network spec: ") + e.what());
  }
  ParameterSet p = init(spec, 0);
  for (std::size_t k = 0; k < p.weights.size(); ++k) {
    r.f64s({p.weights[k].data(), static_cast<std::size_t>(p.weights[k].size())});
    r.f64s({p.biases[k].data(), static_cast<std::size_t>(p.biases[k].size())});
  }
  return p;
}

std::vector<std::uint8_t> save_parameters(const ParameterSet& params) {
  ByteWriter w;
  write_parameters(w, params);
  return wrap_envelope(EnvelopeKind::kParameters, kParamsVersion, w.bytes());
}

ParameterSet load_parameters(std::span<const std::uint8_t> bytes) {
  ByteReader r(open_envelope(bytes, EnvelopeKind::kParameters, kParamsVersion));
  auto p = read_parameters(r);
  if (r.remaining() != 0) throw FormatError("trailing bytes after parameters");
  return p;
}

}  // namespace roer::nn
