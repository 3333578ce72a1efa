#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "roer/binary_io.hpp"

namespace roer::nn {

// Batches are column-major: one sample per column.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Fully connected ReLU network; the output layer is linear.
struct NetworkSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;

  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct ParameterSet {
  NetworkSpec spec;
  std::vector<Matrix> weights;  // weights[k] is (out_k x in_k)
  std::vector<Vector> biases;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_params() const;
  bool all_finite() const;

  // Same shapes, every entry zero.
  ParameterSet zeros_like() const;
  // this += alpha * other
  void axpy(double alpha, const ParameterSet& other);
  void scale(double alpha);

  // Flat view in layer order (weights column-major, then bias), for tests and tooling.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
};

// Fan-in scaled uniform init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ParameterSet init(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardCache {
  std::vector<Matrix> inputs;          // inputs[k] feeds layer k; inputs[0] is the batch
  std::vector<Matrix> pre_activations; // pre_activations[k] = W_k inputs[k] + b_k
};

Matrix forward(const ParameterSet& params, const Matrix& input);
Matrix forward(const ParameterSet& params, const Matrix& input, ForwardCache& cache);

struct Gradients {
  ParameterSet params;
  Matrix input;
};

// Reverse-mode gradients of sum(output .* output_gradient).
Gradients backward(const ParameterSet& params, const ForwardCache& cache, const Matrix& output_gradient);
Gradients backward(const ParameterSet& params, const Matrix& input, const Matrix& output_gradient);

// For scalar-output networks: per-sample input gradients d out_i / d x_i.
Matrix input_gradients(const ParameterSet& params, const ForwardCache& cache);

// For scalar-output networks: d/dtheta of sum_i <directions_i, d out_i / d x_i>,
// holding the ReLU masks fixed (exact almost everywhere). Bias gradients are zero.
ParameterSet input_gradient_vjp(const ParameterSet& params, const ForwardCache& cache, const Matrix& directions);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam. Steps with non-finite gradients are skipped and counted.
class Adam {
 public:
  Adam(const ParameterSet& like, AdamConfig cfg);

  // Returns false when the step was skipped.
  bool step(ParameterSet& params, const ParameterSet& grads);

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t steps() const { return step_; }
  std::uint64_t skipped() const { return skipped_; }
  const ParameterSet& first_moment() const { return m_; }
  const ParameterSet& second_moment() const { return v_; }

  void restore(ParameterSet m, ParameterSet v, std::uint64_t step, std::uint64_t skipped);

 private:
  AdamConfig cfg_;
  ParameterSet m_;
  ParameterSet v_;
  std::uint64_t step_ = 0;
  std::uint64_t skipped_ = 0;
};

// Adam for a single scalar parameter (the SAC log-temperature).
class ScalarAdam {
 public:
  explicit ScalarAdam(AdamConfig cfg) : cfg_(cfg) {}
  bool step(double& param, double grad);

  double m = 0.0;
  double v = 0.0;
  std::uint64_t t = 0;

 private:
  AdamConfig cfg_;
};

// target <- (1 - tau) target + tau online
void polyak(ParameterSet& target, const ParameterSet& online, double tau);

// Payload: u32 input_dim, u32 n_hidden, u32[n_hidden], u32 output_dim, then
// per layer f64 weights (column-major) followed by f64 biases.
void write_parameters(ByteWriter& w, const ParameterSet& params);
ParameterSet read_parameters(ByteReader& r);

// Standalone checkpoint in the kParameters envelope.
std::vector<std::uint8_t> save_parameters(const ParameterSet& params);
ParameterSet load_parameters(std::span<const std::uint8_t> bytes);

}  // namespace roer::nn
