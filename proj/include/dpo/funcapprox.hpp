#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dpo/rng.hpp"

namespace dpo {

/// Column-major batch of vectors: one sample per column.
using Batch = Eigen::MatrixXd;

enum class Activation { kTanh, kSoftplus, kIdentity };

/// Layer widths and activations of a fully connected network.
///
/// `activations` has one entry per affine layer (hidden layers followed by
/// the output layer).
struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int output_dim = 0;
  std::vector<Activation> activations;

  /// Hidden layers use tanh, the output layer is linear.
  static MlpSpec make(int input_dim, std::vector<int> hidden_dims,
                      int output_dim);
  /// Two tanh hidden layers of 256 units.
  static MlpSpec with_defaults(int input_dim, int output_dim);

  int num_layers() const { return static_cast<int>(hidden_dims.size()) + 1; }
  int fan_in(int layer) const;
  int fan_out(int layer) const;
  std::size_t param_count() const;
  void validate() const;

  bool operator==(const MlpSpec&) const = default;
};

/// Parameter buffers start on a SIMD boundary. Eigen picks its vectorized
/// loop split from the address, so a fixed alignment keeps products
/// bit-identical from one allocation to the next.
using ParamStorage = std::vector<double, Eigen::aligned_allocator<double>>;

/// Flat parameter storage with a gradient accumulator of the same length.
///
/// Layout per layer: row-major weights (fan_out x fan_in) then biases.
struct ParamVector {
  ParamStorage values;
  ParamStorage grads;

  ParamVector() = default;
  explicit ParamVector(std::size_t n) : values(n, 0.0), grads(n, 0.0) {}

  std::size_t size() const { return values.size(); }
  void zero_grad();
  bool all_finite() const;
};

double softplus(double x);
double sigmoid(double x);

/// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for every weight and bias.
ParamVector init_params(const MlpSpec& spec, Rng& rng);

std::vector<double> forward(const MlpSpec& spec, const ParamVector& params,
                            std::span<const double> input);

/// Accumulates d(output . output_grad)/d(params) into params.grads and
/// returns the gradient with respect to the input.
std::vector<double> backward(const MlpSpec& spec, ParamVector& params,
                             std::span<const double> input,
                             std::span<const double> output_grad);

Batch forward_batch(const MlpSpec& spec, const ParamVector& params,
                    const Batch& inputs);

Batch backward_batch(const MlpSpec& spec, ParamVector& params,
                     const Batch& inputs, const Batch& output_grads);

/// Inputs and pre-activations of every layer, kept for a backward pass.
struct ForwardTape {
  std::vector<Batch> layer_inputs;
  std::vector<Batch> pre_activations;
  Batch output;
};

ForwardTape forward_tape(const MlpSpec& spec, const ParamVector& params,
                         const Batch& inputs);
/// Like backward_batch but reuses a recorded forward pass.
Batch backward_tape(const MlpSpec& spec, ParamVector& params,
                    const ForwardTape& tape, const Batch& output_grads);

/// Forward-mode directional derivative of the outputs along a parameter
/// direction (inputs held fixed).
Batch jvp_batch(const MlpSpec& spec, const ParamVector& params,
                const Batch& inputs, std::span<const double> direction);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  AdamState(std::size_t n, double lr)
      : first_moment(n, 0.0), second_moment(n, 0.0), learning_rate(lr) {}
};

/// Bias-corrected adaptive-moment step on params.grads; clears the grads.
void adam_step(ParamVector& params, AdamState& state);

/// A network: spec plus parameters.
struct Network {
  MlpSpec spec;
  ParamVector params;

  Network() = default;
  Network(MlpSpec s, Rng& rng) : spec(std::move(s)), params(init_params(spec, rng)) {}
  Network(MlpSpec s, ParamVector p);

  Batch forward(const Batch& inputs) const {
    return forward_batch(spec, params, inputs);
  }
  Batch backward(const Batch& inputs, const Batch& output_grads) {
    return backward_batch(spec, params, inputs, output_grads);
  }
};

// Checkpoints: header `mlp <input_dim> <hidden...> <output_dim>` followed by
// one parameter value per line in layer order.
void write_checkpoint(std::ostream& out, const MlpSpec& spec,
                      const ParamVector& params);
Network read_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Network& net);
Network load_checkpoint(const std::string& path);

}  // namespace dpo
