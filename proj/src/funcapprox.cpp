#include "dpo/funcapprox.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace dpo {

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerOffsets {
  std::size_t weights;
  std::size_t bias;
};

std::vector<LayerOffsets> layer_offsets(const MlpSpec& spec) {
  std::vector<LayerOffsets> out;
  std::size_t pos = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<std::size_t>(spec.fan_in(l));
    const auto o = static_cast<std::size_t>(spec.fan_out(l));
    out.push_back({pos, pos + in * o});
    pos += (in + 1) * o;
  }
  return out;
}

void check_params(const MlpSpec& spec, const ParamVector& params) {
  if (params.values.size() != spec.param_count() ||
      params.grads.size() != params.values.size()) {
    throw std::invalid_argument("parameter vector does not match network spec");
  }
}

void check_inputs(const MlpSpec& spec, const Batch& inputs) {
  if (inputs.rows() != spec.input_dim) {
    throw std::invalid_argument("input dimension mismatch: expected " +
                                std::to_string(spec.input_dim) + ", got " +
                                std::to_string(inputs.rows()));
  }
}

// tanh through the vectorized exponential, 1 - 2 / (exp(2x) + 1). Saturates
// cleanly at both ends; absolute error near 0 is a few ulps of 1.
void fast_tanh(Batch& z) {
  z.array() = 1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0);
}

void activate(Activation act, Batch& z) {
  switch (act) {
    case Activation::kTanh:
      fast_tanh(z);
      break;
    case Activation::kSoftplus:
      z = z.unaryExpr([](double v) { return softplus(v); });
      break;
    case Activation::kIdentity:
      break;
  }
}

// Derivative of the activation given its pre-activation input.
Batch activation_slope(Activation act, const Batch& z) {
  switch (act) {
    case Activation::kTanh: {
      Batch t = z;
      fast_tanh(t);
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::kSoftplus:
      return z.unaryExpr([](double v) { return sigmoid(v); });
    case Activation::kIdentity:
      break;
  }
  return Batch::Ones(z.rows(), z.cols());
}

}  // namespace

ForwardTape forward_tape(const MlpSpec& spec, const ParamVector& params,
                         const Batch& inputs) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  const auto offsets = layer_offsets(spec);
  ForwardTape tape;
  Batch h = inputs;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::Map<const RowMatrix> w(params.values.data() + offsets[l].weights,
                                  spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<const Eigen::VectorXd> b(params.values.data() + offsets[l].bias,
                                        spec.fan_out(l));
    Batch z = w * h;
    z.colwise() += b;
    tape.layer_inputs.push_back(std::move(h));
    h = z;
    activate(spec.activations[l], h);
    tape.pre_activations.push_back(std::move(z));
  }
  tape.output = std::move(h);
  return tape;
}

MlpSpec MlpSpec::make(int input_dim, std::vector<int> hidden_dims,
                      int output_dim) {
  MlpSpec spec;
  spec.input_dim = input_dim;
  spec.hidden_dims = std::move(hidden_dims);
  spec.output_dim = output_dim;
  spec.activations.assign(spec.hidden_dims.size(), Activation::kTanh);
  spec.activations.push_back(Activation::kIdentity);
  spec.validate();
  return spec;
}

MlpSpec MlpSpec::with_defaults(int input_dim, int output_dim) {
  return make(input_dim, {256, 256}, output_dim);
}

int MlpSpec::fan_in(int layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

int MlpSpec::fan_out(int layer) const {
  return layer == num_layers() - 1 ? output_dim : hidden_dims[layer];
}

std::size_t MlpSpec::param_count() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    n += static_cast<std::size_t>(fan_in(l) + 1) *
         static_cast<std::size_t>(fan_out(l));
  }
  return n;
}

void MlpSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0) {
    throw std::invalid_argument("network dimensions must be positive");
  }
  for (int h : hidden_dims) {
    if (h <= 0) throw std::invalid_argument("hidden widths must be positive");
  }
  if (static_cast<int>(activations.size()) != num_layers()) {
    throw std::invalid_argument("one activation per layer required");
  }
}

void ParamVector::zero_grad() { std::fill(grads.begin(), grads.end(), 0.0); }

bool ParamVector::all_finite() const {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i]) || !std::isfinite(grads[i])) return false;
  }
  return true;
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  ParamVector params(spec.param_count());
  std::size_t pos = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in(l)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const auto count = static_cast<std::size_t>(spec.fan_in(l) + 1) *
                       static_cast<std::size_t>(spec.fan_out(l));
    for (std::size_t i = 0; i < count; ++i) params.values[pos++] = dist(rng);
  }
  return params;
}

Batch forward_batch(const MlpSpec& spec, const ParamVector& params,
                    const Batch& inputs) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  const auto offsets = layer_offsets(spec);
  Batch h = inputs;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::Map<const RowMatrix> w(params.values.data() + offsets[l].weights,
                                  spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<const Eigen::VectorXd> b(params.values.data() + offsets[l].bias,
                                        spec.fan_out(l));
    Batch z = w * h;
    z.colwise() += b;
    activate(spec.activations[l], z);
    h = std::move(z);
  }
  return h;
}

Batch backward_batch(const MlpSpec& spec, ParamVector& params,
                     const Batch& inputs, const Batch& output_grads) {
  return backward_tape(spec, params, forward_tape(spec, params, inputs), output_grads);
}

Batch backward_tape(const MlpSpec& spec, ParamVector& params,
                    const ForwardTape& tape, const Batch& output_grads) {
  check_params(spec, params);
  if (tape.layer_inputs.size() != static_cast<std::size_t>(spec.num_layers())) {
    throw std::invalid_argument("tape does not match the network");
  }
  if (output_grads.rows() != spec.output_dim ||
      output_grads.cols() != tape.layer_inputs[0].cols()) {
    throw std::invalid_argument("output gradient shape mismatch");
  }
  const auto offsets = layer_offsets(spec);

  Batch delta = output_grads.cwiseProduct(
      activation_slope(spec.activations.back(), tape.pre_activations.back()));
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    Eigen::Map<const RowMatrix> w(params.values.data() + offsets[l].weights,
                                  spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<RowMatrix> gw(params.grads.data() + offsets[l].weights,
                             spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<Eigen::VectorXd> gb(params.grads.data() + offsets[l].bias,
                                   spec.fan_out(l));
    gw.noalias() += delta * tape.layer_inputs[l].transpose();
    gb += delta.rowwise().sum();
    Batch upstream = w.transpose() * delta;
    if (l > 0) {
      if (spec.activations[l - 1] == Activation::kTanh) {
        // The layer input already holds tanh of the pre-activation.
        upstream.array() *= 1.0 - tape.layer_inputs[l].array().square();
      } else {
        upstream = upstream.cwiseProduct(activation_slope(
            spec.activations[l - 1], tape.pre_activations[l - 1]));
      }
    }
    delta = std::move(upstream);
  }
  return delta;
}

Batch jvp_batch(const MlpSpec& spec, const ParamVector& params,
                const Batch& inputs, std::span<const double> direction) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  if (direction.size() != params.size()) {
    throw std::invalid_argument("direction length mismatch");
  }
  const auto offsets = layer_offsets(spec);
  const ParamStorage dir(direction.begin(), direction.end());
  Batch h = inputs;
  Batch dh = Batch::Zero(inputs.rows(), inputs.cols());
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::Map<const RowMatrix> w(params.values.data() + offsets[l].weights,
                                  spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<const Eigen::VectorXd> b(params.values.data() + offsets[l].bias,
                                        spec.fan_out(l));
    Eigen::Map<const RowMatrix> dw(dir.data() + offsets[l].weights,
                                   spec.fan_out(l), spec.fan_in(l));
    Eigen::Map<const Eigen::VectorXd> db(dir.data() + offsets[l].bias,
                                         spec.fan_out(l));
    Batch z = w * h;
    z.colwise() += b;
    Batch dz = dw * h + w * dh;
    dz.colwise() += db;
    dh = dz.cwiseProduct(activation_slope(spec.activations[l], z));
    activate(spec.activations[l], z);
    h = std::move(z);
  }
  return dh;
}

std::vector<double> forward(const MlpSpec& spec, const ParamVector& params,
                            std::span<const double> input) {
  if (static_cast<int>(input.size()) != spec.input_dim) {
    throw std::invalid_argument("input dimension mismatch");
  }
  Batch x = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  const Batch y = forward_batch(spec, params, x);
  return {y.data(), y.data() + y.size()};
}

std::vector<double> backward(const MlpSpec& spec, ParamVector& params,
                             std::span<const double> input,
                             std::span<const double> output_grad) {
  if (static_cast<int>(input.size()) != spec.input_dim ||
      static_cast<int>(output_grad.size()) != spec.output_dim) {
    throw std::invalid_argument("dimension mismatch in backward");
  }
  Batch x = Eigen::Map<const Eigen::VectorXd>(input.data(), input.size());
  Batch g = Eigen::Map<const Eigen::VectorXd>(output_grad.data(),
                                              output_grad.size());
  const Batch dx = backward_batch(spec, params, x, g);
  return {dx.data(), dx.data() + dx.size()};
}

void adam_step(ParamVector& params, AdamState& state) {
  const std::size_t n = params.size();
  if (state.first_moment.size() != n || state.second_moment.size() != n) {
    throw std::invalid_argument("optimizer state does not match parameters");
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = params.grads[i];
    state.first_moment[i] =
        state.beta1 * state.first_moment[i] + (1.0 - state.beta1) * g;
    state.second_moment[i] =
        state.beta2 * state.second_moment[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.first_moment[i] / c1;
    const double v_hat = state.second_moment[i] / c2;
    params.values[i] -=
        state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
  params.zero_grad();
}

Network::Network(MlpSpec s, ParamVector p)
    : spec(std::move(s)), params(std::move(p)) {
  check_params(spec, params);
}

void write_checkpoint(std::ostream& out, const MlpSpec& spec,
                      const ParamVector& params) {
  check_params(spec, params);
  out << "mlp " << spec.input_dim;
  for (int h : spec.hidden_dims) out << ' ' << h;
  out << ' ' << spec.output_dim << '\n';
  char buf[40];
  for (double v : params.values) {
    std::snprintf(buf, sizeof(buf), "%.17g\n", v);
    out << buf;
  }
}

Network read_checkpoint(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) {
    throw std::runtime_error("empty checkpoint");
  }
  std::istringstream hs(header);
  std::string tag;
  hs >> tag;
  if (tag != "mlp") throw std::runtime_error("bad checkpoint header");
  std::vector<int> dims;
  int d = 0;
  while (hs >> d) dims.push_back(d);
  if (dims.size() < 2) throw std::runtime_error("bad checkpoint header");
  const MlpSpec spec = MlpSpec::make(
      dims.front(), std::vector<int>(dims.begin() + 1, dims.end() - 1),
      dims.back());
  ParamVector params(spec.param_count());
  std::string line;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::getline(in, line)) {
      throw std::runtime_error("truncated checkpoint");
    }
    params.values[i] = std::strtod(line.c_str(), nullptr);
  }
  return Network(spec, std::move(params));
}

void save_checkpoint(const std::string& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_checkpoint(out, net.spec, net.params);
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return read_checkpoint(in);
}

}  // namespace dpo
