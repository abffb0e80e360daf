#include "slrl/diffnet.hpp"

#include <cmath>
#include <string>

namespace slrl::nn {

namespace {

constexpr std::string_view kNetMagic = "SLRLNET1";

void apply_activation(Activation act, Eigen::MatrixXd& z) {
  switch (act) {
    case Activation::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Tanh:
      z = z.array().tanh().matrix();
      break;
  }
}

// Multiplies `grad` in place by the activation derivative expressed through the activation value.
void apply_activation_derivative(Activation act, const Eigen::MatrixXd& activated, Eigen::MatrixXd& grad) {
  switch (act) {
    case Activation::ReLU:
      grad = (activated.array() > 0.0).select(grad.array(), 0.0).matrix();
      break;
    case Activation::Tanh:
      grad = (grad.array() * (1.0 - activated.array().square())).matrix();
      break;
  }
}

void check_input(const NetworkSpec& spec, const ParameterSet& params, const Eigen::MatrixXd& input) {
  if (input.rows() != spec.input_dim) {
    throw ConfigError("network input has " + std::to_string(input.rows()) + " rows, spec expects " +
                      std::to_string(spec.input_dim));
  }
  if (!params.matches(spec)) {
    throw ConfigError("parameter shapes do not match network spec");
  }
}

}  // namespace

void NetworkSpec::validate() const {
  if (input_dim <= 0 || output_dim <= 0) throw ConfigError("network dims must be positive");
  for (int w : hidden_widths) {
    if (w <= 0) throw ConfigError("hidden widths must be positive");
  }
  if (output_head == OutputHead::GaussianMeanLogStd && output_dim % 2 != 0) {
    throw ConfigError("GaussianMeanLogStd head needs an even output_dim (2 x action_dim)");
  }
}

ParameterSet ParameterSet::zeros_like(const NetworkSpec& spec) {
  spec.validate();
  ParameterSet p;
  int fan_in = spec.input_dim;
  auto add = [&](int out) {
    p.layers.push_back({Eigen::MatrixXd::Zero(out, fan_in), Eigen::VectorXd::Zero(out)});
    fan_in = out;
  };
  for (int w : spec.hidden_widths) add(w);
  add(spec.output_dim);
  return p;
}

ParameterSet ParameterSet::initialize(const NetworkSpec& spec, Rng& rng) {
  ParameterSet p = zeros_like(spec);
  for (auto& layer : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = dist(rng);
  }
  return p;
}

std::size_t ParameterSet::size() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

bool ParameterSet::matches(const NetworkSpec& spec) const {
  if (layers.size() != spec.num_layers()) return false;
  int fan_in = spec.input_dim;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const int out = i < spec.hidden_widths.size() ? spec.hidden_widths[i] : spec.output_dim;
    if (layers[i].weight.rows() != out || layers[i].weight.cols() != fan_in || layers[i].bias.size() != out) {
      return false;
    }
    fan_in = out;
  }
  return true;
}

bool ParameterSet::operator==(const ParameterSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size()) {
      return false;
    }
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

ForwardResult forward(const NetworkSpec& spec, const ParameterSet& params, const Eigen::MatrixXd& input) {
  check_input(spec, params, input);
  ForwardResult result;
  result.cache.params = &params;
  result.cache.generation = params.generation();
  result.cache.layer_inputs.reserve(params.layers.size());
  result.cache.layer_inputs.push_back(input);
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    const auto& layer = params.layers[i];
    Eigen::MatrixXd z = layer.weight * result.cache.layer_inputs.back();
    z.colwise() += layer.bias;
    apply_activation(spec.activation, z);
    result.cache.layer_inputs.push_back(std::move(z));
  }
  result.output = params.layers[last].weight * result.cache.layer_inputs.back();
  result.output.colwise() += params.layers[last].bias;
  return result;
}

Eigen::MatrixXd predict(const NetworkSpec& spec, const ParameterSet& params, const Eigen::MatrixXd& input) {
  check_input(spec, params, input);
  Eigen::MatrixXd h = input;
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    Eigen::MatrixXd z = params.layers[i].weight * h;
    z.colwise() += params.layers[i].bias;
    apply_activation(spec.activation, z);
    h = std::move(z);
  }
  Eigen::MatrixXd out = params.layers[last].weight * h;
  out.colwise() += params.layers[last].bias;
  return out;
}

BackwardResult backward(const NetworkSpec& spec, const ParameterSet& params, const ForwardCache& cache,
                        const Eigen::MatrixXd& output_gradient, GradientMode mode) {
  if (cache.params != &params || cache.generation != params.generation() ||
      cache.layer_inputs.size() != params.layers.size()) {
    throw ContractViolation("backward called with a stale or mismatched forward cache");
  }
  const Eigen::Index batch = cache.layer_inputs.front().cols();
  if (output_gradient.rows() != spec.output_dim || output_gradient.cols() != batch) {
    throw ConfigError("output gradient shape does not match the forward batch");
  }

  BackwardResult result;
  if (mode == GradientMode::Full) result.param_gradients = ParameterSet::zeros_like(spec);

  Eigen::MatrixXd grad = output_gradient;
  for (std::size_t i = params.layers.size(); i-- > 0;) {
    const Eigen::MatrixXd& layer_input = cache.layer_inputs[i];
    if (mode == GradientMode::Full) {
      result.param_gradients.layers[i].weight.noalias() = grad * layer_input.transpose();
      result.param_gradients.layers[i].bias = grad.rowwise().sum();
    }
    Eigen::MatrixXd upstream = params.layers[i].weight.transpose() * grad;
    if (i > 0) apply_activation_derivative(spec.activation, layer_input, upstream);
    grad = std::move(upstream);
  }
  result.input_gradient = std::move(grad);
  return result;
}

AdamState AdamState::for_spec(const NetworkSpec& spec, double learning_rate) {
  AdamState s;
  s.first_moment = ParameterSet::zeros_like(spec);
  s.second_moment = ParameterSet::zeros_like(spec);
  s.learning_rate = learning_rate;
  return s;
}

namespace {

template <typename Param, typename Grad, typename Moment>
void adam_kernel(Param& p, const Grad& g, Moment& m, Moment& v, double lr, double beta1, double beta2, double eps,
                 double bc1, double bc2) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
  p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace

void adam_step(ParameterSet& params, const ParameterSet& gradients, AdamState& state, std::string_view loss_name) {
  if (gradients.layers.size() != params.layers.size() || state.first_moment.layers.size() != params.layers.size()) {
    throw ConfigError("adam_step: parameter, gradient and moment shapes differ");
  }
  if (!gradients.all_finite()) {
    throw NonFiniteError("non-finite gradient from loss '" + std::string(loss_name) + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    adam_kernel(params.layers[i].weight, gradients.layers[i].weight, state.first_moment.layers[i].weight,
                state.second_moment.layers[i].weight, state.learning_rate, state.beta1, state.beta2, state.epsilon,
                bc1, bc2);
    adam_kernel(params.layers[i].bias, gradients.layers[i].bias, state.first_moment.layers[i].bias,
                state.second_moment.layers[i].bias, state.learning_rate, state.beta1, state.beta2, state.epsilon,
                bc1, bc2);
  }
  params.touch();
  if (!params.all_finite()) {
    throw NonFiniteError("non-finite parameters after update for loss '" + std::string(loss_name) + "'");
  }
}

void DenseAdam::apply(Eigen::MatrixXd& param, const Eigen::MatrixXd& gradient, std::string_view loss_name) {
  if (!gradient.allFinite()) {
    throw NonFiniteError("non-finite gradient from loss '" + std::string(loss_name) + "'");
  }
  if (first_moment.rows() != param.rows() || first_moment.cols() != param.cols()) {
    throw ConfigError("DenseAdam: moment shape differs from parameter");
  }
  ++step;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  adam_kernel(param, gradient, first_moment, second_moment, learning_rate, beta1, beta2, epsilon, bc1, bc2);
}

void soft_update(const ParameterSet& source, ParameterSet& target, double tau) {
  if (source.layers.size() != target.layers.size()) throw ConfigError("soft_update: shape mismatch");
  for (std::size_t i = 0; i < source.layers.size(); ++i) {
    if (source.layers[i].weight.rows() != target.layers[i].weight.rows() ||
        source.layers[i].weight.cols() != target.layers[i].weight.cols()) {
      throw ConfigError("soft_update: shape mismatch");
    }
    target.layers[i].weight = tau * source.layers[i].weight + (1.0 - tau) * target.layers[i].weight;
    target.layers[i].bias = tau * source.layers[i].bias + (1.0 - tau) * target.layers[i].bias;
  }
  target.touch();
}

void write_network(ByteWriter& out, const NetworkSpec& spec, const ParameterSet& params) {
  if (!params.matches(spec)) throw ConfigError("write_network: parameters do not match spec");
  out.put_magic(kNetMagic);
  out.put(static_cast<std::uint32_t>(spec.input_dim));
  out.put(static_cast<std::uint32_t>(spec.hidden_widths.size()));
  for (int w : spec.hidden_widths) out.put(static_cast<std::uint32_t>(w));
  out.put(static_cast<std::uint32_t>(spec.output_dim));
  out.put(static_cast<std::uint8_t>(spec.activation));
  out.put(static_cast<std::uint8_t>(spec.output_head));
  for (const auto& layer : params.layers) {
    // Eigen is column-major; emit row-major explicitly.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = layer.weight;
    out.put_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
    out.put_doubles(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
}

std::pair<NetworkSpec, ParameterSet> read_network(ByteReader& in) {
  in.expect_magic(kNetMagic);
  NetworkSpec spec;
  spec.input_dim = static_cast<int>(in.get<std::uint32_t>());
  const auto hidden = in.get<std::uint32_t>();
  if (hidden > 64) throw FormatError("implausible hidden layer count " + std::to_string(hidden));
  spec.hidden_widths.resize(hidden);
  for (auto& w : spec.hidden_widths) w = static_cast<int>(in.get<std::uint32_t>());
  spec.output_dim = static_cast<int>(in.get<std::uint32_t>());
  const auto act = in.get<std::uint8_t>();
  const auto head = in.get<std::uint8_t>();
  if (act > 1 || head > 1) throw FormatError("unknown activation or head code");
  spec.activation = static_cast<Activation>(act);
  spec.output_head = static_cast<OutputHead>(head);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid network header: ") + e.what());
  }
  ParameterSet params = ParameterSet::zeros_like(spec);
  for (auto& layer : params.layers) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(layer.weight.rows(),
                                                                                layer.weight.cols());
    in.get_doubles(rm.data(), static_cast<std::size_t>(rm.size()));
    layer.weight = rm;
    in.get_doubles(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  if (!params.all_finite()) throw FormatError("network file holds non-finite parameters");
  return {std::move(spec), std::move(params)};
}

std::vector<std::uint8_t> serialize_network(const NetworkSpec& spec, const ParameterSet& params) {
  ByteWriter w;
  write_network(w, spec, params);
  return w.take();
}

std::pair<NetworkSpec, ParameterSet> deserialize_network(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto result = read_network(r);
  if (r.remaining() != 0) throw FormatError("trailing bytes after network payload");
  return result;
}

}  // namespace slrl::nn
