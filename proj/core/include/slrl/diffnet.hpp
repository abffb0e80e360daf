#pragma once

// Small dense feed-forward networks with hand-written reverse-mode gradients.
// Batches are column-major: one column per sample.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "slrl/binary_io.hpp"
#include "slrl/common.hpp"

namespace slrl::nn {

enum class Activation : std::uint8_t { ReLU = 0, Tanh = 1 };
enum class OutputHead : std::uint8_t { Linear = 0, GaussianMeanLogStd = 1 };

struct NetworkSpec {
  int input_dim = 1;
  std::vector<int> hidden_widths{256, 256};
  int output_dim = 1;
  Activation activation = Activation::ReLU;
  OutputHead output_head = OutputHead::Linear;

  /// Throws ConfigError if dimensions are non-positive or the head is inconsistent.
  void validate() const;
  [[nodiscard]] std::size_t num_layers() const { return hidden_widths.size() + 1; }
  bool operator==(const NetworkSpec&) const = default;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

class ParameterSet {
 public:
  std::vector<Layer> layers;

  static ParameterSet zeros_like(const NetworkSpec& spec);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static ParameterSet initialize(const NetworkSpec& spec, Rng& rng);

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] bool matches(const NetworkSpec& spec) const;

  /// Flat visitation in serialization order (layer by layer, weights row-major, then bias).
  template <typename Fn>
  void for_each(Fn&& fn) {
    for (auto& layer : layers) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) fn(layer.weight(r, c));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) fn(layer.bias(r));
    }
  }
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& layer : layers) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) fn(layer.weight(r, c));
      for (Eigen::Index r = 0; r < layer.bias.size(); ++r) fn(layer.bias(r));
    }
  }

  /// Incremented by every in-library mutation; forward caches record it.
  [[nodiscard]] std::uint64_t generation() const { return generation_; }
  void touch() { ++generation_; }

  bool operator==(const ParameterSet& other) const;

 private:
  std::uint64_t generation_ = 0;
};

/// Activation record of one forward pass; valid only for the parameters that produced it.
struct ForwardCache {
  const ParameterSet* params = nullptr;
  std::uint64_t generation = 0;
  // Input to each affine layer; entries past the first are hidden activations.
  std::vector<Eigen::MatrixXd> layer_inputs;
};

struct ForwardResult {
  Eigen::MatrixXd output;
  ForwardCache cache;
};

struct BackwardResult {
  ParameterSet param_gradients;
  Eigen::MatrixXd input_gradient;
};

enum class GradientMode { Full, InputOnly };

ForwardResult forward(const NetworkSpec& spec, const ParameterSet& params, const Eigen::MatrixXd& input);
/// Forward without recording a cache.
Eigen::MatrixXd predict(const NetworkSpec& spec, const ParameterSet& params, const Eigen::MatrixXd& input);

BackwardResult backward(const NetworkSpec& spec, const ParameterSet& params, const ForwardCache& cache,
                        const Eigen::MatrixXd& output_gradient, GradientMode mode = GradientMode::Full);

struct AdamState {
  ParameterSet first_moment;
  ParameterSet second_moment;
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_spec(const NetworkSpec& spec, double learning_rate);
};

/// Bias-corrected Adam update. `loss_name` labels the diagnostic if the gradient is not finite.
void adam_step(ParameterSet& params, const ParameterSet& gradients, AdamState& state,
               std::string_view loss_name);

/// Adam for free-standing dense tensors (temperature, embedding matrix).
struct DenseAdam {
  Eigen::MatrixXd first_moment;
  Eigen::MatrixXd second_moment;
  std::int64_t step = 0;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  DenseAdam() = default;
  DenseAdam(Eigen::Index rows, Eigen::Index cols, double lr)
      : first_moment(Eigen::MatrixXd::Zero(rows, cols)),
        second_moment(Eigen::MatrixXd::Zero(rows, cols)),
        learning_rate(lr) {}

  void apply(Eigen::MatrixXd& param, const Eigen::MatrixXd& gradient, std::string_view loss_name);
};

/// target <- tau * source + (1 - tau) * target, elementwise.
void soft_update(const ParameterSet& source, ParameterSet& target, double tau);

// SLRLNET1: magic, u32 input_dim, u32 hidden count, u32 widths..., u32 output_dim,
// u8 activation, u8 head, then per layer the row-major weight matrix followed by the bias (f64 LE).
void write_network(ByteWriter& out, const NetworkSpec& spec, const ParameterSet& params);
std::pair<NetworkSpec, ParameterSet> read_network(ByteReader& in);

std::vector<std::uint8_t> serialize_network(const NetworkSpec& spec, const ParameterSet& params);
std::pair<NetworkSpec, ParameterSet> deserialize_network(std::span<const std::uint8_t> bytes);

}  // namespace slrl::nn
