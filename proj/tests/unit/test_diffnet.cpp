#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "slrl/diffnet.hpp"

namespace slrl::nn {
namespace {

using testing::gaussian_matrix;

NetworkSpec linear_spec(int in, int out) {
  NetworkSpec s;
  s.input_dim = in;
  s.hidden_widths = {};
  s.output_dim = out;
  return s;
}

TEST(Forward, SingleAffineLayer) {
  const NetworkSpec spec = linear_spec(1, 1);
  ParameterSet p = ParameterSet::zeros_like(spec);
  p.layers[0].weight(0, 0) = 2.0;
  p.layers[0].bias(0) = 1.0;
  Eigen::MatrixXd x(1, 1);
  x << 3.0;
  EXPECT_DOUBLE_EQ(forward(spec, p, x).output(0, 0), 7.0);
}

TEST(Forward, ReluClampsNegativeHiddenUnits) {
  NetworkSpec spec = linear_spec(1, 1);
  spec.hidden_widths = {1};
  ParameterSet p = ParameterSet::zeros_like(spec);
  p.layers[0].weight(0, 0) = 1.0;
  p.layers[1].weight(0, 0) = 1.0;
  Eigen::MatrixXd x(1, 1);
  x << -1.0;
  EXPECT_EQ(predict(spec, p, x)(0, 0), 0.0);
  x << 2.5;
  EXPECT_EQ(predict(spec, p, x)(0, 0), 2.5);
}

TEST(Forward, IdentityLayerPassesInputThrough) {
  const NetworkSpec spec = linear_spec(5, 5);
  ParameterSet p = ParameterSet::zeros_like(spec);
  p.layers[0].weight.setIdentity();
  std::mt19937_64 rng(1);
  const Eigen::MatrixXd x = gaussian_matrix(5, 3, rng);
  EXPECT_EQ(predict(spec, p, x), x);
}

TEST(Forward, DimensionMismatchIsRejected) {
  const NetworkSpec spec = linear_spec(3, 1);
  Rng rng(0);
  const ParameterSet p = ParameterSet::initialize(spec, rng);
  EXPECT_THROW(forward(spec, p, Eigen::MatrixXd::Zero(4, 1)), ConfigError);
}

TEST(Forward, DeterministicBitIdenticalOutputs) {
  NetworkSpec spec = linear_spec(6, 3);
  spec.hidden_widths = {16, 16};
  Rng rng(4);
  const ParameterSet p = ParameterSet::initialize(spec, rng);
  std::mt19937_64 g(2);
  const Eigen::MatrixXd x = gaussian_matrix(6, 11, g);
  EXPECT_EQ(predict(spec, p, x), forward(spec, p, x).output);
  EXPECT_EQ(predict(spec, p, x), predict(spec, p, x));
}

TEST(Spec, ValidationRules) {
  NetworkSpec s = linear_spec(4, 3);
  s.output_head = OutputHead::GaussianMeanLogStd;
  EXPECT_THROW(s.validate(), ConfigError);
  s.output_dim = 8;
  EXPECT_NO_THROW(s.validate());
  s.hidden_widths = {0};
  EXPECT_THROW(s.validate(), ConfigError);
  s.hidden_widths = {4};
  s.input_dim = 0;
  EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Backward, SquareViaOutputGradient) {
  // y = x through an identity layer, L = y * y, so dL/dx = 2x.
  const NetworkSpec spec = linear_spec(1, 1);
  ParameterSet p = ParameterSet::zeros_like(spec);
  p.layers[0].weight(0, 0) = 1.0;
  Eigen::MatrixXd x(1, 1);
  x << 3.0;
  auto f = forward(spec, p, x);
  const Eigen::MatrixXd dy = 2.0 * f.output;
  const auto g = backward(spec, p, f.cache, dy);
  EXPECT_DOUBLE_EQ(g.input_gradient(0, 0), 6.0);
}

TEST(Backward, ZeroOutputGradientGivesZeroParameterGradients) {
  NetworkSpec spec = linear_spec(4, 2);
  spec.hidden_widths = {8};
  Rng rng(5);
  const ParameterSet p = ParameterSet::initialize(spec, rng);
  std::mt19937_64 g(5);
  auto f = forward(spec, p, gaussian_matrix(4, 3, g));
  const auto grads = backward(spec, p, f.cache, Eigen::MatrixXd::Zero(2, 3));
  for (double v : testing::values_of(grads.param_gradients)) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaleCacheIsRejected) {
  NetworkSpec spec = linear_spec(2, 1);
  Rng rng(6);
  ParameterSet p = ParameterSet::initialize(spec, rng);
  auto f = forward(spec, p, Eigen::MatrixXd::Ones(2, 1));
  const ParameterSet grads = ParameterSet::zeros_like(spec);
  AdamState adam = AdamState::for_spec(spec, 1e-3);
  adam_step(p, grads, adam, "probe");
  EXPECT_THROW(backward(spec, p, f.cache, Eigen::MatrixXd::Ones(1, 1)), ContractViolation);

  ParameterSet other = ParameterSet::initialize(spec, rng);
  auto f2 = forward(spec, other, Eigen::MatrixXd::Ones(2, 1));
  EXPECT_THROW(backward(spec, p, f2.cache, Eigen::MatrixXd::Ones(1, 1)), ContractViolation);
}

TEST(Backward, InputOnlyModeMatchesFullInputGradient) {
  NetworkSpec spec = linear_spec(5, 2);
  spec.hidden_widths = {7, 7};
  Rng rng(8);
  const ParameterSet p = ParameterSet::initialize(spec, rng);
  std::mt19937_64 g(8);
  auto f = forward(spec, p, gaussian_matrix(5, 4, g));
  const Eigen::MatrixXd dy = gaussian_matrix(2, 4, g);
  const auto full = backward(spec, p, f.cache, dy, GradientMode::Full);
  const auto input_only = backward(spec, p, f.cache, dy, GradientMode::InputOnly);
  EXPECT_EQ(full.input_gradient, input_only.input_gradient);
}

// Random 4-8-2 networks (and other random shapes), both activations, against central differences.
TEST(Backward, MatchesFiniteDifferencesOnRandomNetworks) {
  std::mt19937_64 g(2024);
  for (int draw = 0; draw < 50; ++draw) {
    NetworkSpec spec;
    if (draw == 0) {
      spec.input_dim = 4;
      spec.hidden_widths = {8};
      spec.output_dim = 2;
    } else {
      spec.input_dim = std::uniform_int_distribution<int>(1, 6)(g);
      spec.hidden_widths.assign(std::uniform_int_distribution<int>(1, 3)(g), 0);
      for (int& w : spec.hidden_widths) w = std::uniform_int_distribution<int>(1, 9)(g);
      spec.output_dim = std::uniform_int_distribution<int>(1, 4)(g);
    }
    spec.activation = draw % 2 ? Activation::Tanh : Activation::ReLU;
    Rng rng(static_cast<std::uint64_t>(draw));
    ParameterSet p = ParameterSet::initialize(spec, rng);
    Eigen::MatrixXd x = gaussian_matrix(spec.input_dim, 3, g);
    const Eigen::MatrixXd dy = gaussian_matrix(spec.output_dim, 3, g);
    auto loss = [&] { return (predict(spec, p, x).array() * dy.array()).sum(); };

    auto f = forward(spec, p, x);
    const auto grads = backward(spec, p, f.cache, dy);
    const auto numeric_p = testing::numeric_gradient(testing::slots_of(p), loss);
    EXPECT_LT(testing::relative_error(testing::values_of(grads.param_gradients), numeric_p), 1e-5) << "draw " << draw;
    const auto numeric_x = testing::numeric_gradient(testing::slots_of(x), loss);
    EXPECT_LT(testing::relative_error(testing::values_of(grads.input_gradient), numeric_x), 1e-5) << "draw " << draw;
  }
}

TEST(Adam, FirstStepOnScalar) {
  const NetworkSpec spec = linear_spec(1, 1);
  ParameterSet p = ParameterSet::zeros_like(spec);
  ParameterSet grad = ParameterSet::zeros_like(spec);
  grad.layers[0].weight(0, 0) = 1.0;
  AdamState state = AdamState::for_spec(spec, 3e-4);
  adam_step(p, grad, state, "unit");
  // m_hat = 1, v_hat = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(p.layers[0].weight(0, 0), -3e-4 / (1.0 + 1e-8), 1e-15);
  EXPECT_EQ(p.layers[0].bias(0), 0.0);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ZeroGradientLeavesParametersButCountsStep) {
  NetworkSpec spec = linear_spec(3, 2);
  Rng rng(1);
  ParameterSet p = ParameterSet::initialize(spec, rng);
  const ParameterSet before = p;
  AdamState state = AdamState::for_spec(spec, 1e-2);
  adam_step(p, ParameterSet::zeros_like(spec), state, "zero");
  EXPECT_EQ(p, before);
  EXPECT_EQ(state.step, 1);
}

TEST(Adam, ConstantGradientMovesMonotonicallyAgainstSign) {
  const NetworkSpec spec = linear_spec(1, 1);
  ParameterSet p = ParameterSet::zeros_like(spec);
  ParameterSet grad = ParameterSet::zeros_like(spec);
  grad.layers[0].weight(0, 0) = -0.3;
  grad.layers[0].bias(0) = 2.0;
  AdamState state = AdamState::for_spec(spec, 1e-3);
  double w = 0.0, b = 0.0;
  for (int i = 0; i < 100; ++i) {
    adam_step(p, grad, state, "monotone");
    EXPECT_GT(p.layers[0].weight(0, 0), w);
    EXPECT_LT(p.layers[0].bias(0), b);
    w = p.layers[0].weight(0, 0);
    b = p.layers[0].bias(0);
  }
}

TEST(Adam, NonFiniteGradientNamesTheLoss) {
  const NetworkSpec spec = linear_spec(2, 1);
  ParameterSet p = ParameterSet::zeros_like(spec);
  const ParameterSet before = p;
  ParameterSet grad = ParameterSet::zeros_like(spec);
  grad.layers[0].weight(0, 1) = std::nan("");
  AdamState state = AdamState::for_spec(spec, 1e-3);
  try {
    adam_step(p, grad, state, "critic");
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("critic"), std::string::npos);
  }
  EXPECT_EQ(p, before);
}

TEST(SoftUpdate, InterpolatesTowardSource) {
  const NetworkSpec spec = linear_spec(2, 2);
  ParameterSet source = ParameterSet::zeros_like(spec);
  ParameterSet target = ParameterSet::zeros_like(spec);
  source.layers[0].weight.setConstant(1.0);
  soft_update(source, target, 0.25);
  EXPECT_DOUBLE_EQ(target.layers[0].weight(1, 0), 0.25);
  soft_update(source, target, 1.0);
  EXPECT_EQ(target, source);
}

TEST(Serialization, RoundTripIsBitExact) {
  NetworkSpec spec;
  spec.input_dim = 46;
  spec.hidden_widths = {13, 5};
  spec.output_dim = 8;
  spec.activation = Activation::Tanh;
  spec.output_head = OutputHead::GaussianMeanLogStd;
  Rng rng(9);
  ParameterSet p = ParameterSet::initialize(spec, rng);
  p.layers[0].weight(0, 0) = -0.0;
  p.layers[1].bias(0) = 1e-310;  // subnormal
  const auto bytes = serialize_network(spec, p);
  const auto [spec2, p2] = deserialize_network(bytes);
  EXPECT_EQ(spec2, spec);
  EXPECT_EQ(serialize_network(spec2, p2), bytes);
  EXPECT_TRUE(std::signbit(p2.layers[0].weight(0, 0)));
}

TEST(Serialization, CorruptionIsRejected) {
  NetworkSpec spec = linear_spec(3, 2);
  spec.hidden_widths = {4};
  Rng rng(2);
  const auto bytes = serialize_network(spec, ParameterSet::initialize(spec, rng));

  auto bad_magic = bytes;
  bad_magic[0] ^= 0xFF;
  EXPECT_THROW(deserialize_network(bad_magic), FormatError);

  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{12}, bytes.size() - 1}) {
    const std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
    EXPECT_THROW(deserialize_network(truncated), FormatError) << "cut at " << cut;
  }
  auto trailing = bytes;
  trailing.push_back(0);
  EXPECT_THROW(deserialize_network(trailing), FormatError);
}

}  // namespace
}  // namespace slrl::nn
