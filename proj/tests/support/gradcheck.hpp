#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "slrl/diffnet.hpp"

namespace slrl::testing {

// Small enough that the +-h stencil rarely straddles a ReLU kink; rounding error stays near 1e-10.
inline constexpr double kFiniteDifferenceStep = 1e-6;

/// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, 1e-8).
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, a = 0.0, n = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    a += analytic[i] * analytic[i];
    n += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(a), std::sqrt(n), 1e-8});
}

/// Central differences of `loss` with respect to each referenced scalar.
inline std::vector<double> numeric_gradient(const std::vector<double*>& slots, const std::function<double()>& loss,
                                            double h = kFiniteDifferenceStep) {
  std::vector<double> out(slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const double original = *slots[i];
    *slots[i] = original + h;
    const double plus = loss();
    *slots[i] = original - h;
    const double minus = loss();
    *slots[i] = original;
    out[i] = (plus - minus) / (2.0 * h);
  }
  return out;
}

inline std::vector<double*> slots_of(nn::ParameterSet& params) {
  std::vector<double*> out;
  params.for_each([&](double& v) { out.push_back(&v); });
  return out;
}

inline std::vector<double*> slots_of(Eigen::MatrixXd& m) {
  std::vector<double*> out;
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m.data() + i);
  return out;
}

inline std::vector<double> values_of(const nn::ParameterSet& params) {
  std::vector<double> out;
  params.for_each([&](double v) { out.push_back(v); });
  return out;
}

inline std::vector<double> values_of(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng);
  return m;
}

}  // namespace slrl::testing
