#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>

namespace slrl {

/// Every stochastic component draws from an explicitly seeded engine of this type.
using Rng = std::mt19937_64;

/// Dimension or configuration mismatch detected at a module boundary.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (e.g. stepping a finished episode).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or infinity reached a parameter, gradient or loss.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kObsDim = 39;
inline constexpr int kFrameDim = 18;
inline constexpr int kGoalOffset = 36;
inline constexpr int kNumTasks = 7;
inline constexpr int kEmbeddedObsDim = kObsDim + kNumTasks;  // 46
inline constexpr int kActionDim = 4;

}  // namespace slrl
