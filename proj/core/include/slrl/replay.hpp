#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "slrl/common.hpp"
#include "slrl/diffnet.hpp"
#include "slrl/envsuite.hpp"
#include "slrl/taskembed.hpp"

namespace slrl::replay {

struct Transition {
  embed::EmbeddedObservation obs{};
  std::array<double, kActionDim> action{};
  double reward = 0.0;
  embed::EmbeddedObservation next_obs{};
  bool done = false;
  env::TaskId task = env::TaskId::WindowOpen;

  [[nodiscard]] bool all_finite() const;
  bool operator==(const Transition&) const = default;
};

/// Fixed-capacity FIFO ring of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  /// Throws ConfigError if any field is non-finite.
  void push(const Transition& t);

  [[nodiscard]] std::size_t size() const { return count_; }
  [[nodiscard]] std::size_t capacity() const { return capacity_; }
  [[nodiscard]] bool empty() const { return count_ == 0; }

  /// i-th stored transition, oldest first.
  [[nodiscard]] const Transition& at(std::size_t i) const;
  /// Contents oldest first.
  [[nodiscard]] std::vector<Transition> snapshot() const;

 private:
  std::size_t capacity_;
  std::vector<Transition> storage_;
  std::size_t cursor_ = 0;  // next write slot once full
  std::size_t count_ = 0;
};

/// i.i.d. uniform draws with replacement. Throws ContractViolation on an empty buffer.
std::vector<Transition> sample_uniform(const ReplayBuffer& buffer, std::size_t n, Rng& rng);

struct NetworkSnapshot {
  nn::NetworkSpec spec;
  nn::ParameterSet params;
  bool operator==(const NetworkSnapshot&) const = default;
};

inline constexpr std::uint32_t kPriorFormatVersion = 1;

/// Final training buffer plus frozen networks: the prior data consumed by single-life runs.
struct PriorDataset {
  std::vector<Transition> transitions;
  embed::EmbeddingKind embedding_kind = embed::EmbeddingKind::Sine;
  Eigen::MatrixXd embedding_codes = Eigen::MatrixXd::Identity(kNumTasks, kNumTasks);
  env::EnvConfig env_config;
  double log_alpha = 0.0;
  NetworkSnapshot actor;
  std::vector<NetworkSnapshot> critics;  // one or two
  NetworkSnapshot value;
  std::uint32_t version = kPriorFormatVersion;

  [[nodiscard]] embed::EmbeddingTable embedding_table() const;
  /// Throws ConfigError when the dataset breaks its invariants.
  void validate() const;
  bool operator==(const PriorDataset& other) const;
};

/// Draws transitions with weight 1 for `target_task` and 0.5 for every other task.
class TaskWeightedSampler {
 public:
  static constexpr double kOtherTaskWeight = 0.5;

  TaskWeightedSampler(std::span<const Transition> pool, env::TaskId target_task);

  [[nodiscard]] std::size_t sample_index(Rng& rng) const;
  [[nodiscard]] double matching_probability() const { return match_probability_; }

 private:
  std::vector<std::size_t> matching_;
  std::vector<std::size_t> others_;
  double match_probability_ = 0.0;
};

std::vector<Transition> sample_task_weighted(const PriorDataset& prior, std::size_t n, env::TaskId target_task,
                                             Rng& rng);

// SLRLPRI1 layout (little-endian):
//   magic[8] | u32 version | u64 transitions | u32 obs_dim | u32 action_dim | u8 embedding kind
//   | f64[7*7] embedding codes (row-major) | EnvConfig: i32 horizon, f64 novelty_radius, f64 max_step,
//   f64 contact_radius, f64 success_threshold, u64 seed | f64 log_alpha | u8 critic count
//   | transitions: f64[46] obs, f64[4] action, f64 reward, f64[46] next_obs, u8 done, u8 task
//   | SLRLNET1 actor | SLRLNET1 critic x count | SLRLNET1 value | u32 CRC-32 of all preceding bytes
std::vector<std::uint8_t> serialize_prior(const PriorDataset& prior);
PriorDataset deserialize_prior(std::span<const std::uint8_t> bytes);

void save_prior(const PriorDataset& prior, const std::filesystem::path& path);
PriorDataset load_prior(const std::filesystem::path& path);

}  // namespace slrl::replay
