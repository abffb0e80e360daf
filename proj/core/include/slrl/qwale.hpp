#pragma once

// Q-weighted adversarial single-life adaptation. A discriminator separates prior
// state-actions (weighted by exp(Q - V) of the frozen prior critics and by task
// match) from online ones; -log(1 - D) replaces the environment reward.

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <vector>

#include "slrl/common.hpp"
#include "slrl/diffnet.hpp"
#include "slrl/envsuite.hpp"
#include "slrl/mtsac.hpp"
#include "slrl/replay.hpp"

namespace slrl::qwale {

struct QwaleConfig {
  int life_budget = 10'000;
  int disc_update_period = 10;
  int disc_positive_batch = 128;
  int disc_negative_batch = 128;
  int sac_updates_per_step = 1;
  double exponent_clip = 10.0;
  double novelty_radius = 0.3;
  double disc_lr = 3e-4;
  std::vector<int> disc_hidden_widths{256, 256};
  double clamp_epsilon = 1e-6;
  /// Mask the goal for critics and discriminator too, not only for the actor.
  bool mask_everywhere = false;
  bool learn_temperature = true;

  void validate() const;
};

class Discriminator {
 public:
  Discriminator(const std::vector<int>& hidden_widths, double learning_rate, double clamp_epsilon, Rng& rng);

  /// Raw logits for a 50 x n batch of stacked (obs46, action4) columns.
  [[nodiscard]] Eigen::RowVectorXd logits(const Eigen::MatrixXd& state_actions) const;
  /// sigmoid(logit) clamped to [eps, 1 - eps].
  [[nodiscard]] double probability(const embed::EmbeddedObservation& obs,
                                   const std::array<double, kActionDim>& action) const;
  [[nodiscard]] Eigen::RowVectorXd probabilities(const Eigen::MatrixXd& state_actions) const;

  [[nodiscard]] double clamp_epsilon() const { return clamp_epsilon_; }
  nn::NetworkSpec spec;
  nn::ParameterSet params;
  nn::AdamState optimizer;

 private:
  double clamp_epsilon_;
};

/// Frozen min(Q1, Q2) and V from the prior snapshots.
class FrozenPriorCritics {
 public:
  explicit FrozenPriorCritics(const replay::PriorDataset& prior);
  /// min Q(s, a) - V(s) per column.
  [[nodiscard]] Eigen::RowVectorXd advantage(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const;

 private:
  std::vector<replay::NetworkSnapshot> critics_;
  replay::NetworkSnapshot value_;
};

/// exp(clamp(adv, -clip, clip)) divided by its batch mean.
Eigen::RowVectorXd normalize_q_weights(const Eigen::RowVectorXd& advantages, double clip = 10.0);
Eigen::RowVectorXd q_weight(const replay::PriorDataset& prior, const Eigen::MatrixXd& obs,
                            const Eigen::MatrixXd& actions, double clip = 10.0);

struct DiscriminatorLoss {
  double loss = 0.0;
  nn::ParameterSet gradient;
};

/// L = -(sum_i w_i log D(pos_i)) / sum_i w_i - mean_j log(1 - D(neg_j)).
DiscriminatorLoss discriminator_loss(const Discriminator& disc, const Eigen::MatrixXd& positives,
                                     const Eigen::RowVectorXd& weights, const Eigen::MatrixXd& negatives);
/// One Adam step on explicit positives/negatives. Returns the pre-step loss.
double discriminator_step(Discriminator& disc, const Eigen::MatrixXd& positives, const Eigen::RowVectorXd& weights,
                          const Eigen::MatrixXd& negatives);

/// Draws task-weighted prior positives (Q-weighted) and uniform online negatives, then steps.
double discriminator_update(Discriminator& disc, const replay::PriorDataset& prior,
                            const replay::TaskWeightedSampler& sampler, const FrozenPriorCritics& critics,
                            const replay::ReplayBuffer& online, const QwaleConfig& config, Rng& rng,
                            bool mask_goal_inputs = false);

/// -log(1 - D) with D clamped to [eps, 1 - eps].
double relabel_from_probability(double probability, double clamp_epsilon = 1e-6);
double relabel_reward(const Discriminator& disc, const embed::EmbeddedObservation& obs,
                      const std::array<double, kActionDim>& action);

struct SingleLifeResult {
  env::TaskId task = env::TaskId::WindowOpen;
  std::uint64_t seed = 0;
  bool goal_masked = false;
  bool success = false;
  int steps_to_completion = 0;
  env::Vec3 novelty_offset{0.0, 0.0, 0.0};
  std::vector<env::TrajectoryRow> trajectory;
  std::vector<double> relabeled_rewards;
  double wall_seconds = 0.0;
};

/// Instrumentation hooks; both optional.
struct SingleLifeProbe {
  std::function<void(const embed::EmbeddedObservation&)> on_actor_input;
  std::function<void(const sac::TransitionBatch&)> on_sac_batch;
};

/// Environment seed for a trial; the frozen arm reuses it so both arms see the same novelty offset.
Rng trial_env_rng(std::uint64_t seed);
Rng trial_agent_rng(std::uint64_t seed);

/// Single-life target-MDP config: novelty radius from the QWALE config, horizon = life budget.
env::EnvConfig target_env_config(env::EnvConfig base, const QwaleConfig& config);

SingleLifeResult single_life(env::TaskId task, const replay::PriorDataset& prior, const QwaleConfig& config,
                             const sac::SacConfig& sac_config, const env::EnvConfig& env_config, bool goal_masked,
                             std::uint64_t seed, const SingleLifeProbe* probe = nullptr);

/// The prior's actor acting greedily with no adaptation, on the same budget and offsets.
SingleLifeResult frozen_single_life(env::TaskId task, const replay::PriorDataset& prior, const QwaleConfig& config,
                                    const env::EnvConfig& env_config, bool goal_masked, std::uint64_t seed);

}  // namespace slrl::qwale
