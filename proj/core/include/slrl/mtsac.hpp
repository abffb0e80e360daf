#pragma once

// Task-conditioned soft actor-critic with a state-value network (SAC v1),
// twin clipped critics and a learned entropy temperature.

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "slrl/common.hpp"
#include "slrl/diffnet.hpp"
#include "slrl/envsuite.hpp"
#include "slrl/replay.hpp"
#include "slrl/taskembed.hpp"

namespace slrl::sac {

struct SacConfig {
  double gamma = 0.99;
  double critic_lr = 3e-4;
  double value_lr = 3e-4;
  double actor_lr = 3e-4;
  double alpha_lr = 3e-4;
  double reward_scale = 2.0;
  double tau = 0.005;
  int batch_size = 256;
  double target_entropy = -4.0;
  int episodes_per_task = 300;
  double log_std_min = -20.0;
  double log_std_max = 2.0;
  std::vector<int> hidden_widths{256, 256};
  bool twin_critics = true;
  int warmup_steps_per_task = 1000;
  std::size_t replay_capacity = 1'000'000;
  double initial_log_alpha = 0.0;
  /// Training episodes run to the horizon instead of stopping at the first success.
  bool continue_after_success = true;

  void validate() const;
};

struct Network {
  nn::NetworkSpec spec;
  nn::ParameterSet params;
  nn::AdamState optimizer;

  static Network create(nn::NetworkSpec spec, double lr, Rng& rng);
  static Network from_snapshot(const replay::NetworkSnapshot& snap, double lr);
  [[nodiscard]] replay::NetworkSnapshot snapshot() const { return {spec, params}; }
};

struct SacAgent {
  Network actor;
  Network critic1;
  std::optional<Network> critic2;
  Network value;
  nn::ParameterSet target_value;
  double log_alpha = 0.0;
  nn::DenseAdam alpha_optimizer;
  embed::EmbeddingTable embedding;
  nn::DenseAdam embedding_optimizer;

  static SacAgent create(const SacConfig& config, embed::EmbeddingKind kind, Rng& rng);
  /// Warm start from frozen prior snapshots; optimizers start fresh.
  static SacAgent from_prior(const replay::PriorDataset& prior, const SacConfig& config);

  [[nodiscard]] double alpha() const;
  [[nodiscard]] embed::EmbeddedObservation embed_observation(const env::Observation& obs, env::TaskId task) const;
};

/// Column-major view of a batch of transitions.
struct TransitionBatch {
  Eigen::MatrixXd obs;       // 46 x n
  Eigen::MatrixXd actions;   // 4 x n
  Eigen::MatrixXd next_obs;  // 46 x n
  Eigen::RowVectorXd rewards;
  Eigen::RowVectorXd dones;
  std::vector<env::TaskId> tasks;

  static TransitionBatch from(std::span<const replay::Transition> transitions);
  [[nodiscard]] Eigen::Index size() const { return obs.cols(); }
};

/// log density of a = tanh(u) with u ~ N(mean, exp(log_std)), per column.
/// Includes the change-of-variables term -sum log(1 - tanh(u)^2 + 1e-6).
Eigen::RowVectorXd squashed_gaussian_log_prob(const Eigen::MatrixXd& u, const Eigen::MatrixXd& mean,
                                              const Eigen::MatrixXd& log_std);

struct ActionSample {
  std::array<double, kActionDim> action{};
  double log_prob = 0.0;
};

ActionSample sample_action(const SacAgent& agent, const embed::EmbeddedObservation& obs, const SacConfig& config,
                           Rng& rng);
/// tanh(mean): the deterministic evaluation action.
std::array<double, kActionDim> greedy_action(const SacAgent& agent, const embed::EmbeddedObservation& obs);

struct LossReport {
  double critic = 0.0;
  double value = 0.0;
  double actor = 0.0;
  double alpha = 0.0;
};

struct SacGradients {
  nn::ParameterSet critic1;
  std::optional<nn::ParameterSet> critic2;
  nn::ParameterSet value;
  nn::ParameterSet actor;
  double log_alpha = 0.0;
  Eigen::MatrixXd embedding;  // zero unless the table is learned
  LossReport losses;
};

struct UpdateOptions {
  /// Zero the goal slots of the actor's input only (critics still see the goal).
  bool mask_actor_goal = false;
  bool learn_temperature = true;
};

/// y = reward_scale * r + gamma * (1 - done) * V_target(s').
Eigen::RowVectorXd critic_targets(const SacAgent& agent, const TransitionBatch& batch, const SacConfig& config);

/// d/d(log alpha) of mean(-alpha (log pi + target_entropy)).
double alpha_gradient(double log_alpha, std::span<const double> log_probs, double target_entropy);

/// All four losses and their gradients at the current parameters, with the reparameterization
/// noise supplied explicitly (4 x n standard normals).
SacGradients compute_gradients(const SacAgent& agent, const TransitionBatch& batch, const Eigen::MatrixXd& noise,
                               const SacConfig& config, const UpdateOptions& options = {});

/// One optimizer step on every loss, then a soft update of the target value network.
LossReport update(SacAgent& agent, const TransitionBatch& batch, const SacConfig& config, Rng& rng,
                  const UpdateOptions& options = {});

struct EpisodeLog {
  int episode = 0;
  env::TaskId task = env::TaskId::WindowOpen;
  double episode_return = 0.0;
  int steps = 0;
  bool success = false;
  LossReport losses;
  double alpha = 0.0;
};

struct TrainingOutcome {
  replay::ReplayBuffer buffer;
  std::vector<EpisodeLog> log;
};

/// Round-robin multi-task training at the env config's novelty (0 for the source MDP).
TrainingOutcome train_mtsac(std::span<const env::TaskId> tasks, SacAgent& agent, const SacConfig& config,
                            const env::EnvConfig& env_config, Rng& rng,
                            const std::function<void(const EpisodeLog&)>& on_episode = {});

/// Freeze the agent and final buffer into prior data. Throws ConfigError on an empty buffer.
replay::PriorDataset make_prior(const SacAgent& agent, const replay::ReplayBuffer& buffer,
                                const env::EnvConfig& env_config);

/// Writes the per-episode training log header and rows.
void write_training_log_csv(std::ostream& out, std::span<const EpisodeLog> log);

struct EvaluationResult {
  double success_rate = 0.0;
  std::optional<double> mean_steps;  // over successful episodes only
  int episodes = 0;
  int successes = 0;
};

using Policy = std::function<env::Action(const env::EnvState&, const env::Observation&)>;

EvaluationResult evaluate_policy(const Policy& policy, env::TaskId task, const env::EnvConfig& env_config,
                                 int n_episodes, Rng& rng);
/// Greedy evaluation of the agent.
EvaluationResult evaluate(const SacAgent& agent, env::TaskId task, const env::EnvConfig& env_config, int n_episodes,
                          bool goal_masked, Rng& rng);

}  // namespace slrl::sac
