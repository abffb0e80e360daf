#include "slrl/qwale.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace slrl::qwale {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd stack_state_action(const embed::EmbeddedObservation& obs, const std::array<double, kActionDim>& a) {
  Eigen::MatrixXd sa(kEmbeddedObsDim + kActionDim, 1);
  sa.topRows(kEmbeddedObsDim) = Eigen::Map<const Eigen::VectorXd>(obs.data(), kEmbeddedObsDim);
  sa.bottomRows(kActionDim) = Eigen::Map<const Eigen::VectorXd>(a.data(), kActionDim);
  return sa;
}

}  // namespace

void QwaleConfig::validate() const {
  if (life_budget < 0) throw ConfigError("life_budget must be >= 0");
  if (disc_update_period <= 0 || disc_positive_batch <= 0 || disc_negative_batch <= 0 || sac_updates_per_step < 0) {
    throw ConfigError("discriminator periods and batch sizes must be positive");
  }
  if (novelty_radius < 0.0) throw ConfigError("novelty_radius must be >= 0");
  if (!(clamp_epsilon > 0.0 && clamp_epsilon < 0.5)) throw ConfigError("clamp_epsilon must lie in (0, 0.5)");
  if (exponent_clip <= 0.0) throw ConfigError("exponent_clip must be positive");
}

Discriminator::Discriminator(const std::vector<int>& hidden_widths, double learning_rate, double clamp_epsilon,
                             Rng& rng)
    : spec{kEmbeddedObsDim + kActionDim, hidden_widths, 1, nn::Activation::ReLU, nn::OutputHead::Linear},
      clamp_epsilon_(clamp_epsilon) {
  spec.validate();
  params = nn::ParameterSet::initialize(spec, rng);
  optimizer = nn::AdamState::for_spec(spec, learning_rate);
}

Eigen::RowVectorXd Discriminator::logits(const Eigen::MatrixXd& state_actions) const {
  return nn::predict(spec, params, state_actions).row(0);
}

Eigen::RowVectorXd Discriminator::probabilities(const Eigen::MatrixXd& state_actions) const {
  Eigen::RowVectorXd p = logits(state_actions);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p(i) = std::clamp(sigmoid(p(i)), clamp_epsilon_, 1.0 - clamp_epsilon_);
  }
  return p;
}

double Discriminator::probability(const embed::EmbeddedObservation& obs,
                                  const std::array<double, kActionDim>& action) const {
  return probabilities(stack_state_action(obs, action))(0);
}

FrozenPriorCritics::FrozenPriorCritics(const replay::PriorDataset& prior)
    : critics_(prior.critics), value_(prior.value) {
  prior.validate();
}

Eigen::RowVectorXd FrozenPriorCritics::advantage(const Eigen::MatrixXd& obs, const Eigen::MatrixXd& actions) const {
  Eigen::MatrixXd sa(obs.rows() + actions.rows(), obs.cols());
  sa << obs, actions;
  Eigen::RowVectorXd q = nn::predict(critics_.front().spec, critics_.front().params, sa).row(0);
  for (std::size_t c = 1; c < critics_.size(); ++c) {
    q = q.cwiseMin(nn::predict(critics_[c].spec, critics_[c].params, sa).row(0));
  }
  return q - nn::predict(value_.spec, value_.params, obs).row(0);
}

Eigen::RowVectorXd normalize_q_weights(const Eigen::RowVectorXd& advantages, double clip) {
  if (advantages.size() == 0) return advantages;
  Eigen::RowVectorXd w = advantages.array().max(-clip).min(clip).exp().matrix();
  return w / w.mean();
}

Eigen::RowVectorXd q_weight(const replay::PriorDataset& prior, const Eigen::MatrixXd& obs,
                            const Eigen::MatrixXd& actions, double clip) {
  return normalize_q_weights(FrozenPriorCritics(prior).advantage(obs, actions), clip);
}

DiscriminatorLoss discriminator_loss(const Discriminator& disc, const Eigen::MatrixXd& positives,
                                     const Eigen::RowVectorXd& weights, const Eigen::MatrixXd& negatives) {
  const Eigen::Index n_pos = positives.cols();
  const Eigen::Index n_neg = negatives.cols();
  if (n_pos == 0 || n_neg == 0) throw ContractViolation("discriminator loss needs positives and negatives");
  if (weights.size() != n_pos) throw ConfigError("one weight per positive required");
  const double weight_sum = weights.sum();
  if (!(weight_sum > 0.0)) throw ConfigError("positive weights must have a positive sum");

  Eigen::MatrixXd both(positives.rows(), n_pos + n_neg);
  both << positives, negatives;
  auto fwd = nn::forward(disc.spec, disc.params, both);

  DiscriminatorLoss out;
  Eigen::MatrixXd grad(1, n_pos + n_neg);
  for (Eigen::Index i = 0; i < n_pos; ++i) {
    const double l = fwd.output(0, i);
    const double w = weights(i) / weight_sum;
    out.loss += w * softplus(-l);  // -log D
    grad(0, i) = -w * (1.0 - sigmoid(l));
  }
  for (Eigen::Index j = 0; j < n_neg; ++j) {
    const double l = fwd.output(0, n_pos + j);
    out.loss += softplus(l) / static_cast<double>(n_neg);  // -log(1 - D)
    grad(0, n_pos + j) = sigmoid(l) / static_cast<double>(n_neg);
  }
  out.gradient = nn::backward(disc.spec, disc.params, fwd.cache, grad).param_gradients;
  return out;
}

double discriminator_step(Discriminator& disc, const Eigen::MatrixXd& positives, const Eigen::RowVectorXd& weights,
                          const Eigen::MatrixXd& negatives) {
  DiscriminatorLoss l = discriminator_loss(disc, positives, weights, negatives);
  if (!std::isfinite(l.loss)) throw NonFiniteError("non-finite discriminator loss");
  nn::adam_step(disc.params, l.gradient, disc.optimizer, "discriminator");
  return l.loss;
}

double discriminator_update(Discriminator& disc, const replay::PriorDataset& prior,
                            const replay::TaskWeightedSampler& sampler, const FrozenPriorCritics& critics,
                            const replay::ReplayBuffer& online, const QwaleConfig& config, Rng& rng,
                            bool mask_goal_inputs) {
  if (online.empty()) throw ContractViolation("discriminator update needs online data");
  const int n_pos = config.disc_positive_batch;
  const int n_neg = config.disc_negative_batch;
  constexpr int kSa = kEmbeddedObsDim + kActionDim;

  Eigen::MatrixXd pos_obs(kEmbeddedObsDim, n_pos);
  Eigen::MatrixXd pos_act(kActionDim, n_pos);
  for (int i = 0; i < n_pos; ++i) {
    const auto& t = prior.transitions[sampler.sample_index(rng)];
    pos_obs.col(i) = Eigen::Map<const Eigen::VectorXd>(t.obs.data(), kEmbeddedObsDim);
    pos_act.col(i) = Eigen::Map<const Eigen::VectorXd>(t.action.data(), kActionDim);
  }
  const Eigen::RowVectorXd weights = normalize_q_weights(critics.advantage(pos_obs, pos_act), config.exponent_clip);

  Eigen::MatrixXd positives(kSa, n_pos);
  positives << pos_obs, pos_act;
  if (mask_goal_inputs) positives.middleRows(kGoalOffset, 3).setZero();

  Eigen::MatrixXd negatives(kSa, n_neg);
  std::uniform_int_distribution<std::size_t> pick(0, online.size() - 1);
  for (int j = 0; j < n_neg; ++j) {
    const auto& t = online.at(pick(rng));
    negatives.col(j).head(kEmbeddedObsDim) = Eigen::Map<const Eigen::VectorXd>(t.obs.data(), kEmbeddedObsDim);
    negatives.col(j).tail(kActionDim) = Eigen::Map<const Eigen::VectorXd>(t.action.data(), kActionDim);
  }
  return discriminator_step(disc, positives, weights, negatives);
}

double relabel_from_probability(double probability, double clamp_epsilon) {
  const double d = std::clamp(probability, clamp_epsilon, 1.0 - clamp_epsilon);
  return -std::log1p(-d);
}

double relabel_reward(const Discriminator& disc, const embed::EmbeddedObservation& obs,
                      const std::array<double, kActionDim>& action) {
  return relabel_from_probability(disc.probability(obs, action), disc.clamp_epsilon());
}

Rng trial_env_rng(std::uint64_t seed) { return Rng(seed); }
Rng trial_agent_rng(std::uint64_t seed) { return Rng(seed ^ 0x9E3779B97F4A7C15ULL); }

env::EnvConfig target_env_config(env::EnvConfig base, const QwaleConfig& config) {
  base.novelty_radius = config.novelty_radius;
  base.horizon = std::max(1, config.life_budget);
  return base;
}

SingleLifeResult single_life(env::TaskId task, const replay::PriorDataset& prior, const QwaleConfig& config,
                             const sac::SacConfig& sac_config, const env::EnvConfig& env_config, bool goal_masked,
                             std::uint64_t seed, const SingleLifeProbe* probe) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  SingleLifeResult result;
  result.task = task;
  result.seed = seed;
  result.goal_masked = goal_masked;
  if (config.life_budget == 0) return result;

  const env::EnvConfig target = target_env_config(env_config, config);
  Rng env_rng = trial_env_rng(seed);
  Rng rng = trial_agent_rng(seed);
  auto [state, obs] = env::reset(task, target, env_rng);
  result.novelty_offset = state.novelty_offset;

  sac::SacAgent agent = sac::SacAgent::from_prior(prior, sac_config);
  Discriminator disc(config.disc_hidden_widths, config.disc_lr, config.clamp_epsilon, rng);
  const FrozenPriorCritics critics(prior);
  const replay::TaskWeightedSampler sampler(prior.transitions, task);
  replay::ReplayBuffer online(static_cast<std::size_t>(config.life_budget));

  const bool mask_stored = goal_masked && config.mask_everywhere;
  const sac::UpdateOptions update_options{goal_masked && !config.mask_everywhere, config.learn_temperature};
  result.trajectory.reserve(static_cast<std::size_t>(std::min(config.life_budget, 20'000)));

  for (int t = 0; t < config.life_budget; ++t) {
    const env::Observation actor_view = goal_masked ? env::mask_goal(obs) : obs;
    const auto actor_input = agent.embed_observation(actor_view, task);
    if (probe && probe->on_actor_input) probe->on_actor_input(actor_input);
    const auto action = sac::sample_action(agent, actor_input, sac_config, rng).action;

    const env::Observation before = obs;
    const env::StepResult step = env::step(state, env::Action::from_span(action), target);

    // The environment reward is recorded for the trajectory file only; learning sees relabeled rewards.
    replay::Transition tr;
    tr.obs = agent.embed_observation(mask_stored ? env::mask_goal(before) : before, task);
    tr.action = action;
    tr.reward = 0.0;
    tr.next_obs = agent.embed_observation(mask_stored ? env::mask_goal(step.observation) : step.observation, task);
    tr.done = step.success;
    tr.task = task;
    online.push(tr);

    result.trajectory.push_back({t, before, action, step.reward, step.done, step.success});
    result.relabeled_rewards.push_back(relabel_reward(disc, tr.obs, tr.action));

    if ((t + 1) % config.disc_update_period == 0) {
      discriminator_update(disc, prior, sampler, critics, online, config, rng, mask_stored);
    }
    for (int k = 0; k < config.sac_updates_per_step; ++k) {
      auto sample = replay::sample_uniform(online, static_cast<std::size_t>(sac_config.batch_size), rng);
      sac::TransitionBatch batch = sac::TransitionBatch::from(sample);
      Eigen::MatrixXd sa(kEmbeddedObsDim + kActionDim, batch.size());
      sa << batch.obs, batch.actions;
      const Eigen::RowVectorXd d = disc.probabilities(sa);
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        batch.rewards(i) = relabel_from_probability(d(i), disc.clamp_epsilon());
      }
      if (probe && probe->on_sac_batch) probe->on_sac_batch(batch);
      sac::update(agent, batch, sac_config, rng, update_options);
    }

    obs = step.observation;
    result.steps_to_completion = t + 1;
    if (step.success) {
      result.success = true;
      break;
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

SingleLifeResult frozen_single_life(env::TaskId task, const replay::PriorDataset& prior, const QwaleConfig& config,
                                    const env::EnvConfig& env_config, bool goal_masked, std::uint64_t seed) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  SingleLifeResult result;
  result.task = task;
  result.seed = seed;
  result.goal_masked = goal_masked;
  if (config.life_budget == 0) return result;

  const env::EnvConfig target = target_env_config(env_config, config);
  Rng env_rng = trial_env_rng(seed);
  auto [state, obs] = env::reset(task, target, env_rng);
  result.novelty_offset = state.novelty_offset;

  const embed::EmbeddingTable table = prior.embedding_table();
  sac::SacAgent agent;
  agent.actor = sac::Network::from_snapshot(prior.actor, 0.0);
  agent.embedding = table;

  for (int t = 0; t < config.life_budget; ++t) {
    const env::Observation actor_view = goal_masked ? env::mask_goal(obs) : obs;
    const auto action = sac::greedy_action(agent, agent.embed_observation(actor_view, task));
    const env::Observation before = obs;
    const env::StepResult step = env::step(state, env::Action::from_span(action), target);
    result.trajectory.push_back({t, before, action, step.reward, step.done, step.success});
    obs = step.observation;
    result.steps_to_completion = t + 1;
    if (step.success) {
      result.success = true;
      break;
    }
  }
  result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace slrl::qwale
