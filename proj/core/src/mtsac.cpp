#include "slrl/mtsac.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <string>

#include "slrl/text.hpp"

namespace slrl::sac {

namespace {

constexpr double kSquashEpsilon = 1e-6;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

nn::NetworkSpec actor_spec(const SacConfig& c) {
  return {kEmbeddedObsDim, c.hidden_widths, 2 * kActionDim, nn::Activation::ReLU, nn::OutputHead::GaussianMeanLogStd};
}
nn::NetworkSpec critic_spec(const SacConfig& c) {
  return {kEmbeddedObsDim + kActionDim, c.hidden_widths, 1, nn::Activation::ReLU, nn::OutputHead::Linear};
}
nn::NetworkSpec value_spec(const SacConfig& c) {
  return {kEmbeddedObsDim, c.hidden_widths, 1, nn::Activation::ReLU, nn::OutputHead::Linear};
}

Eigen::MatrixXd to_column(const embed::EmbeddedObservation& obs) {
  return Eigen::Map<const Eigen::VectorXd>(obs.data(), kEmbeddedObsDim);
}

// Overwrite the task-code rows with the table's current codes (learned tables drift during training).
void refresh_codes(Eigen::MatrixXd& obs, std::span<const env::TaskId> tasks, const embed::EmbeddingTable& table) {
  for (Eigen::Index i = 0; i < obs.cols(); ++i) {
    obs.col(i).segment(kObsDim, kNumTasks) = table.embed(tasks[static_cast<std::size_t>(i)]);
  }
}

Eigen::MatrixXd stack(const Eigen::MatrixXd& top, const Eigen::MatrixXd& bottom) {
  Eigen::MatrixXd out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string("non-finite ") + what + " loss");
}

}  // namespace

void SacConfig::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (episodes_per_task < 0) throw ConfigError("episodes_per_task must be >= 0");
  if (log_std_min >= log_std_max) throw ConfigError("log_std bounds are inverted");
  if (hidden_widths.empty()) throw ConfigError("hidden_widths must be non-empty");
  if (replay_capacity == 0) throw ConfigError("replay_capacity must be positive");
}

Network Network::create(nn::NetworkSpec spec, double lr, Rng& rng) {
  spec.validate();
  Network n;
  n.params = nn::ParameterSet::initialize(spec, rng);
  n.optimizer = nn::AdamState::for_spec(spec, lr);
  n.spec = std::move(spec);
  return n;
}

Network Network::from_snapshot(const replay::NetworkSnapshot& snap, double lr) {
  Network n;
  n.spec = snap.spec;
  n.params = snap.params;
  n.optimizer = nn::AdamState::for_spec(snap.spec, lr);
  return n;
}

SacAgent SacAgent::create(const SacConfig& config, embed::EmbeddingKind kind, Rng& rng) {
  config.validate();
  SacAgent a;
  a.actor = Network::create(actor_spec(config), config.actor_lr, rng);
  a.critic1 = Network::create(critic_spec(config), config.critic_lr, rng);
  if (config.twin_critics) a.critic2 = Network::create(critic_spec(config), config.critic_lr, rng);
  a.value = Network::create(value_spec(config), config.value_lr, rng);
  a.target_value = a.value.params;
  a.log_alpha = config.initial_log_alpha;
  a.alpha_optimizer = nn::DenseAdam(1, 1, config.alpha_lr);
  a.embedding = embed::EmbeddingTable(kind);
  a.embedding_optimizer = nn::DenseAdam(kNumTasks, kNumTasks, config.actor_lr);
  return a;
}

SacAgent SacAgent::from_prior(const replay::PriorDataset& prior, const SacConfig& config) {
  prior.validate();
  SacAgent a;
  a.actor = Network::from_snapshot(prior.actor, config.actor_lr);
  a.critic1 = Network::from_snapshot(prior.critics.front(), config.critic_lr);
  if (prior.critics.size() > 1) a.critic2 = Network::from_snapshot(prior.critics[1], config.critic_lr);
  a.value = Network::from_snapshot(prior.value, config.value_lr);
  a.target_value = a.value.params;
  a.log_alpha = prior.log_alpha;
  a.alpha_optimizer = nn::DenseAdam(1, 1, config.alpha_lr);
  a.embedding = prior.embedding_table();
  a.embedding_optimizer = nn::DenseAdam(kNumTasks, kNumTasks, config.actor_lr);
  return a;
}

double SacAgent::alpha() const { return std::exp(log_alpha); }

embed::EmbeddedObservation SacAgent::embed_observation(const env::Observation& obs, env::TaskId task) const {
  return embed::concat_obs(obs, embedding.embed(task));
}

TransitionBatch TransitionBatch::from(std::span<const replay::Transition> transitions) {
  const auto n = static_cast<Eigen::Index>(transitions.size());
  TransitionBatch b;
  b.obs.resize(kEmbeddedObsDim, n);
  b.actions.resize(kActionDim, n);
  b.next_obs.resize(kEmbeddedObsDim, n);
  b.rewards.resize(n);
  b.dones.resize(n);
  b.tasks.reserve(transitions.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = transitions[static_cast<std::size_t>(i)];
    b.obs.col(i) = Eigen::Map<const Eigen::VectorXd>(t.obs.data(), kEmbeddedObsDim);
    b.actions.col(i) = Eigen::Map<const Eigen::VectorXd>(t.action.data(), kActionDim);
    b.next_obs.col(i) = Eigen::Map<const Eigen::VectorXd>(t.next_obs.data(), kEmbeddedObsDim);
    b.rewards(i) = t.reward;
    b.dones(i) = t.done ? 1.0 : 0.0;
    b.tasks.push_back(t.task);
  }
  return b;
}

Eigen::RowVectorXd squashed_gaussian_log_prob(const Eigen::MatrixXd& u, const Eigen::MatrixXd& mean,
                                              const Eigen::MatrixXd& log_std) {
  const Eigen::ArrayXXd z = (u - mean).array() / log_std.array().exp();
  const Eigen::ArrayXXd a = u.array().tanh();
  const Eigen::ArrayXXd per_dim =
      -0.5 * z.square() - log_std.array() - kHalfLog2Pi - (1.0 - a.square() + kSquashEpsilon).log();
  return per_dim.colwise().sum().matrix();
}

ActionSample sample_action(const SacAgent& agent, const embed::EmbeddedObservation& obs, const SacConfig& config,
                           Rng& rng) {
  const Eigen::MatrixXd out = nn::predict(agent.actor.spec, agent.actor.params, to_column(obs));
  const Eigen::MatrixXd mean = out.topRows(kActionDim);
  const Eigen::MatrixXd log_std = out.bottomRows(kActionDim).cwiseMax(config.log_std_min).cwiseMin(config.log_std_max);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd u(kActionDim, 1);
  for (int i = 0; i < kActionDim; ++i) u(i, 0) = mean(i, 0) + std::exp(log_std(i, 0)) * normal(rng);
  ActionSample s;
  for (int i = 0; i < kActionDim; ++i) s.action[static_cast<std::size_t>(i)] = std::tanh(u(i, 0));
  s.log_prob = squashed_gaussian_log_prob(u, mean, log_std)(0);
  return s;
}

std::array<double, kActionDim> greedy_action(const SacAgent& agent, const embed::EmbeddedObservation& obs) {
  const Eigen::MatrixXd out = nn::predict(agent.actor.spec, agent.actor.params, to_column(obs));
  std::array<double, kActionDim> a{};
  for (int i = 0; i < kActionDim; ++i) a[static_cast<std::size_t>(i)] = std::tanh(out(i, 0));
  return a;
}

Eigen::RowVectorXd critic_targets(const SacAgent& agent, const TransitionBatch& batch, const SacConfig& config) {
  Eigen::MatrixXd next_obs = batch.next_obs;
  if (agent.embedding.kind() == embed::EmbeddingKind::Learned) refresh_codes(next_obs, batch.tasks, agent.embedding);
  const Eigen::RowVectorXd next_value = nn::predict(agent.value.spec, agent.target_value, next_obs).row(0);
  const Eigen::RowVectorXd not_done = (1.0 - batch.dones.array()).matrix();
  return config.reward_scale * batch.rewards + config.gamma * not_done.cwiseProduct(next_value);
}

double alpha_gradient(double log_alpha, std::span<const double> log_probs, double target_entropy) {
  if (log_probs.empty()) return 0.0;
  double sum = 0.0;
  for (double lp : log_probs) sum += lp + target_entropy;
  return -std::exp(log_alpha) * sum / static_cast<double>(log_probs.size());
}

SacGradients compute_gradients(const SacAgent& agent, const TransitionBatch& batch, const Eigen::MatrixXd& noise,
                               const SacConfig& config, const UpdateOptions& options) {
  const Eigen::Index n = batch.size();
  if (n == 0) throw ContractViolation("SAC update needs a non-empty batch");
  if (noise.rows() != kActionDim || noise.cols() != n) throw ConfigError("noise must be 4 x batch");
  const double inv_n = 1.0 / static_cast<double>(n);
  const double alpha = agent.alpha();
  const bool learned = agent.embedding.kind() == embed::EmbeddingKind::Learned;

  Eigen::MatrixXd obs = batch.obs;
  if (learned) refresh_codes(obs, batch.tasks, agent.embedding);
  Eigen::MatrixXd actor_in = obs;
  if (options.mask_actor_goal) actor_in.middleRows(kGoalOffset, 3).setZero();

  SacGradients g;

  // Critics regress onto the soft Bellman target through the target value network.
  const Eigen::RowVectorXd y = critic_targets(agent, batch, config);
  const Eigen::MatrixXd replay_sa = stack(obs, batch.actions);
  auto critic_step = [&](const Network& critic, nn::ParameterSet& out) {
    auto fwd = nn::forward(critic.spec, critic.params, replay_sa);
    const Eigen::RowVectorXd err = fwd.output.row(0) - y;
    const Eigen::MatrixXd grad = 2.0 * inv_n * err;
    out = nn::backward(critic.spec, critic.params, fwd.cache, grad).param_gradients;
    return err.squaredNorm() * inv_n;
  };
  g.losses.critic = critic_step(agent.critic1, g.critic1);
  if (agent.critic2) {
    g.critic2.emplace();
    g.losses.critic += critic_step(*agent.critic2, *g.critic2);
  }

  // Reparameterized policy sample.
  auto actor_fwd = nn::forward(agent.actor.spec, agent.actor.params, actor_in);
  const Eigen::MatrixXd mean = actor_fwd.output.topRows(kActionDim);
  const Eigen::MatrixXd raw_log_std = actor_fwd.output.bottomRows(kActionDim);
  const Eigen::MatrixXd log_std = raw_log_std.cwiseMax(config.log_std_min).cwiseMin(config.log_std_max);
  const Eigen::ArrayXXd stddev = log_std.array().exp();
  const Eigen::MatrixXd u = mean + (stddev * noise.array()).matrix();
  const Eigen::ArrayXXd act = u.array().tanh();
  const Eigen::RowVectorXd log_prob = squashed_gaussian_log_prob(u, mean, log_std);

  const Eigen::MatrixXd policy_sa = stack(obs, act.matrix());
  auto q1 = nn::forward(agent.critic1.spec, agent.critic1.params, policy_sa);
  std::optional<nn::ForwardResult> q2;
  if (agent.critic2) q2 = nn::forward(agent.critic2->spec, agent.critic2->params, policy_sa);
  Eigen::RowVectorXd q_min = q1.output.row(0);
  Eigen::RowVectorXd pick1 = Eigen::RowVectorXd::Ones(n);
  if (q2) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (q2->output(0, i) < q1.output(0, i)) {
        q_min(i) = q2->output(0, i);
        pick1(i) = 0.0;
      }
    }
  }

  // Value regresses onto min Q - alpha log pi at the fresh action.
  {
    auto fwd = nn::forward(agent.value.spec, agent.value.params, obs);
    const Eigen::RowVectorXd target = q_min - alpha * log_prob;
    const Eigen::RowVectorXd err = fwd.output.row(0) - target;
    g.losses.value = err.squaredNorm() * inv_n;
    g.value = nn::backward(agent.value.spec, agent.value.params, fwd.cache, 2.0 * inv_n * err).param_gradients;
  }

  // Actor: mean(alpha log pi - min Q).
  g.losses.actor = (alpha * log_prob - q_min).mean();
  Eigen::MatrixXd dq_dsa = nn::backward(agent.critic1.spec, agent.critic1.params, q1.cache, -inv_n * pick1,
                                        nn::GradientMode::InputOnly)
                               .input_gradient;
  if (q2) {
    const Eigen::RowVectorXd pick2 = (1.0 - pick1.array()).matrix();
    dq_dsa += nn::backward(agent.critic2->spec, agent.critic2->params, q2->cache, -inv_n * pick2,
                           nn::GradientMode::InputOnly)
                  .input_gradient;
  }
  const Eigen::ArrayXXd one_minus_a2 = 1.0 - act.square();
  const Eigen::ArrayXXd dlogp_du = 2.0 * act * one_minus_a2 / (one_minus_a2 + kSquashEpsilon);
  const Eigen::ArrayXXd grad_u = alpha * inv_n * dlogp_du + dq_dsa.bottomRows(kActionDim).array() * one_minus_a2;
  Eigen::ArrayXXd grad_log_std = -alpha * inv_n + grad_u * noise.array() * stddev;
  grad_log_std = (raw_log_std.array() < config.log_std_min || raw_log_std.array() > config.log_std_max)
                     .select(0.0, grad_log_std);
  Eigen::MatrixXd actor_out_grad(2 * kActionDim, n);
  actor_out_grad << grad_u.matrix(), grad_log_std.matrix();
  auto actor_back = nn::backward(agent.actor.spec, agent.actor.params, actor_fwd.cache, actor_out_grad);
  g.actor = std::move(actor_back.param_gradients);

  if (learned) {
    const Eigen::MatrixXd code_grad = actor_back.input_gradient.middleRows(kObsDim, kNumTasks) +
                                      dq_dsa.middleRows(kObsDim, kNumTasks);
    g.embedding = agent.embedding.accumulate_gradient(batch.tasks, code_grad);
  } else {
    g.embedding = Eigen::MatrixXd::Zero(kNumTasks, kNumTasks);
  }

  // Temperature: mean(-alpha (log pi + target entropy)) with log pi held fixed.
  const Eigen::RowVectorXd shifted = (log_prob.array() + config.target_entropy).matrix();
  g.losses.alpha = -alpha * shifted.mean();
  g.log_alpha = -alpha * shifted.mean();
  return g;
}

LossReport update(SacAgent& agent, const TransitionBatch& batch, const SacConfig& config, Rng& rng,
                  const UpdateOptions& options) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd noise(kActionDim, batch.size());
  for (Eigen::Index c = 0; c < noise.cols(); ++c)
    for (Eigen::Index r = 0; r < noise.rows(); ++r) noise(r, c) = normal(rng);

  SacGradients g = compute_gradients(agent, batch, noise, config, options);
  require_finite(g.losses.critic, "critic");
  require_finite(g.losses.value, "value");
  require_finite(g.losses.actor, "actor");
  require_finite(g.losses.alpha, "alpha");

  nn::adam_step(agent.critic1.params, g.critic1, agent.critic1.optimizer, "critic1");
  if (agent.critic2) nn::adam_step(agent.critic2->params, *g.critic2, agent.critic2->optimizer, "critic2");
  nn::adam_step(agent.value.params, g.value, agent.value.optimizer, "value");
  nn::adam_step(agent.actor.params, g.actor, agent.actor.optimizer, "actor");
  if (agent.embedding.kind() == embed::EmbeddingKind::Learned) {
    agent.embedding_optimizer.apply(agent.embedding.learned_matrix(), g.embedding, "actor (embedding)");
  }
  if (options.learn_temperature) {
    Eigen::MatrixXd log_alpha(1, 1);
    log_alpha(0, 0) = agent.log_alpha;
    Eigen::MatrixXd alpha_grad(1, 1);
    alpha_grad(0, 0) = g.log_alpha;
    agent.alpha_optimizer.apply(log_alpha, alpha_grad, "alpha");
    agent.log_alpha = log_alpha(0, 0);
  }

  nn::soft_update(agent.value.params, agent.target_value, config.tau);
  return g.losses;
}

TrainingOutcome train_mtsac(std::span<const env::TaskId> tasks, SacAgent& agent, const SacConfig& config,
                            const env::EnvConfig& env_config, Rng& rng,
                            const std::function<void(const EpisodeLog&)>& on_episode) {
  config.validate();
  env_config.validate();
  if (tasks.empty()) throw ConfigError("train_mtsac needs at least one task");

  env::EnvConfig episode_config = env_config;
  episode_config.terminate_on_success = !config.continue_after_success;

  TrainingOutcome out{replay::ReplayBuffer(config.replay_capacity), {}};
  const long warmup = static_cast<long>(config.warmup_steps_per_task) * static_cast<long>(tasks.size());
  long total_steps = 0;
  LossReport last_losses;
  std::uniform_real_distribution<double> uniform_action(-1.0, 1.0);
  int episode = 0;

  for (int round = 0; round < config.episodes_per_task; ++round) {
    for (env::TaskId task : tasks) {
      auto [state, obs] = env::reset(task, episode_config, rng);
      EpisodeLog entry;
      entry.episode = episode++;
      entry.task = task;
      bool done = false;
      while (!done) {
        const auto embedded = agent.embed_observation(obs, task);
        std::array<double, kActionDim> action{};
        if (total_steps < warmup) {
          for (auto& v : action) v = uniform_action(rng);
        } else {
          action = sample_action(agent, embedded, config, rng).action;
        }
        const env::StepResult step = env::step(state, env::Action::from_span(action), episode_config);
        replay::Transition t;
        t.obs = embedded;
        t.action = action;
        t.reward = step.reward;
        t.next_obs = agent.embed_observation(step.observation, task);
        t.done = step.done;
        t.task = task;
        out.buffer.push(t);
        ++total_steps;

        if (out.buffer.size() >= static_cast<std::size_t>(config.batch_size)) {
          const auto sample = replay::sample_uniform(out.buffer, static_cast<std::size_t>(config.batch_size), rng);
          last_losses = update(agent, TransitionBatch::from(sample), config, rng);
        }

        entry.episode_return += step.reward;
        ++entry.steps;
        entry.success = entry.success || step.success;
        obs = step.observation;
        done = step.done;
      }
      entry.losses = last_losses;
      entry.alpha = agent.alpha();
      out.log.push_back(entry);
      if (on_episode) on_episode(entry);
    }
  }
  return out;
}

replay::PriorDataset make_prior(const SacAgent& agent, const replay::ReplayBuffer& buffer,
                                const env::EnvConfig& env_config) {
  if (buffer.empty()) throw ConfigError("cannot build prior data from an empty replay buffer");
  replay::PriorDataset p;
  p.transitions = buffer.snapshot();
  p.embedding_kind = agent.embedding.kind();
  p.embedding_codes = agent.embedding.code_matrix();
  p.env_config = env_config;
  p.log_alpha = agent.log_alpha;
  p.actor = agent.actor.snapshot();
  p.critics.push_back(agent.critic1.snapshot());
  if (agent.critic2) p.critics.push_back(agent.critic2->snapshot());
  p.value = agent.value.snapshot();
  p.validate();
  return p;
}

void write_training_log_csv(std::ostream& out, std::span<const EpisodeLog> log) {
  out << "episode,task,return,steps,success,critic_loss,value_loss,actor_loss,alpha_loss,alpha\n";
  for (const auto& e : log) {
    out << e.episode << ',' << env::task_index(e.task) << ',' << format_double(e.episode_return) << ',' << e.steps
        << ',' << (e.success ? 1 : 0) << ',' << format_double(e.losses.critic) << ','
        << format_double(e.losses.value) << ',' << format_double(e.losses.actor) << ','
        << format_double(e.losses.alpha) << ',' << format_double(e.alpha) << '\n';
  }
}

EvaluationResult evaluate_policy(const Policy& policy, env::TaskId task, const env::EnvConfig& env_config,
                                 int n_episodes, Rng& rng) {
  EvaluationResult r;
  r.episodes = n_episodes;
  double step_sum = 0.0;
  for (int e = 0; e < n_episodes; ++e) {
    auto [state, obs] = env::reset(task, env_config, rng);
    bool done = false;
    bool succeeded = false;
    while (!done && !succeeded) {
      const auto step = env::step(state, policy(state, obs), env_config);
      obs = step.observation;
      done = step.done;
      succeeded = step.success;
    }
    if (succeeded) {
      ++r.successes;
      step_sum += state.step_count;
    }
  }
  r.success_rate = n_episodes > 0 ? static_cast<double>(r.successes) / n_episodes : 0.0;
  if (r.successes > 0) r.mean_steps = step_sum / r.successes;
  return r;
}

EvaluationResult evaluate(const SacAgent& agent, env::TaskId task, const env::EnvConfig& env_config, int n_episodes,
                          bool goal_masked, Rng& rng) {
  Policy policy = [&](const env::EnvState&, const env::Observation& obs) {
    const auto input = goal_masked ? env::mask_goal(obs) : obs;
    return env::Action::from_span(greedy_action(agent, agent.embed_observation(input, task)));
  };
  return evaluate_policy(policy, task, env_config, n_episodes, rng);
}

}  // namespace slrl::sac
