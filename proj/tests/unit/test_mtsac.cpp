#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "fixtures.hpp"
#include "gradient_suite.hpp"
#include "slrl/mtsac.hpp"

namespace slrl::sac {
namespace {

using testing::random_task;
using testing::random_transition;
using testing::tiny_sac_config;

TransitionBatch random_batch(int n, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::vector<replay::Transition> ts;
  for (int i = 0; i < n; ++i) ts.push_back(random_transition(g, random_task(g)));
  return TransitionBatch::from(ts);
}

TEST(Config, ValidationRejectsBadValues) {
  SacConfig c;
  EXPECT_NO_THROW(c.validate());
  c.gamma = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SacConfig{};
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = SacConfig{};
  c.hidden_widths.clear();
  EXPECT_THROW(c.validate(), ConfigError);
  c = SacConfig{};
  c.log_std_min = 3.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Agent, NetworkShapes) {
  Rng rng(1);
  const auto agent = SacAgent::create(tiny_sac_config(), embed::EmbeddingKind::Sine, rng);
  EXPECT_EQ(agent.actor.spec.input_dim, 46);
  EXPECT_EQ(agent.actor.spec.output_dim, 8);
  EXPECT_EQ(agent.actor.spec.output_head, nn::OutputHead::GaussianMeanLogStd);
  EXPECT_EQ(agent.critic1.spec.input_dim, 50);
  ASSERT_TRUE(agent.critic2.has_value());
  EXPECT_EQ(agent.value.spec.input_dim, 46);
  EXPECT_EQ(agent.target_value, agent.value.params);
  EXPECT_DOUBLE_EQ(agent.alpha(), 1.0);
}

TEST(LogProb, MatchesDirectDensityFormula) {
  Eigen::MatrixXd u(4, 1), mean(4, 1), log_std(4, 1);
  u << 0.3, -1.2, 0.0, 2.0;
  mean << 0.1, -1.0, 0.5, 1.5;
  log_std << -0.5, 0.2, 0.0, -1.0;
  double expected = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double s = std::exp(log_std(i));
    const double z = (u(i) - mean(i)) / s;
    expected += -0.5 * z * z - std::log(s * std::sqrt(2.0 * std::numbers::pi)) -
                std::log(1.0 - std::tanh(u(i)) * std::tanh(u(i)) + 1e-6);
  }
  EXPECT_NEAR(squashed_gaussian_log_prob(u, mean, log_std)(0), expected, 1e-12);
}

TEST(Sampling, ActionsAreBoundedAndSeeded) {
  Rng rng(2);
  const auto agent = SacAgent::create(tiny_sac_config(), embed::EmbeddingKind::OneHot, rng);
  const auto obs = agent.embed_observation(env::Observation{}, env::TaskId::Push);
  Rng a(5), b(5);
  for (int i = 0; i < 200; ++i) {
    const auto s1 = sample_action(agent, obs, tiny_sac_config(), a);
    const auto s2 = sample_action(agent, obs, tiny_sac_config(), b);
    EXPECT_EQ(s1.action, s2.action);
    for (double v : s1.action) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_TRUE(std::isfinite(s1.log_prob));
  }
  for (double v : greedy_action(agent, obs)) EXPECT_LE(std::abs(v), 1.0);
}

TEST(Targets, BellmanBackupThroughTargetValue) {
  Rng rng(3);
  SacConfig config = tiny_sac_config();
  auto agent = SacAgent::create(config, embed::EmbeddingKind::Sine, rng);
  TransitionBatch batch = random_batch(5, 4);
  batch.dones << 0, 1, 0, 1, 0;
  const Eigen::RowVectorXd v_next = nn::predict(agent.value.spec, agent.target_value, batch.next_obs).row(0);
  const Eigen::RowVectorXd y = critic_targets(agent, batch, config);
  for (int i = 0; i < 5; ++i) {
    const double expected = 2.0 * batch.rewards(i) + (batch.dones(i) > 0 ? 0.0 : 0.99 * v_next(i));
    EXPECT_NEAR(y(i), expected, 1e-12);
  }
}

TEST(Temperature, GradientFormula) {
  const std::vector<double> lp{-3.0, -5.0};
  // d/dlog_alpha of mean(-alpha (lp + H)) = -alpha * mean(lp + H).
  EXPECT_NEAR(alpha_gradient(std::log(0.5), lp, -4.0), -0.5 * ((-7.0) + (-9.0)) / 2.0, 1e-15);
  EXPECT_EQ(alpha_gradient(0.0, {}, -4.0), 0.0);
}

TEST(Gradients, MatchFiniteDifferences) {
  const auto worst = testing::run_gradient_suite(10, 17);
  for (const auto& [loss, err] : worst) EXPECT_LT(err, 1e-4) << loss;
}

TEST(Gradients, EmbeddingGradientIsZeroForFixedCodes) {
  Rng rng(4);
  const auto agent = SacAgent::create(tiny_sac_config(), embed::EmbeddingKind::Sine, rng);
  std::mt19937_64 g(4);
  const auto batch = random_batch(6, 4);
  const auto grads = compute_gradients(agent, batch, testing::gaussian_matrix(4, 6, g), tiny_sac_config());
  EXPECT_EQ(grads.embedding.cwiseAbs().sum(), 0.0);
}

TEST(Update, StepsEveryNetworkAndTarget) {
  Rng rng(8);
  const auto config = tiny_sac_config();
  auto agent = SacAgent::create(config, embed::EmbeddingKind::Learned, rng);
  const auto before = agent;
  const auto batch = random_batch(16, 9);
  const auto losses = update(agent, batch, config, rng);
  EXPECT_TRUE(std::isfinite(losses.critic) && std::isfinite(losses.actor));
  EXPECT_FALSE(agent.actor.params == before.actor.params);
  EXPECT_FALSE(agent.critic1.params == before.critic1.params);
  EXPECT_FALSE(agent.critic2->params == before.critic2->params);
  EXPECT_FALSE(agent.value.params == before.value.params);
  EXPECT_FALSE(agent.target_value == before.target_value);
  EXPECT_NE(agent.log_alpha, before.log_alpha);
  EXPECT_FALSE(agent.embedding.learned_matrix() == before.embedding.learned_matrix());
  EXPECT_EQ(agent.actor.optimizer.step, 1);
}

TEST(Update, TemperatureCanBeFrozen) {
  Rng rng(10);
  const auto config = tiny_sac_config();
  auto agent = SacAgent::create(config, embed::EmbeddingKind::Sine, rng);
  UpdateOptions options;
  options.learn_temperature = false;
  update(agent, random_batch(8, 11), config, rng, options);
  EXPECT_EQ(agent.log_alpha, 0.0);
}

TEST(Update, TargetValueIsPolyakAverage) {
  Rng rng(12);
  auto config = tiny_sac_config();
  auto agent = SacAgent::create(config, embed::EmbeddingKind::Sine, rng);
  const nn::ParameterSet target_before = agent.target_value;
  update(agent, random_batch(8, 13), config, rng);
  const double tau = config.tau;
  const auto& v = agent.value.params.layers[0].weight;
  const auto& t0 = target_before.layers[0].weight;
  const auto& t1 = agent.target_value.layers[0].weight;
  EXPECT_NEAR((t1 - (tau * v + (1.0 - tau) * t0)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(Update, EmptyBatchIsAContractViolation) {
  Rng rng(14);
  const auto config = tiny_sac_config();
  auto agent = SacAgent::create(config, embed::EmbeddingKind::Sine, rng);
  EXPECT_THROW(update(agent, TransitionBatch::from({}), config, rng), ContractViolation);
}

TEST(Training, ShortRunIsDeterministicAndLogsEpisodes) {
  SacConfig config = tiny_sac_config();
  config.episodes_per_task = 2;
  config.warmup_steps_per_task = 50;
  env::EnvConfig env_config;
  env_config.novelty_radius = 0.0;
  env_config.horizon = 40;
  const std::vector<env::TaskId> tasks{env::TaskId::ButtonPress, env::TaskId::Push};
  auto run = [&] {
    Rng rng(21);
    auto agent = SacAgent::create(config, embed::EmbeddingKind::Sine, rng);
    auto outcome = train_mtsac(tasks, agent, config, env_config, rng);
    return std::make_pair(make_prior(agent, outcome.buffer, env_config), outcome.log);
  };
  const auto [prior_a, log_a] = run();
  const auto [prior_b, log_b] = run();
  EXPECT_EQ(prior_a, prior_b);
  ASSERT_EQ(log_a.size(), 4u);
  EXPECT_EQ(log_a[0].task, env::TaskId::ButtonPress);
  EXPECT_EQ(log_a[1].task, env::TaskId::Push);
  EXPECT_EQ(prior_a.transitions.size(), 4u * 40u);
  std::ostringstream csv;
  write_training_log_csv(csv, log_a);
  const std::string text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(Training, EmptyBufferCannotBecomePrior) {
  Rng rng(22);
  const auto agent = SacAgent::create(tiny_sac_config(), embed::EmbeddingKind::Sine, rng);
  EXPECT_THROW(make_prior(agent, replay::ReplayBuffer(4), env::EnvConfig{}), ConfigError);
}

TEST(Evaluation, ScriptedPolicySucceedsAndCountsSteps) {
  env::EnvConfig config;
  config.novelty_radius = 0.0;
  Rng rng(0);
  const Policy scripted = [&](const env::EnvState& s, const env::Observation&) {
    return env::scripted_action(s, config);
  };
  const auto result = evaluate_policy(scripted, env::TaskId::WindowOpen, config, 3, rng);
  EXPECT_EQ(result.successes, 3);
  EXPECT_DOUBLE_EQ(result.success_rate, 1.0);
  ASSERT_TRUE(result.mean_steps.has_value());
  EXPECT_LE(*result.mean_steps, 200.0);

  const Policy idle = [](const env::EnvState&, const env::Observation&) { return env::Action{}; };
  const auto none = evaluate_policy(idle, env::TaskId::Push, config, 2, rng);
  EXPECT_EQ(none.successes, 0);
  EXPECT_FALSE(none.mean_steps.has_value());
}

}  // namespace
}  // namespace slrl::sac
