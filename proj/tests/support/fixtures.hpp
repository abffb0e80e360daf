#pragma once

#include <cmath>
#include <random>

#include "slrl/mtsac.hpp"
#include "slrl/replay.hpp"

namespace slrl::testing {

inline replay::Transition random_transition(std::mt19937_64& g, env::TaskId task) {
  std::normal_distribution<double> n(0.0, 1.0);
  replay::Transition t;
  for (double& v : t.obs) v = n(g);
  for (double& v : t.next_obs) v = n(g);
  for (double& v : t.action) v = std::tanh(n(g));
  t.reward = n(g);
  t.done = n(g) > 1.0;
  t.task = task;
  return t;
}

inline env::TaskId random_task(std::mt19937_64& g) {
  return env::task_from_index(std::uniform_int_distribution<int>(0, kNumTasks - 1)(g));
}

inline sac::SacConfig tiny_sac_config(int width = 8) {
  sac::SacConfig c;
  c.hidden_widths = {width, width};
  c.batch_size = 16;
  return c;
}

/// Prior with `n` random transitions spread over all tasks and freshly initialized width-8 networks.
inline replay::PriorDataset random_prior(std::size_t n, std::uint64_t seed,
                                         embed::EmbeddingKind kind = embed::EmbeddingKind::Sine) {
  Rng rng(seed);
  std::mt19937_64 g(seed + 1);
  auto agent = sac::SacAgent::create(tiny_sac_config(), kind, rng);
  agent.log_alpha = -0.25;
  replay::ReplayBuffer buffer(n);
  for (std::size_t i = 0; i < n; ++i) buffer.push(random_transition(g, env::task_from_index(static_cast<int>(i % kNumTasks))));
  env::EnvConfig source;
  source.novelty_radius = 0.0;
  return sac::make_prior(agent, buffer, source);
}

}  // namespace slrl::testing
