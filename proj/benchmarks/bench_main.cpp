#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "slrl/diffnet.hpp"
#include "slrl/envsuite.hpp"
#include "slrl/mtsac.hpp"

namespace {

using namespace slrl;

nn::NetworkSpec spec_of(int width) {
  nn::NetworkSpec spec;
  spec.input_dim = kEmbeddedObsDim + kActionDim;
  spec.hidden_widths = {width, width};
  spec.output_dim = 1;
  return spec;
}

Eigen::MatrixXd random_batch(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

void BM_Forward(benchmark::State& state) {
  Rng rng(1);
  const auto spec = spec_of(static_cast<int>(state.range(0)));
  const auto params = nn::ParameterSet::initialize(spec, rng);
  const Eigen::MatrixXd input = random_batch(spec.input_dim, 256, rng);
  for (auto _ : state) benchmark::DoNotOptimize(nn::predict(spec, params, input));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  Rng rng(2);
  const auto spec = spec_of(static_cast<int>(state.range(0)));
  const auto params = nn::ParameterSet::initialize(spec, rng);
  const Eigen::MatrixXd input = random_batch(spec.input_dim, 256, rng);
  const Eigen::MatrixXd upstream = Eigen::MatrixXd::Ones(1, 256);
  for (auto _ : state) {
    const auto fwd = nn::forward(spec, params, input);
    benchmark::DoNotOptimize(nn::backward(spec, params, fwd.cache, upstream));
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(64)->Arg(256);

void BM_SacUpdate(benchmark::State& state) {
  Rng rng(3);
  sac::SacConfig config;
  config.hidden_widths = {static_cast<int>(state.range(0)), static_cast<int>(state.range(0))};
  auto agent = sac::SacAgent::create(config, embed::EmbeddingKind::Sine, rng);
  std::vector<replay::Transition> transitions(static_cast<std::size_t>(config.batch_size));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& t : transitions) {
    for (auto& v : t.obs) v = u(rng);
    for (auto& v : t.next_obs) v = u(rng);
    for (auto& v : t.action) v = u(rng);
    t.reward = u(rng);
  }
  const auto batch = sac::TransitionBatch::from(transitions);
  for (auto _ : state) benchmark::DoNotOptimize(sac::update(agent, batch, config, rng));
}
BENCHMARK(BM_SacUpdate)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_EnvStep(benchmark::State& state) {
  Rng rng(4);
  const env::EnvConfig config;
  auto episode = env::reset(env::TaskId::PickPlace, config, rng);
  for (auto _ : state) {
    if (episode.state.done) episode = env::reset(env::TaskId::PickPlace, config, rng);
    benchmark::DoNotOptimize(env::step(episode.state, env::scripted_action(episode.state, config), config));
  }
}
BENCHMARK(BM_EnvStep);

}  // namespace

BENCHMARK_MAIN();
