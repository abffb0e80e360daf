#include "slrl/replay.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace slrl::replay {

namespace {

constexpr std::string_view kPriorMagic = "SLRLPRI1";

template <typename Range>
bool finite_range(const Range& r) {
  return std::all_of(r.begin(), r.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

bool Transition::all_finite() const {
  return finite_range(obs) && finite_range(action) && std::isfinite(reward) && finite_range(next_obs);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  if (!t.all_finite()) throw ConfigError("rejected transition with non-finite fields");
  if (storage_.size() < capacity_) {
    storage_.push_back(t);
    ++count_;
    return;
  }
  storage_[cursor_] = t;
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= count_) throw std::out_of_range("replay index out of range");
  return storage_[(cursor_ + i) % storage_.size()];
}

std::vector<Transition> ReplayBuffer::snapshot() const {
  std::vector<Transition> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < count_; ++i) out.push_back(at(i));
  return out;
}

std::vector<Transition> sample_uniform(const ReplayBuffer& buffer, std::size_t n, Rng& rng) {
  if (buffer.empty()) throw ContractViolation("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, buffer.size() - 1);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(buffer.at(pick(rng)));
  return out;
}

embed::EmbeddingTable PriorDataset::embedding_table() const {
  return embed::EmbeddingTable::from_code_matrix(embedding_kind, embedding_codes);
}

void PriorDataset::validate() const {
  if (transitions.empty()) throw ConfigError("prior dataset has no transitions");
  if (critics.empty() || critics.size() > 2) throw ConfigError("prior dataset needs one or two critics");
  if (embedding_codes.rows() != kNumTasks || embedding_codes.cols() != kNumTasks) {
    throw ConfigError("prior embedding matrix must be 7x7");
  }
  if (!actor.params.matches(actor.spec) || !value.params.matches(value.spec)) {
    throw ConfigError("prior snapshot parameters do not match their specs");
  }
  for (const auto& c : critics) {
    if (!c.params.matches(c.spec)) throw ConfigError("prior critic parameters do not match spec");
  }
  if (actor.spec.input_dim != kEmbeddedObsDim || actor.spec.output_dim != 2 * kActionDim) {
    throw ConfigError("prior actor must map 46 -> 8");
  }
  for (const auto& c : critics) {
    if (c.spec.input_dim != kEmbeddedObsDim + kActionDim || c.spec.output_dim != 1) {
      throw ConfigError("prior critics must map 50 -> 1");
    }
  }
  if (value.spec.input_dim != kEmbeddedObsDim || value.spec.output_dim != 1) {
    throw ConfigError("prior value network must map 46 -> 1");
  }
}

bool PriorDataset::operator==(const PriorDataset& other) const {
  return transitions == other.transitions && embedding_kind == other.embedding_kind &&
         embedding_codes == other.embedding_codes && env_config == other.env_config &&
         std::bit_cast<std::uint64_t>(log_alpha) == std::bit_cast<std::uint64_t>(other.log_alpha) &&
         actor == other.actor && critics == other.critics && value == other.value && version == other.version;
}

TaskWeightedSampler::TaskWeightedSampler(std::span<const Transition> pool, env::TaskId target_task) {
  if (pool.empty()) throw ContractViolation("task-weighted sampling from an empty pool");
  for (std::size_t i = 0; i < pool.size(); ++i) {
    (pool[i].task == target_task ? matching_ : others_).push_back(i);
  }
  const double w_match = static_cast<double>(matching_.size());
  const double w_other = kOtherTaskWeight * static_cast<double>(others_.size());
  match_probability_ = w_match / (w_match + w_other);
}

std::size_t TaskWeightedSampler::sample_index(Rng& rng) const {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const auto& group = (others_.empty() || (!matching_.empty() && coin(rng) < match_probability_)) ? matching_ : others_;
  std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
  return group[pick(rng)];
}

std::vector<Transition> sample_task_weighted(const PriorDataset& prior, std::size_t n, env::TaskId target_task,
                                             Rng& rng) {
  TaskWeightedSampler sampler(prior.transitions, target_task);
  std::vector<Transition> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(prior.transitions[sampler.sample_index(rng)]);
  return out;
}

std::vector<std::uint8_t> serialize_prior(const PriorDataset& prior) {
  prior.validate();
  ByteWriter w;
  w.put_magic(kPriorMagic);
  w.put(prior.version);
  w.put(static_cast<std::uint64_t>(prior.transitions.size()));
  w.put(static_cast<std::uint32_t>(kEmbeddedObsDim));
  w.put(static_cast<std::uint32_t>(kActionDim));
  w.put(static_cast<std::uint8_t>(prior.embedding_kind));
  for (int r = 0; r < kNumTasks; ++r)
    for (int c = 0; c < kNumTasks; ++c) w.put(prior.embedding_codes(r, c));
  const auto& ec = prior.env_config;
  w.put(static_cast<std::int32_t>(ec.horizon));
  w.put(ec.novelty_radius);
  w.put(ec.max_step);
  w.put(ec.contact_radius);
  w.put(ec.success_threshold);
  w.put(ec.seed);
  w.put(prior.log_alpha);
  w.put(static_cast<std::uint8_t>(prior.critics.size()));
  for (const auto& t : prior.transitions) {
    w.put_doubles(t.obs.data(), t.obs.size());
    w.put_doubles(t.action.data(), t.action.size());
    w.put(t.reward);
    w.put_doubles(t.next_obs.data(), t.next_obs.size());
    w.put(static_cast<std::uint8_t>(t.done ? 1 : 0));
    w.put(static_cast<std::uint8_t>(t.task));
  }
  nn::write_network(w, prior.actor.spec, prior.actor.params);
  for (const auto& c : prior.critics) nn::write_network(w, c.spec, c.params);
  nn::write_network(w, prior.value.spec, prior.value.params);
  const std::uint32_t crc = crc32(w.bytes());
  w.put(crc);
  return w.take();
}

PriorDataset deserialize_prior(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kPriorMagic.size() + sizeof(std::uint32_t)) {
    throw FormatError("prior file too short (" + std::to_string(bytes.size()) + " bytes)");
  }
  ByteReader r(bytes);
  r.expect_magic(kPriorMagic);

  const auto body = bytes.first(bytes.size() - sizeof(std::uint32_t));
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, bytes.data() + body.size(), sizeof(stored_crc));
  if (crc32(body) != stored_crc) throw FormatError("prior file checksum mismatch");

  PriorDataset p;
  p.version = r.get<std::uint32_t>();
  if (p.version != kPriorFormatVersion) {
    throw FormatError("unsupported prior format version " + std::to_string(p.version));
  }
  const auto n = r.get<std::uint64_t>();
  const auto obs_dim = r.get<std::uint32_t>();
  const auto act_dim = r.get<std::uint32_t>();
  if (obs_dim != kEmbeddedObsDim || act_dim != kActionDim) {
    throw FormatError("prior dims " + std::to_string(obs_dim) + "/" + std::to_string(act_dim) + " unsupported");
  }
  const auto kind = r.get<std::uint8_t>();
  if (kind > 2) throw FormatError("unknown embedding kind code");
  p.embedding_kind = static_cast<embed::EmbeddingKind>(kind);
  p.embedding_codes.resize(kNumTasks, kNumTasks);
  for (int i = 0; i < kNumTasks; ++i)
    for (int j = 0; j < kNumTasks; ++j) p.embedding_codes(i, j) = r.get<double>();
  p.env_config.horizon = r.get<std::int32_t>();
  p.env_config.novelty_radius = r.get<double>();
  p.env_config.max_step = r.get<double>();
  p.env_config.contact_radius = r.get<double>();
  p.env_config.success_threshold = r.get<double>();
  p.env_config.seed = r.get<std::uint64_t>();
  p.log_alpha = r.get<double>();
  const auto critics = r.get<std::uint8_t>();
  if (critics < 1 || critics > 2) throw FormatError("prior critic count must be 1 or 2");

  constexpr std::size_t kRecordBytes = (2 * kEmbeddedObsDim + kActionDim + 1) * sizeof(double) + 2;
  if (n == 0 || n > r.remaining() / kRecordBytes) {
    throw FormatError("prior transition count " + std::to_string(n) + " inconsistent with file size");
  }
  p.transitions.resize(n);
  for (auto& t : p.transitions) {
    r.get_doubles(t.obs.data(), t.obs.size());
    r.get_doubles(t.action.data(), t.action.size());
    t.reward = r.get<double>();
    r.get_doubles(t.next_obs.data(), t.next_obs.size());
    t.done = r.get<std::uint8_t>() != 0;
    const auto task = r.get<std::uint8_t>();
    if (task >= kNumTasks) throw FormatError("transition task id out of range");
    t.task = static_cast<env::TaskId>(task);
  }
  {
    auto [spec, params] = nn::read_network(r);
    p.actor = {std::move(spec), std::move(params)};
  }
  for (int i = 0; i < critics; ++i) {
    auto [spec, params] = nn::read_network(r);
    p.critics.push_back({std::move(spec), std::move(params)});
  }
  {
    auto [spec, params] = nn::read_network(r);
    p.value = {std::move(spec), std::move(params)};
  }
  if (r.remaining() != sizeof(std::uint32_t)) throw FormatError("unexpected trailing bytes in prior file");
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("prior file fails validation: ") + e.what());
  }
  return p;
}

void save_prior(const PriorDataset& prior, const std::filesystem::path& path) {
  write_file(path, serialize_prior(prior));
}

PriorDataset load_prior(const std::filesystem::path& path) { return deserialize_prior(read_file(path)); }

}  // namespace slrl::replay
