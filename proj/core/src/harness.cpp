#include "slrl/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "slrl/binary_io.hpp"
#include "slrl/svg.hpp"
#include "slrl/text.hpp"

namespace slrl::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::string body = trim(text);
  if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(body);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (item.size() >= 2 && item.front() == '"' && item.back() == '"') item = item.substr(1, item.size() - 2);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("invalid value for " + key + ": '" + text + "'");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + text + "'");
}

std::vector<int> parse_widths(const std::string& key, const std::string& text) {
  std::vector<int> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<int>(key, item));
  return out;
}

std::string join_widths(const std::vector<int>& widths) {
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) out += (i ? "," : "") + std::to_string(widths[i]);
  return out;
}

std::string quote_text(const std::string& s) { return "\"" + s + "\""; }

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception is rethrown.
void run_parallel(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const auto threads = static_cast<std::size_t>(std::clamp<int>(workers, 1, static_cast<int>(std::max<std::size_t>(n, 1))));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Logger synchronized(const Logger& log) {
  if (!log) return [](const std::string&) {};
  auto mutex = std::make_shared<std::mutex>();
  return [log, mutex](const std::string& line) {
    std::lock_guard lock(*mutex);
    log(line);
  };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char c : label) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (profile != "desk" && profile != "ci" && profile != "full") throw ConfigError("unknown profile: " + profile);
  if (run_name.empty()) throw ConfigError("run_name must not be empty");
  if (tasks.empty()) throw ConfigError("tasks must not be empty");
  if (trials < 1) throw ConfigError("trials must be >= 1");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be >= 1");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  sac.validate();
  qwale.validate();
  env.validate();
}

ExperimentConfig profile_defaults(const std::string& profile) {
  ExperimentConfig c;
  c.profile = profile;
  if (profile == "desk") {
    return c;
  }
  if (profile == "ci") {
    c.sac.hidden_widths = {64, 64};
    c.qwale.disc_hidden_widths = {64, 64};
    return c;
  }
  if (profile == "full") {
    c.sac.episodes_per_task = 10'000;
    return c;
  }
  throw ConfigError("unknown profile: " + profile + " (expected desk, ci or full)");
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues values;
  std::string section;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    // Strip a trailing comment that is not inside quotes.
    bool in_quotes = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_quotes = !in_quotes;
      if (line[i] == '#' && !in_quotes) {
        line.resize(i);
        break;
      }
    }
    const std::string text = trim(line);
    if (text.empty()) continue;
    if (text.front() == '[' && text.back() == ']' && text.find('=') == std::string::npos) {
      section = trim(std::string_view(text).substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    std::string key = trim(std::string_view(text).substr(0, eq));
    std::string value = trim(std::string_view(text).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(number) + ": empty key");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (!section.empty()) key = section + "." + key;
    values[key] = value;
  }
  return values;
}

KeyValues parse_key_values_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_key_values(in);
}

void apply_key_values(ExperimentConfig& c, const KeyValues& values) {
  using Setter = std::function<void(const std::string&, const std::string&)>;
  auto dbl = [](double& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<double>(k, v); };
  };
  auto integer = [](int& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_number<int>(k, v); };
  };
  auto boolean = [](bool& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_bool(k, v); };
  };
  auto widths = [](std::vector<int>& field) -> Setter {
    return [&field](const std::string& k, const std::string& v) { field = parse_widths(k, v); };
  };

  const std::map<std::string, Setter> setters{
      {"profile", [&](const std::string&, const std::string& v) { c.profile = v; }},
      {"run_name", [&](const std::string&, const std::string& v) { c.run_name = v; }},
      {"seed", [&](const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"embedding", [&](const std::string&, const std::string& v) { c.embedding = embed::parse_kind(v); }},
      {"tasks",
       [&](const std::string&, const std::string& v) {
         c.tasks.clear();
         for (const auto& name : split_list(v)) c.tasks.push_back(env::parse_task(name));
       }},
      {"trials", integer(c.trials)},
      {"eval_episodes", integer(c.eval_episodes)},
      {"workers", integer(c.workers)},
      {"output_dir", [&](const std::string&, const std::string& v) { c.output_dir = v; }},

      {"sac.gamma", dbl(c.sac.gamma)},
      {"sac.critic_lr", dbl(c.sac.critic_lr)},
      {"sac.value_lr", dbl(c.sac.value_lr)},
      {"sac.actor_lr", dbl(c.sac.actor_lr)},
      {"sac.alpha_lr", dbl(c.sac.alpha_lr)},
      {"sac.reward_scale", dbl(c.sac.reward_scale)},
      {"sac.tau", dbl(c.sac.tau)},
      {"sac.batch_size", integer(c.sac.batch_size)},
      {"sac.target_entropy", dbl(c.sac.target_entropy)},
      {"sac.episodes_per_task", integer(c.sac.episodes_per_task)},
      {"sac.log_std_min", dbl(c.sac.log_std_min)},
      {"sac.log_std_max", dbl(c.sac.log_std_max)},
      {"sac.hidden_widths", widths(c.sac.hidden_widths)},
      {"sac.twin_critics", boolean(c.sac.twin_critics)},
      {"sac.warmup_steps_per_task", integer(c.sac.warmup_steps_per_task)},
      {"sac.replay_capacity",
       [&](const std::string& k, const std::string& v) { c.sac.replay_capacity = parse_number<std::size_t>(k, v); }},
      {"sac.initial_log_alpha", dbl(c.sac.initial_log_alpha)},
      {"sac.continue_after_success", boolean(c.sac.continue_after_success)},

      {"qwale.life_budget", integer(c.qwale.life_budget)},
      {"qwale.disc_update_period", integer(c.qwale.disc_update_period)},
      {"qwale.disc_positive_batch", integer(c.qwale.disc_positive_batch)},
      {"qwale.disc_negative_batch", integer(c.qwale.disc_negative_batch)},
      {"qwale.sac_updates_per_step", integer(c.qwale.sac_updates_per_step)},
      {"qwale.exponent_clip", dbl(c.qwale.exponent_clip)},
      {"qwale.novelty_radius", dbl(c.qwale.novelty_radius)},
      {"qwale.disc_lr", dbl(c.qwale.disc_lr)},
      {"qwale.disc_hidden_widths", widths(c.qwale.disc_hidden_widths)},
      {"qwale.clamp_epsilon", dbl(c.qwale.clamp_epsilon)},
      {"qwale.mask_everywhere", boolean(c.qwale.mask_everywhere)},
      {"qwale.learn_temperature", boolean(c.qwale.learn_temperature)},

      {"env.horizon", integer(c.env.horizon)},
      {"env.max_step", dbl(c.env.max_step)},
      {"env.contact_radius", dbl(c.env.contact_radius)},
      {"env.success_threshold", dbl(c.env.success_threshold)},
  };
  for (const auto& [key, value] : values) {
    const auto it = setters.find(key);
    if (it == setters.end()) throw ConfigError("unknown config key: " + key);
    it->second(key, value);
  }
}

std::string to_snapshot(const ExperimentConfig& c) {
  std::ostringstream o;
  auto line = [&o](const std::string& k, const std::string& v) { o << k << " = " << v << '\n'; };
  auto d = [](double v) { return format_double(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::string tasks;
  for (std::size_t i = 0; i < c.tasks.size(); ++i) tasks += (i ? "," : "") + std::string(env::task_name(c.tasks[i]));

  line("profile", quote_text(c.profile));
  line("run_name", quote_text(c.run_name));
  line("seed", std::to_string(c.seed));
  line("embedding", quote_text(std::string(embed::kind_name(c.embedding))));
  line("tasks", quote_text(tasks));
  line("trials", std::to_string(c.trials));
  line("eval_episodes", std::to_string(c.eval_episodes));
  line("workers", std::to_string(c.workers));
  line("output_dir", quote_text(c.output_dir.generic_string()));

  o << "\n[sac]\n";
  line("gamma", d(c.sac.gamma));
  line("critic_lr", d(c.sac.critic_lr));
  line("value_lr", d(c.sac.value_lr));
  line("actor_lr", d(c.sac.actor_lr));
  line("alpha_lr", d(c.sac.alpha_lr));
  line("reward_scale", d(c.sac.reward_scale));
  line("tau", d(c.sac.tau));
  line("batch_size", std::to_string(c.sac.batch_size));
  line("target_entropy", d(c.sac.target_entropy));
  line("episodes_per_task", std::to_string(c.sac.episodes_per_task));
  line("log_std_min", d(c.sac.log_std_min));
  line("log_std_max", d(c.sac.log_std_max));
  line("hidden_widths", quote_text(join_widths(c.sac.hidden_widths)));
  line("twin_critics", b(c.sac.twin_critics));
  line("warmup_steps_per_task", std::to_string(c.sac.warmup_steps_per_task));
  line("replay_capacity", std::to_string(c.sac.replay_capacity));
  line("initial_log_alpha", d(c.sac.initial_log_alpha));
  line("continue_after_success", b(c.sac.continue_after_success));

  o << "\n[qwale]\n";
  line("life_budget", std::to_string(c.qwale.life_budget));
  line("disc_update_period", std::to_string(c.qwale.disc_update_period));
  line("disc_positive_batch", std::to_string(c.qwale.disc_positive_batch));
  line("disc_negative_batch", std::to_string(c.qwale.disc_negative_batch));
  line("sac_updates_per_step", std::to_string(c.qwale.sac_updates_per_step));
  line("exponent_clip", d(c.qwale.exponent_clip));
  line("novelty_radius", d(c.qwale.novelty_radius));
  line("disc_lr", d(c.qwale.disc_lr));
  line("disc_hidden_widths", quote_text(join_widths(c.qwale.disc_hidden_widths)));
  line("clamp_epsilon", d(c.qwale.clamp_epsilon));
  line("mask_everywhere", b(c.qwale.mask_everywhere));
  line("learn_temperature", b(c.qwale.learn_temperature));

  o << "\n[env]\n";
  line("horizon", std::to_string(c.env.horizon));
  line("max_step", d(c.env.max_step));
  line("contact_radius", d(c.env.contact_radius));
  line("success_threshold", d(c.env.success_threshold));
  return o.str();
}

ExperimentConfig from_snapshot_text(const std::string& text) {
  std::istringstream in(text);
  const KeyValues values = parse_key_values(in);
  const auto it = values.find("profile");
  ExperimentConfig c = profile_defaults(it == values.end() ? "desk" : it->second);
  apply_key_values(c, values);
  return c;
}

std::uint64_t trial_seed(std::uint64_t run_seed, env::TaskId task, int trial) {
  // splitmix64 finalizer over a packed (seed, task, trial) word.
  std::uint64_t z = run_seed * 0x9E3779B97F4A7C15ULL + (static_cast<std::uint64_t>(env::task_index(task)) << 32) +
                    static_cast<std::uint64_t>(trial) + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Trial records and reports

std::string trial_to_json(const TrialRecord& r) {
  json j;
  j["condition"] = r.condition;
  j["task"] = std::string(env::task_name(r.task));
  j["trial"] = r.trial;
  j["seed"] = r.seed;
  j["novelty_offset"] = {r.novelty_offset[0], r.novelty_offset[1], r.novelty_offset[2]};
  j["goal_masked"] = r.goal_masked;
  j["success"] = r.success;
  j["steps"] = r.steps;
  j["budget"] = r.budget;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump(2) + "\n";
}

TrialRecord trial_from_json(const std::string& text) {
  TrialRecord r;
  try {
    const json j = json::parse(text);
    r.condition = j.at("condition").get<std::string>();
    r.task = env::parse_task(j.at("task").get<std::string>());
    r.trial = j.at("trial").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& off = j.at("novelty_offset");
    if (!off.is_array() || off.size() != 3) throw FormatError("novelty_offset must have 3 entries");
    for (std::size_t i = 0; i < 3; ++i) r.novelty_offset[i] = off.at(i).get<double>();
    r.goal_masked = j.at("goal_masked").get<bool>();
    r.success = j.at("success").get<bool>();
    r.steps = j.at("steps").get<int>();
    r.budget = j.at("budget").get<int>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed trial record: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("malformed trial record: ") + e.what());
  }
  if (r.condition.empty()) throw FormatError("malformed trial record: empty condition");
  if (r.steps < 0 || r.trial < 0) throw FormatError("malformed trial record: negative count");
  return r;
}

std::vector<std::string> ReportTable::conditions() const {
  std::vector<std::string> out;
  for (const auto& row : rows)
    if (std::find(out.begin(), out.end(), row.condition) == out.end()) out.push_back(row.condition);
  return out;
}

const ReportRow* ReportTable::find(const std::string& condition, env::TaskId task) const {
  for (const auto& row : rows)
    if (row.condition == condition && row.task == task) return &row;
  return nullptr;
}

std::string ReportTable::to_csv() const {
  std::string out = "condition,task,trials,successes,success_rate,mean_steps\n";
  for (const auto& r : rows) {
    out += r.condition + "," + std::string(env::task_name(r.task)) + "," + std::to_string(r.trials) + "," +
           std::to_string(r.successes) + "," + format_fixed(r.success_rate, 6) + "," +
           (r.mean_steps ? format_fixed(*r.mean_steps, 6) : std::string()) + "\n";
  }
  return out;
}

ReportRow make_row(std::string condition, env::TaskId task, int trials, int successes,
                   std::optional<double> mean_steps) {
  ReportRow row;
  row.condition = std::move(condition);
  row.task = task;
  row.trials = trials;
  row.successes = successes;
  row.success_rate = trials > 0 ? static_cast<double>(successes) / trials : 0.0;
  row.mean_steps = successes > 0 ? mean_steps : std::nullopt;
  return row;
}

ReportTable aggregate(std::vector<TrialRecord> records) {
  std::sort(records.begin(), records.end(), [](const TrialRecord& a, const TrialRecord& b) {
    return std::tie(a.condition, a.task, a.trial, a.seed) < std::tie(b.condition, b.task, b.trial, b.seed);
  });
  ReportTable table;
  std::size_t i = 0;
  while (i < records.size()) {
    std::size_t j = i;
    int successes = 0;
    long long step_sum = 0;
    while (j < records.size() && records[j].condition == records[i].condition && records[j].task == records[i].task) {
      if (records[j].success) {
        ++successes;
        step_sum += records[j].steps;
      }
      ++j;
    }
    const int n = static_cast<int>(j - i);
    std::optional<double> mean;
    if (successes > 0) mean = static_cast<double>(step_sum) / successes;
    table.rows.push_back(make_row(records[i].condition, records[i].task, n, successes, mean));
    i = j;
  }
  return table;
}

std::vector<fs::path> write_report_charts(const ReportTable& table, const fs::path& out_dir) {
  std::vector<fs::path> written;
  for (const auto& condition : table.conditions()) {
    std::vector<std::string> categories;
    svg::BarSeries rate{condition, {}};
    svg::BarSeries steps{condition, {}};
    for (const auto& row : table.rows) {
      if (row.condition != condition) continue;
      categories.emplace_back(env::task_name(row.task));
      rate.values.push_back(row.success_rate);
      steps.values.push_back(row.mean_steps.value_or(std::nan("")));
    }
    const std::string stem = sanitize(condition);
    const fs::path rate_path = out_dir / ("success_rate_" + stem + ".svg");
    const fs::path steps_path = out_dir / ("mean_steps_" + stem + ".svg");
    write_text(rate_path, svg::bar_chart("Success rate: " + condition, "success rate", categories, {rate}, 1.0));
    write_text(steps_path,
               svg::bar_chart("Mean steps to success: " + condition, "steps", categories, {steps}, 0.0));
    written.push_back(rate_path);
    written.push_back(steps_path);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Commands

PriorRun train_prior(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  Rng rng(config.seed);
  sac::SacAgent agent = sac::SacAgent::create(config.sac, config.embedding, rng);
  env::EnvConfig source = config.env;
  source.novelty_radius = 0.0;
  source.seed = config.seed;
  const int report_every = std::max<int>(1, static_cast<int>(config.tasks.size()) * 10);
  // Window summary: success count per task and mean return since the last line.
  std::map<env::TaskId, int> window_successes;
  double window_return = 0.0;
  auto outcome = sac::train_mtsac(config.tasks, agent, config.sac, source, rng, [&](const sac::EpisodeLog& e) {
    if (!log) return;
    window_successes[e.task] += e.success ? 1 : 0;
    window_return += e.episode_return;
    if ((e.episode + 1) % report_every != 0) return;
    std::string per_task;
    for (const auto& [task, n] : window_successes) per_task += " " + std::string(env::task_name(task)) + "=" + std::to_string(n);
    log("[" + std::string(embed::kind_name(config.embedding)) + "] episode " + std::to_string(e.episode + 1) +
        " mean return " + format_fixed(window_return / report_every, 1) + " alpha " + format_fixed(e.alpha, 4) +
        " successes" + per_task);
    window_successes.clear();
    window_return = 0.0;
  });
  PriorRun run{sac::make_prior(agent, outcome.buffer, source), std::move(outcome.log)};
  return run;
}

namespace {

ReportTable evaluate_prior(const replay::PriorDataset& prior, const ExperimentConfig& config,
                           const std::string& condition, std::span<const env::TaskId> tasks) {
  sac::SacAgent agent;
  agent.actor = sac::Network::from_snapshot(prior.actor, 0.0);
  agent.embedding = prior.embedding_table();
  env::EnvConfig source = prior.env_config;
  source.novelty_radius = 0.0;
  ReportTable table;
  for (env::TaskId task : tasks) {
    Rng rng(trial_seed(config.seed, task, -1));
    const auto result = sac::evaluate(agent, task, source, config.eval_episodes, false, rng);
    table.rows.push_back(make_row(condition, task, result.episodes, result.successes, result.mean_steps));
  }
  return table;
}

void write_training_outputs(const PriorRun& run, const fs::path& dir) {
  replay::save_prior(run.prior, dir / "prior.bin");
  std::ofstream curve(dir / "training_log.csv", std::ios::binary);
  if (!curve) throw std::runtime_error("cannot write " + (dir / "training_log.csv").string());
  sac::write_training_log_csv(curve, run.log);
}

}  // namespace

void cmd_train_prior(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.snapshot", to_snapshot(config));
  const PriorRun run = train_prior(config, log);
  write_training_outputs(run, dir);
  const ReportTable eval = evaluate_prior(run.prior, config, kConditionFrozen, config.tasks);
  write_text(dir / "prior_eval.csv", eval.to_csv());
  if (log) log("wrote " + (dir / "prior.bin").string());
}

ReportTable cmd_compare_embeddings(const ExperimentConfig& config, const Logger& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  write_text(dir / "config.snapshot", to_snapshot(config));
  const Logger out = synchronized(log);

  constexpr std::array kinds{embed::EmbeddingKind::OneHot, embed::EmbeddingKind::Sine, embed::EmbeddingKind::Learned};
  std::array<ReportTable, kinds.size()> tables;
  run_parallel(kinds.size(), config.workers, [&](std::size_t k) {
    ExperimentConfig sub = config;
    sub.embedding = kinds[k];
    sub.output_dir = dir / "embeddings" / std::string(embed::kind_name(kinds[k]));
    fs::create_directories(sub.output_dir);
    const PriorRun run = train_prior(sub, out);
    write_training_outputs(run, sub.output_dir);
    tables[k] = evaluate_prior(run.prior, sub, "MT-SAC/" + std::string(embed::kind_name(kinds[k])), env::kAllTasks);
  });

  ReportTable combined;
  std::vector<svg::BarSeries> series;
  std::vector<std::string> categories;
  for (env::TaskId t : env::kAllTasks) categories.emplace_back(env::task_name(t));
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    svg::BarSeries s{std::string(embed::kind_name(kinds[k])), {}};
    for (const auto& row : tables[k].rows) {
      combined.rows.push_back(row);
      s.values.push_back(row.success_rate);
    }
    series.push_back(std::move(s));
  }
  write_text(dir / "embeddings.csv", combined.to_csv());
  write_text(dir / "embeddings.svg",
             svg::bar_chart("Greedy success rate by task embedding", "success rate", categories, series, 1.0));
  return combined;
}

namespace {

struct ArmOutput {
  TrialRecord record;
  std::vector<env::Vec3> ee_path;
  env::Vec3 goal{};
};

constexpr std::size_t kMaxPlotPoints = 2000;

ArmOutput finish_arm(const qwale::SingleLifeResult& result, const std::string& condition, int trial, int budget,
                     const fs::path& dir, bool keep_path) {
  ArmOutput arm;
  auto& r = arm.record;
  r.condition = condition;
  r.task = result.task;
  r.trial = trial;
  r.seed = result.seed;
  r.novelty_offset = result.novelty_offset;
  r.goal_masked = result.goal_masked;
  r.success = result.success;
  r.steps = result.steps_to_completion;
  r.budget = budget;
  r.wall_seconds = result.wall_seconds;

  const std::string stem = sanitize(condition) + "_" + std::string(env::task_name(result.task)) + "_" +
                           std::to_string(trial);
  write_text(dir / "trials" / (stem + ".json"), trial_to_json(r));
  {
    std::ofstream csv(dir / "trajectories" / (stem + ".csv"), std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write trajectory for " + stem);
    env::write_trajectory_csv(csv, result.trajectory);
  }
  if (keep_path && !result.trajectory.empty()) {
    const std::size_t n = result.trajectory.size();
    const std::size_t stride = std::max<std::size_t>(1, n / kMaxPlotPoints);
    for (std::size_t i = 0; i < n; i += stride) {
      const auto& o = result.trajectory[i].observation;
      arm.ee_path.push_back({o[0], o[1], o[2]});
    }
    const auto& last = result.trajectory.back().observation;
    arm.ee_path.push_back({last[0], last[1], last[2]});
    arm.goal = {last[kGoalOffset], last[kGoalOffset + 1], last[kGoalOffset + 2]};
  }
  return arm;
}

std::string trajectory_overlay(env::TaskId task, const std::vector<std::pair<std::string, const ArmOutput*>>& arms) {
  // Project onto the two axes along which the plotted paths spread the most.
  std::array<double, 3> lo{1e9, 1e9, 1e9}, hi{-1e9, -1e9, -1e9};
  for (const auto& [name, arm] : arms) {
    for (const auto& p : arm->ee_path)
      for (int a = 0; a < 3; ++a) lo[a] = std::min(lo[a], p[a]), hi[a] = std::max(hi[a], p[a]);
  }
  std::array<int, 3> axes{0, 1, 2};
  std::sort(axes.begin(), axes.end(), [&](int a, int b) { return hi[a] - lo[a] > hi[b] - lo[b] || (hi[a] - lo[a] == hi[b] - lo[b] && a < b); });
  int ax = std::min(axes[0], axes[1]);
  int ay = std::max(axes[0], axes[1]);
  constexpr std::array<const char*, 3> names{"x", "y", "z"};

  std::vector<svg::Polyline> lines;
  std::vector<svg::Marker> markers;
  for (const auto& [name, arm] : arms) {
    svg::Polyline line{name, {}};
    for (const auto& p : arm->ee_path) line.points.push_back({p[ax], p[ay]});
    lines.push_back(std::move(line));
  }
  if (!arms.empty() && !arms.front().second->ee_path.empty()) {
    const auto& first = arms.front().second;
    markers.push_back({"start", {first->ee_path.front()[ax], first->ee_path.front()[ay]}});
    markers.push_back({"goal", {first->goal[ax], first->goal[ay]}});
  }
  return svg::line_plot("End-effector trajectory: " + std::string(env::task_name(task)), names[ax], names[ay], lines,
                        markers);
}

}  // namespace

ReportTable cmd_single_life(const ExperimentConfig& config, const fs::path& prior_path, bool masked,
                            const Logger& log) {
  config.validate();
  const replay::PriorDataset prior = replay::load_prior(prior_path);
  const fs::path dir = config.output_dir;
  fs::create_directories(dir / "trials");
  fs::create_directories(dir / "trajectories");
  write_text(dir / "config.snapshot", to_snapshot(config));
  const Logger out = synchronized(log);
  const std::string qwale_label = masked ? kConditionQwaleMasked : kConditionQwale;

  struct Job {
    env::TaskId task;
    int trial;
    bool adaptive;
  };
  std::vector<Job> jobs;
  for (env::TaskId task : config.tasks)
    for (int trial = 0; trial < config.trials; ++trial) {
      jobs.push_back({task, trial, true});
      jobs.push_back({task, trial, false});
    }
  std::vector<ArmOutput> outputs(jobs.size());

  run_parallel(jobs.size(), config.workers, [&](std::size_t i) {
    const Job& job = jobs[i];
    const std::uint64_t seed = trial_seed(config.seed, job.task, job.trial);
    const bool keep_path = job.trial == 0;
    if (job.adaptive) {
      const auto result =
          qwale::single_life(job.task, prior, config.qwale, config.sac, prior.env_config, masked, seed);
      outputs[i] = finish_arm(result, qwale_label, job.trial, config.qwale.life_budget, dir, keep_path);
    } else {
      // The comparison arm always sees the full observation.
      const auto result = qwale::frozen_single_life(job.task, prior, config.qwale, prior.env_config, false, seed);
      outputs[i] = finish_arm(result, kConditionFrozen, job.trial, config.qwale.life_budget, dir, keep_path);
    }
    const auto& r = outputs[i].record;
    out(r.condition + " " + std::string(env::task_name(r.task)) + " trial " + std::to_string(r.trial) +
        (r.success ? " success after " + std::to_string(r.steps) + " steps" : " failed") + " (" +
        format_fixed(r.wall_seconds, 1) + " s)");
  });

  std::vector<TrialRecord> records;
  for (const auto& o : outputs) records.push_back(o.record);
  const ReportTable table = aggregate(std::move(records));
  write_text(dir / "report.csv", table.to_csv());
  write_report_charts(table, dir);

  for (std::size_t i = 0; i + 1 < jobs.size(); i += 2) {
    if (jobs[i].trial != 0) continue;
    const std::vector<std::pair<std::string, const ArmOutput*>> arms{{qwale_label, &outputs[i]},
                                                                      {kConditionFrozen, &outputs[i + 1]}};
    write_text(dir / ("trajectories_" + std::string(env::task_name(jobs[i].task)) + ".svg"),
               trajectory_overlay(jobs[i].task, arms));
  }
  return table;
}

std::vector<TrialRecord> load_trials(const fs::path& run_dir) {
  const fs::path trials = run_dir / "trials";
  if (!fs::is_directory(trials)) throw FormatError("no trials directory in " + run_dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(trials))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no trial records in " + trials.string());
  std::vector<TrialRecord> records;
  for (const auto& f : files) {
    const auto bytes = read_file(f);
    try {
      records.push_back(trial_from_json(std::string(bytes.begin(), bytes.end())));
    } catch (const FormatError& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
  }
  return records;
}

ReportOutcome cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir, const Logger& log) {
  if (run_dirs.empty()) throw std::runtime_error("report needs at least one run directory");
  ReportOutcome outcome;
  std::vector<TrialRecord> records;
  for (const auto& d : run_dirs) {
    try {
      auto loaded = load_trials(d);
      records.insert(records.end(), loaded.begin(), loaded.end());
    } catch (const std::exception& e) {
      outcome.skipped.push_back(d);
      if (log) log("warning: skipping " + d.string() + ": " + e.what());
    }
  }
  if (records.empty()) throw std::runtime_error("no usable run directories");
  outcome.table = aggregate(std::move(records));
  fs::create_directories(out_dir);
  write_text(out_dir / "report.csv", outcome.table.to_csv());
  write_report_charts(outcome.table, out_dir);
  return outcome;
}

}  // namespace slrl::harness
