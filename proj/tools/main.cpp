#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "slrl/binary_io.hpp"
#include "slrl/harness.hpp"

namespace {

namespace fs = std::filesystem;
using namespace slrl;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct GlobalFlags {
  std::optional<fs::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out;
  std::optional<int> workers;
  std::optional<std::string> profile;
};

harness::ExperimentConfig resolve_config(const GlobalFlags& flags) {
  harness::KeyValues values;
  if (flags.config) values = harness::parse_key_values_file(*flags.config);
  std::string profile = "desk";
  if (auto it = values.find("profile"); it != values.end()) profile = it->second;
  if (flags.profile) profile = *flags.profile;

  harness::ExperimentConfig config = harness::profile_defaults(profile);
  harness::apply_key_values(config, values);
  config.profile = profile;
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out) config.output_dir = *flags.out;
  if (flags.workers) config.workers = *flags.workers;
  config.validate();
  return config;
}

void log_line(const std::string& line) { std::cerr << line << '\n'; }

void print_table(const harness::ReportTable& table) { std::cout << table.to_csv(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-life reinforcement learning experiments: multi-task SAC priors and Q-weighted adaptation"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags flags;
  app.add_option("--config", flags.config, "TOML-style key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", flags.seed, "Run seed");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--workers", flags.workers, "Parallel workers")->check(CLI::PositiveNumber);
  app.add_option("--profile", flags.profile, "Preset scale")->check(CLI::IsMember({"desk", "ci", "full"}));

  auto* train = app.add_subcommand("train-prior", "Train the multi-task SAC prior and save prior.bin");
  auto* compare = app.add_subcommand("compare-embeddings", "Train one prior per task embedding and compare");
  auto* single = app.add_subcommand("single-life", "Paired single-life trials: adaptive agent vs frozen prior");
  bool masked = false;
  std::optional<fs::path> prior_path;
  single->add_flag("--masked", masked, "Zero the goal coordinates seen by the policy");
  single->add_option("--prior", prior_path, "Prior file (default: <out>/prior.bin)");
  auto* report = app.add_subcommand("report", "Aggregate trial records from run directories");
  std::vector<fs::path> run_dirs;
  report->add_option("dirs", run_dirs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  harness::ExperimentConfig config;
  try {
    config = resolve_config(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train) {
      harness::cmd_train_prior(config, log_line);
    } else if (*compare) {
      print_table(harness::cmd_compare_embeddings(config, log_line));
    } else if (*single) {
      const fs::path path = prior_path.value_or(config.output_dir / "prior.bin");
      if (!fs::exists(path)) {
        std::cerr << "error: prior file not found: " << path << '\n';
        return kExitRuntime;
      }
      print_table(harness::cmd_single_life(config, path, masked, log_line));
    } else if (*report) {
      const auto outcome = harness::cmd_report(run_dirs, config.output_dir, log_line);
      print_table(outcome.table);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
