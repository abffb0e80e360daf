#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "slrl/binary_io.hpp"
#include "slrl/harness.hpp"

namespace slrl::harness {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("slrl_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  const auto bytes = read_file(p);
  return {bytes.begin(), bytes.end()};
}

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig c = profile_defaults("ci");
  c.sac.hidden_widths = {8, 8};
  c.qwale.disc_hidden_widths = {8, 8};
  c.sac.episodes_per_task = 1;
  c.sac.warmup_steps_per_task = 20;
  c.sac.batch_size = 8;
  c.env.horizon = 25;
  c.qwale.life_budget = 20;
  c.qwale.disc_positive_batch = 8;
  c.qwale.disc_negative_batch = 8;
  c.tasks = {env::TaskId::ButtonPress, env::TaskId::Push};
  c.trials = 2;
  c.eval_episodes = 1;
  c.output_dir = out;
  return c;
}

TEST(Config, ProfilesDifferOnlyWhereDocumented) {
  EXPECT_EQ(profile_defaults("desk").sac.hidden_widths, (std::vector<int>{256, 256}));
  EXPECT_EQ(profile_defaults("desk").sac.episodes_per_task, 300);
  EXPECT_EQ(profile_defaults("ci").sac.hidden_widths, (std::vector<int>{64, 64}));
  EXPECT_EQ(profile_defaults("full").sac.episodes_per_task, 10'000);
  EXPECT_EQ(profile_defaults("desk").trials, 10);
  EXPECT_DOUBLE_EQ(profile_defaults("desk").qwale.novelty_radius, 0.3);
  EXPECT_THROW(profile_defaults("huge"), ConfigError);
}

TEST(Config, ParsesSectionsCommentsAndQuotes) {
  std::istringstream in(R"(# experiment
run_name = "demo # not a comment"
seed = 42   # trailing comment
embedding = "learned"
tasks = ["Push", "DrawerOpen"]

[sac]
hidden_widths = "32, 16"
twin_critics = false
[qwale]
life_budget = 500
)");
  const KeyValues kv = parse_key_values(in);
  EXPECT_EQ(kv.at("run_name"), "demo # not a comment");
  EXPECT_EQ(kv.at("sac.twin_critics"), "false");
  ExperimentConfig c = profile_defaults("desk");
  apply_key_values(c, kv);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.embedding, embed::EmbeddingKind::Learned);
  EXPECT_EQ(c.tasks, (std::vector<env::TaskId>{env::TaskId::Push, env::TaskId::DrawerOpen}));
  EXPECT_EQ(c.sac.hidden_widths, (std::vector<int>{32, 16}));
  EXPECT_FALSE(c.sac.twin_critics);
  EXPECT_EQ(c.qwale.life_budget, 500);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  ExperimentConfig c;
  EXPECT_THROW(apply_key_values(c, {{"sac.gama", "0.9"}}), ConfigError);
  EXPECT_THROW(apply_key_values(c, {{"seed", "abc"}}), ConfigError);
  EXPECT_THROW(apply_key_values(c, {{"sac.twin_critics", "maybe"}}), ConfigError);
  EXPECT_THROW(apply_key_values(c, {{"tasks", "Push,Fly"}}), ConfigError);
  std::istringstream bad("just words\n");
  EXPECT_THROW(parse_key_values(bad), ConfigError);
}

TEST(Config, SnapshotRoundTripsEveryField) {
  ExperimentConfig c = profile_defaults("ci");
  c.seed = 123456789012345ULL;
  c.embedding = embed::EmbeddingKind::OneHot;
  c.sac.gamma = 0.987654321;
  c.sac.replay_capacity = 4242;
  c.qwale.exponent_clip = 7.5;
  c.qwale.mask_everywhere = true;
  c.env.contact_radius = 0.0625;
  c.tasks = {env::TaskId::WindowClose};
  const std::string text = to_snapshot(c);
  const ExperimentConfig back = from_snapshot_text(text);
  EXPECT_EQ(to_snapshot(back), text);
  EXPECT_EQ(back.sac.gamma, c.sac.gamma);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.tasks, c.tasks);
  EXPECT_TRUE(back.qwale.mask_everywhere);
}

TEST(Seeds, DistinctPerCellAndStable) {
  std::set<std::uint64_t> seen;
  for (env::TaskId t : env::kAllTasks)
    for (int i = 0; i < 10; ++i) seen.insert(trial_seed(0, t, i));
  EXPECT_EQ(seen.size(), 70u);
  EXPECT_EQ(trial_seed(5, env::TaskId::Push, 3), trial_seed(5, env::TaskId::Push, 3));
  EXPECT_NE(trial_seed(5, env::TaskId::Push, 3), trial_seed(6, env::TaskId::Push, 3));
}

TrialRecord record(const std::string& condition, env::TaskId task, int trial, bool success, int steps) {
  TrialRecord r;
  r.condition = condition;
  r.task = task;
  r.trial = trial;
  r.seed = trial_seed(0, task, trial);
  r.success = success;
  r.steps = steps;
  r.budget = 10'000;
  r.novelty_offset = {0.1, -0.2, 0.05};
  return r;
}

TEST(Records, JsonRoundTrip) {
  TrialRecord r = record(kConditionQwaleMasked, env::TaskId::DrawerClose, 4, true, 321);
  r.goal_masked = true;
  r.wall_seconds = 1.25;
  r.seed = 0xFFFFFFFFFFFFFFFFULL;
  const TrialRecord back = trial_from_json(trial_to_json(r));
  EXPECT_EQ(back.condition, r.condition);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.novelty_offset, r.novelty_offset);
  EXPECT_EQ(back.steps, 321);
  EXPECT_TRUE(back.goal_masked);
  EXPECT_THROW(trial_from_json("{\"condition\": \"MT-SAC\"}"), FormatError);
  EXPECT_THROW(trial_from_json("not json"), FormatError);
}

TEST(Report, AggregationIsOrderIndependent) {
  std::vector<TrialRecord> rs{record(kConditionQwale, env::TaskId::Push, 0, true, 100),
                              record(kConditionQwale, env::TaskId::Push, 1, false, 10'000),
                              record(kConditionQwale, env::TaskId::Push, 2, true, 300),
                              record(kConditionFrozen, env::TaskId::Push, 0, false, 10'000)};
  const ReportTable a = aggregate(rs);
  std::reverse(rs.begin(), rs.end());
  EXPECT_EQ(aggregate(rs).to_csv(), a.to_csv());
  const ReportRow* row = a.find(kConditionQwale, env::TaskId::Push);
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->trials, 3);
  EXPECT_NEAR(row->success_rate, 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(*row->mean_steps, 200.0);
  EXPECT_FALSE(a.find(kConditionFrozen, env::TaskId::Push)->mean_steps.has_value());
}

TEST(Report, MergingARunWithItselfKeepsValues) {
  std::vector<TrialRecord> rs{record(kConditionQwale, env::TaskId::Push, 0, true, 100),
                              record(kConditionQwale, env::TaskId::Push, 1, false, 50)};
  const ReportTable once = aggregate(rs);
  auto twice = rs;
  twice.insert(twice.end(), rs.begin(), rs.end());
  const ReportTable doubled = aggregate(twice);
  EXPECT_EQ(doubled.rows[0].success_rate, once.rows[0].success_rate);
  EXPECT_EQ(doubled.rows[0].mean_steps, once.rows[0].mean_steps);
}

void write_run(const fs::path& dir, const std::vector<TrialRecord>& rs) {
  fs::create_directories(dir / "trials");
  for (const auto& r : rs) {
    std::ofstream(dir / "trials" / (r.condition + "_" + std::string(env::task_name(r.task)) + "_" +
                                    std::to_string(r.trial) + ".json"))
        << trial_to_json(r);
  }
}

TEST(Report, CommandSkipsMalformedAndChartsSevenBars) {
  const fs::path root = scratch_dir("report");
  std::vector<TrialRecord> rs;
  for (env::TaskId t : env::kAllTasks) rs.push_back(record(kConditionQwale, t, 0, true, 10 + env::task_index(t)));
  write_run(root / "good", rs);
  fs::create_directories(root / "broken" / "trials");
  std::ofstream(root / "broken" / "trials" / "x.json") << "{";

  std::vector<std::string> warnings;
  const auto out = cmd_report({root / "good", root / "broken", root / "missing"}, root / "out",
                              [&](const std::string& w) { warnings.push_back(w); });
  EXPECT_EQ(out.skipped.size(), 2u);
  EXPECT_EQ(warnings.size(), 2u);
  EXPECT_EQ(out.table.rows.size(), 7u);
  const std::string chart = slurp(root / "out" / "success_rate_MT-QWALE.svg");
  std::size_t bars = 0;
  for (std::size_t p = chart.find("class=\"bar\""); p != std::string::npos; p = chart.find("class=\"bar\"", p + 1)) ++bars;
  EXPECT_EQ(bars, 7u);
  EXPECT_TRUE(fs::exists(root / "out" / "mean_steps_MT-QWALE.svg"));
  EXPECT_TRUE(fs::exists(root / "out" / "report.csv"));

  EXPECT_THROW(cmd_report({root / "broken"}, root / "out2"), std::runtime_error);
  EXPECT_THROW(cmd_report({}, root / "out3"), std::runtime_error);
}

TEST(Commands, TrainPriorIsDeterministicAndRecordsEmbedding) {
  const fs::path root = scratch_dir("train");
  ExperimentConfig c = tiny_config(root / "a");
  cmd_train_prior(c);
  c.output_dir = root / "b";
  cmd_train_prior(c);
  EXPECT_EQ(read_file(root / "a" / "prior.bin"), read_file(root / "b" / "prior.bin"));
  EXPECT_EQ(replay::load_prior(root / "a" / "prior.bin").embedding_kind, embed::EmbeddingKind::Sine);
  EXPECT_TRUE(fs::exists(root / "a" / "training_log.csv"));
  EXPECT_TRUE(fs::exists(root / "a" / "config.snapshot"));
  const ExperimentConfig reloaded = from_snapshot_text(slurp(root / "a" / "config.snapshot"));
  EXPECT_EQ(reloaded.sac.hidden_widths, c.sac.hidden_widths);
}

TEST(Commands, CompareEmbeddingsHasThreeBlocksOfSevenRows) {
  const fs::path root = scratch_dir("compare");
  ExperimentConfig c = tiny_config(root);
  c.tasks = {env::TaskId::Push};
  const ReportTable table = cmd_compare_embeddings(c);
  EXPECT_EQ(table.conditions().size(), 3u);
  EXPECT_EQ(table.rows.size(), 21u);
  for (const auto& r : table.rows) {
    EXPECT_GE(r.success_rate, 0.0);
    EXPECT_LE(r.success_rate, 1.0);
  }
  EXPECT_TRUE(fs::exists(root / "embeddings.svg"));
  EXPECT_TRUE(fs::exists(root / "embeddings" / "learned" / "prior.bin"));
}

TEST(Commands, SingleLifePairsArmsAndIsDeterministic) {
  const fs::path root = scratch_dir("single");
  ExperimentConfig c = tiny_config(root / "prior");
  cmd_train_prior(c);
  const fs::path prior = root / "prior" / "prior.bin";

  c.output_dir = root / "run1";
  const ReportTable t1 = cmd_single_life(c, prior, false);
  c.output_dir = root / "run2";
  c.workers = 3;
  cmd_single_life(c, prior, false);
  c.output_dir = root / "masked";
  c.workers = 1;
  const ReportTable tm = cmd_single_life(c, prior, true);

  EXPECT_EQ(slurp(root / "run1" / "report.csv"), slurp(root / "run2" / "report.csv"));
  EXPECT_EQ(t1.conditions(), (std::vector<std::string>{kConditionQwale, kConditionFrozen}));
  EXPECT_NE(tm.find(kConditionQwaleMasked, env::TaskId::Push), nullptr);

  const auto records = load_trials(root / "run1");
  EXPECT_EQ(records.size(), 8u);
  for (const auto& a : records) {
    if (a.condition != kConditionQwale) continue;
    const auto partner = std::find_if(records.begin(), records.end(), [&](const TrialRecord& b) {
      return b.condition == kConditionFrozen && b.task == a.task && b.trial == a.trial;
    });
    ASSERT_NE(partner, records.end());
    EXPECT_EQ(partner->novelty_offset, a.novelty_offset);
    EXPECT_EQ(partner->seed, a.seed);
  }
  // Charts come from the same records the report is built from.
  EXPECT_EQ(aggregate(records).to_csv(), slurp(root / "run1" / "report.csv"));
  EXPECT_TRUE(fs::exists(root / "run1" / "trajectories_Push.svg"));
  EXPECT_TRUE(fs::exists(root / "run1" / "trajectories" / "MT-SAC_Push_1.csv"));
  for (const auto& r : t1.rows) {
    if (r.mean_steps) EXPECT_LE(*r.mean_steps, c.qwale.life_budget);
  }
  EXPECT_ANY_THROW(cmd_single_life(c, root / "nope.bin", false));
}

#ifdef SLRL_CLI_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(SLRL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
  const fs::path root = scratch_dir("cli");
  EXPECT_EQ(run_cli("--help"), 0);
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("--profile huge train-prior"), 1);
  EXPECT_EQ(run_cli("report"), 1);
  std::ofstream(root / "bad.toml") << "sac.gama = 1\n";
  EXPECT_EQ(run_cli("--config " + (root / "bad.toml").string() + " train-prior"), 1);
  EXPECT_EQ(run_cli("--out " + (root / "x").string() + " single-life --prior " + (root / "none.bin").string()), 2);
  EXPECT_EQ(run_cli("--out " + (root / "y").string() + " report " + (root / "empty").string()), 2);

  std::ofstream(root / "tiny.toml") << "tasks = \"ButtonPress\"\ntrials = 1\neval_episodes = 1\n"
                                       "[sac]\nhidden_widths = \"8,8\"\nepisodes_per_task = 1\n"
                                       "warmup_steps_per_task = 10\nbatch_size = 4\n"
                                       "[qwale]\nlife_budget = 5\ndisc_hidden_widths = \"8\"\n"
                                       "disc_positive_batch = 4\ndisc_negative_batch = 4\n"
                                       "[env]\nhorizon = 10\n";
  const std::string common = "--config " + (root / "tiny.toml").string() + " --out " + (root / "run").string();
  EXPECT_EQ(run_cli(common + " --seed 3 train-prior"), 0);
  EXPECT_NE(slurp(root / "run" / "config.snapshot").find("seed = 3"), std::string::npos);
  EXPECT_EQ(run_cli(common + " single-life --masked"), 0);
  EXPECT_EQ(run_cli("--out " + (root / "agg").string() + " report " + (root / "run").string()), 0);
  EXPECT_TRUE(fs::exists(root / "agg" / "report.csv"));
  EXPECT_TRUE(fs::exists(root / "run" / "trials" / "MT-QWALE-masked_ButtonPress_0.json"));
}
#endif

}  // namespace
}  // namespace slrl::harness
