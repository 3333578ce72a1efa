#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "roer/envs.hpp"
#include "roer/errors.hpp"
#include "roer/harness/bias.hpp"
#include "roer/harness/config.hpp"
#include "roer/harness/dataset.hpp"
#include "roer/harness/metrics.hpp"
#include "roer/harness/oracle_suite.hpp"
#include "roer/harness/sweep.hpp"
#include "roer/harness/train.hpp"
#include "roer/mdp.hpp"
#include "test_util.hpp"

namespace hn = roer::harness;
using hn::Json;
using roer::testing::slurp;
using roer::testing::TempDir;

namespace {

Json chain_doc(const std::string& scheme, const std::string& out) {
  Json doc = hn::default_config_json("test");
  doc["env"]["id"] = "chain";
  doc["scheme"] = scheme;
  doc["total_steps"] = 3000;
  doc["train_start"] = 500;
  doc["eval_every"] = 500;
  doc["seeds"] = {0};
  doc["output_dir"] = out;
  return doc;
}

Json pendulum_doc(const std::string& scheme, const std::string& out) {
  Json doc = hn::default_config_json("test");
  doc["scheme"] = scheme;
  doc["agent"]["hidden"] = {16, 16};
  doc["total_steps"] = 900;
  doc["train_start"] = 300;
  doc["eval_every"] = 300;
  doc["eval_episodes"] = 1;
  doc["batch_size"] = 32;
  doc["seeds"] = {3};
  doc["output_dir"] = out;
  return doc;
}

}  // namespace

TEST(Config, DefaultsParse) {
  for (const std::string profile : {"test", "full"}) {
    const auto cfg = hn::parse_config(hn::default_config_json(profile));
    EXPECT_EQ(cfg.profile, profile);
  }
  const auto full = hn::parse_config(hn::default_config_json("full"));
  EXPECT_EQ(full.agent.hidden, (std::vector<std::size_t>{256, 256}));
  EXPECT_EQ(full.batch_size, 256u);
  EXPECT_EQ(full.eval_every, 5000u);
  EXPECT_EQ(full.eval_episodes, 10u);
  const auto test = hn::parse_config(Json::object());
  EXPECT_EQ(test.agent.hidden, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(test.batch_size, 64u);
}

TEST(Config, StrictKeys) {
  EXPECT_THROW(hn::parse_config(Json{{"no_such_key", 1}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"roer", {{"lamda", 0.1}}}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"scheme", "rank"}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"env", {{"id", "mujoco"}}}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"batch_size", "large"}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"total_steps", 10}, {"train_start", 10}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"seeds", Json::array()}}), roer::ConfigError);
  EXPECT_THROW(hn::parse_config(Json{{"profile", "huge"}}), roer::ConfigError);
}

TEST(Config, InactiveSchemeKnobsAreNotRead) {
  Json doc = hn::default_config_json("test");
  doc["roer"]["lambda"] = 5.0;
  doc["per"]["alpha"] = -1.0;
  doc["scheme"] = "uniform";
  EXPECT_NO_THROW(hn::parse_config(doc));
  doc["scheme"] = "roer";
  EXPECT_THROW(hn::parse_config(doc), roer::ConfigError);
  doc["roer"]["lambda"] = 0.5;
  doc["scheme"] = "per";
  EXPECT_THROW(hn::parse_config(doc), roer::ConfigError);
}

TEST(Config, UniformRunIgnoresSchemeKnobs) {
  TempDir dir;
  Json a = chain_doc("uniform", dir.file("a"));
  Json b = chain_doc("uniform", dir.file("b"));
  b["roer"] = {{"lambda", 9.0}, {"beta", -1.0}, {"max_exp_clip", 0.0}};
  hn::run_train(hn::parse_config(a));
  hn::run_train(hn::parse_config(b));
  EXPECT_EQ(slurp(dir.file("a/seed_0/metrics.jsonl")), slurp(dir.file("b/seed_0/metrics.jsonl")));
}

TEST(Config, SchemeWiresValueLoss) {
  Json doc = hn::default_config_json("test");
  doc["scheme"] = "roer";
  doc["roer"]["beta"] = 4.0;
  doc["roer"]["grad_clip"] = 5.0;
  auto cfg = hn::parse_config(doc);
  EXPECT_EQ(cfg.agent.value_loss, roer::agents::ValueLoss::Gumbel);
  EXPECT_EQ(cfg.agent.value_beta, 4.0);
  EXPECT_EQ(cfg.agent.value_grad_clip, 5.0);
  EXPECT_TRUE(cfg.uses_value_network());
  EXPECT_EQ(cfg.effective_huber_k(), 1.0);
  doc["scheme"] = "roer_chi2";
  EXPECT_EQ(hn::parse_config(doc).agent.value_loss, roer::agents::ValueLoss::Chi2);
  doc["scheme"] = "uniform";
  cfg = hn::parse_config(doc);
  EXPECT_FALSE(cfg.uses_value_network());
  EXPECT_EQ(cfg.effective_huber_k(), std::numeric_limits<double>::infinity());
  doc["critic_loss"] = "huber";
  EXPECT_EQ(hn::parse_config(doc).agent_config().huber_k, 1.0);
  doc["scheme"] = "per";
  doc["critic_loss"] = "mse";
  EXPECT_EQ(hn::parse_config(doc).agent_config().huber_k, std::numeric_limits<double>::infinity());
}

TEST(Config, RoundTripThroughJson) {
  Json doc = chain_doc("roer", "out");
  doc["roer"]["beta"] = 0.4;
  doc["seeds"] = {1, 2, 3};
  const auto cfg = hn::parse_config(doc);
  const auto again = hn::parse_config(hn::config_to_json(cfg));
  EXPECT_EQ(hn::config_to_json(again), hn::config_to_json(cfg));
  EXPECT_EQ(again.roer.beta, 0.4);
  EXPECT_EQ(again.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
}

TEST(Config, Overrides) {
  Json doc = hn::default_config_json("test");
  hn::apply_override(doc, "roer.beta", "4");
  hn::apply_override(doc, "scheme", "roer");
  hn::apply_override(doc, "seeds", "[1,2]");
  hn::apply_override(doc, "agent.hidden", "[8]");
  const auto cfg = hn::parse_config(doc);
  EXPECT_EQ(cfg.roer.beta, 4.0);
  EXPECT_EQ(cfg.scheme, roer::schemes::SchemeKind::Roer);
  EXPECT_EQ(cfg.seeds.size(), 2u);
  EXPECT_EQ(cfg.agent.hidden, (std::vector<std::size_t>{8}));
  hn::apply_override(doc, "roer.nonexistent", "1");
  EXPECT_THROW(hn::parse_config(doc), roer::ConfigError);
}

TEST(Config, EnvironmentOverrides) {
  auto cfg = hn::parse_config(Json::object());
  ::setenv("ROER_OUTPUT_DIR", "/tmp/elsewhere", 1);
  ::setenv("ROER_THREADS", "3", 1);
  hn::apply_environment_overrides(cfg);
  EXPECT_EQ(cfg.output_dir, "/tmp/elsewhere");
  EXPECT_EQ(cfg.threads, 3u);
  ::setenv("ROER_THREADS", "zero", 1);
  EXPECT_THROW(hn::apply_environment_overrides(cfg), roer::ConfigError);
  ::unsetenv("ROER_OUTPUT_DIR");
  ::unsetenv("ROER_THREADS");
}

TEST(Config, LoadFileErrors) {
  TempDir dir;
  EXPECT_THROW(hn::load_config_file(dir.file("missing.json")), roer::ConfigError);
  std::ofstream(dir.file("bad.json")) << "{ not json";
  EXPECT_THROW(hn::load_config_file(dir.file("bad.json")), roer::ConfigError);
}

TEST(Metrics, RecordRoundTrip) {
  hn::MetricsRecord r;
  r.step = 42;
  r.eval_return = -150.5;
  r.kl_to_optimal = 0.3;
  r.critic_loss = 1.25;
  r.floor_hits = 7;
  const auto back = hn::MetricsRecord::from_json(r.to_json());
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.eval_return, r.eval_return);
  EXPECT_EQ(back.kl_to_optimal, r.kl_to_optimal);
  EXPECT_FALSE(back.bias.has_value());
  EXPECT_EQ(back.critic_loss, 1.25);
  EXPECT_EQ(back.floor_hits, 7u);
}

TEST(Metrics, PartialLineDroppedOnReopen) {
  TempDir dir;
  const auto path = dir.file("m.jsonl");
  {
    hn::MetricsWriter w(path);
    EXPECT_TRUE(w.append(Json{{"step", 1}}));
    EXPECT_TRUE(w.append(Json{{"step", 2}}));
  }
  const auto complete = slurp(path);
  std::ofstream(path, std::ios::app) << "{\"step\": 3, \"eval";
  EXPECT_EQ(hn::read_jsonl(path).size(), 2u);
  {
    hn::MetricsWriter w(path);
    EXPECT_GT(w.dropped_partial_bytes(), 0u);
    EXPECT_EQ(w.last_step(), 2u);
    EXPECT_FALSE(w.append(Json{{"step", 2}}));
    EXPECT_TRUE(w.append(Json{{"step", 3}}));
  }
  const auto records = hn::read_jsonl(path);
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[2]["step"], 3);
  EXPECT_EQ(slurp(path).substr(0, complete.size()), complete);
}

TEST(Dataset, RoundTripIntoBuffer) {
  TempDir dir;
  std::vector<roer::replay::Transition> data;
  for (int i = 0; i < 25; ++i) {
    data.push_back({{0.1 * i, -0.2 * i, 1.0}, {0.5}, -0.25 * i, {0.1 * i + 0.01, 0.3, 0.9}, i % 5 == 4, 0});
  }
  hn::write_offline_dataset(dir.file("d.csv"), data);
  const auto back = hn::load_offline_dataset(dir.file("d.csv"), 3, 1);
  ASSERT_EQ(back.size(), data.size());
  roer::replay::PriorityBuffer buf(100, 3, 1);
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].state, data[i].state);
    EXPECT_EQ(back[i].reward, data[i].reward);
    EXPECT_EQ(back[i].terminal, data[i].terminal);
    buf.push(back[i]);
  }
  EXPECT_EQ(buf.size(), 25u);
  for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_EQ(buf.priority(i), 1.0);
}

TEST(Dataset, Errors) {
  TempDir dir;
  std::ofstream(dir.file("a.csv")) << "state_0,action_0,reward,next_state_0\n0,0,1,1\n";
  EXPECT_THROW(hn::load_offline_dataset(dir.file("a.csv"), 1, 1), roer::FormatError);
  std::ofstream(dir.file("b.csv")) << "state_0,action_0,reward,next_state_0,terminal\n0,0,x,1,0\n";
  EXPECT_THROW(hn::load_offline_dataset(dir.file("b.csv"), 1, 1), roer::FormatError);
  std::ofstream(dir.file("c.csv")) << "terminal,reward,next_state_0,action_0,state_0\n0,1.5,1,0,2\n";
  const auto t = hn::load_offline_dataset(dir.file("c.csv"), 1, 1);
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0].state[0], 2.0);
  EXPECT_EQ(t[0].reward, 1.5);
  EXPECT_THROW(hn::load_offline_dataset(dir.file("missing.csv"), 1, 1), roer::ConfigError);
}

TEST(Train, UniformKeepsUnitPriorities) {
  TempDir dir;
  auto doc = chain_doc("uniform", dir.str());
  doc["train_start"] = 0;
  const auto summary = hn::run_train(hn::parse_config(doc));
  ASSERT_EQ(summary.failures(), 0u);
  const auto& recs = summary.seeds[0].records;
  ASSERT_FALSE(recs.empty());
  EXPECT_EQ(recs.front().step, 0u);
  for (const auto& r : recs) EXPECT_EQ(r.mean_priority, 1.0);
  EXPECT_TRUE(std::filesystem::exists(dir.file("seed_0/final.ckpt")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("seed_0/summary.json")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("summary.csv")));
  EXPECT_TRUE(std::filesystem::exists(dir.file("config.json")));
}

TEST(Train, RecordSchedule) {
  TempDir dir;
  const auto r = hn::run_seed(hn::parse_config(chain_doc("roer", dir.str())), 0, dir.str());
  std::vector<std::uint64_t> steps;
  for (const auto& rec : r.records) steps.push_back(rec.step);
  EXPECT_EQ(steps, (std::vector<std::uint64_t>{500, 1000, 1500, 2000, 2500, 3000}));
  EXPECT_TRUE(r.initial_kl.has_value());
  EXPECT_TRUE(r.final_kl.has_value());
  EXPECT_EQ(hn::read_jsonl(dir.file("metrics.jsonl")).size(), steps.size());
  EXPECT_EQ(hn::read_jsonl(dir.file("timing.jsonl")).size(), steps.size());
}

TEST(Train, TabularRunIsByteDeterministic) {
  TempDir dir;
  const auto cfg = hn::parse_config(chain_doc("roer", dir.str()));
  hn::run_seed(cfg, 4, dir.file("a"));
  hn::run_seed(cfg, 4, dir.file("b"));
  EXPECT_EQ(slurp(dir.file("a/metrics.jsonl")), slurp(dir.file("b/metrics.jsonl")));
  EXPECT_EQ(slurp(dir.file("a/final.ckpt")), slurp(dir.file("b/final.ckpt")));
}

TEST(Train, PendulumRunIsByteDeterministic) {
  TempDir dir;
  for (const std::string scheme : {"roer", "per", "laber"}) {
    auto doc = pendulum_doc(scheme, dir.str());
    doc["laber"]["large_batch"] = 128;
    const auto cfg = hn::parse_config(doc);
    const auto a = hn::run_seed(cfg, 3, dir.file(scheme + "_a"));
    const auto b = hn::run_seed(cfg, 3, dir.file(scheme + "_b"));
    EXPECT_FALSE(a.failed) << a.failure;
    EXPECT_EQ(slurp(dir.file(scheme + "_a/metrics.jsonl")), slurp(dir.file(scheme + "_b/metrics.jsonl"))) << scheme;
  }
}

TEST(Train, RoerWithVanishingLambdaMatchesUniform) {
  TempDir dir;
  auto u = pendulum_doc("uniform", dir.file("u"));
  auto r = pendulum_doc("roer", dir.file("r"));
  for (auto* d : {&u, &r}) (*d)["critic_loss"] = "mse";
  r["roer"]["lambda"] = 1e-12;
  const auto ru = hn::run_train(hn::parse_config(u)).seeds[0];
  const auto rr = hn::run_train(hn::parse_config(r)).seeds[0];
  ASSERT_EQ(ru.records.size(), rr.records.size());
  for (std::size_t i = 0; i < ru.records.size(); ++i) {
    ASSERT_TRUE(ru.records[i].eval_return && rr.records[i].eval_return);
    EXPECT_NEAR(*ru.records[i].eval_return, *rr.records[i].eval_return, 1e-6 * std::abs(*ru.records[i].eval_return));
  }
}

TEST(Train, RoerShiftsPrioritiesAfterStartStep) {
  TempDir dir;
  auto doc = chain_doc("roer", dir.str());
  doc["roer"]["train_start_step"] = 1000;
  doc["roer"]["min_exp_clip"] = 0.0;
  doc["roer"]["min_priority_clip"] = 0.001;
  doc["roer"]["lambda"] = 0.5;
  const auto r = hn::run_seed(hn::parse_config(doc), 0, dir.str());
  // Gate: no priority update in the first 1000 training steps (through env step 1500).
  EXPECT_EQ(r.records[0].mean_priority, 1.0);
  EXPECT_EQ(r.records[1].mean_priority, 1.0);
  EXPECT_NE(r.records.back().mean_priority, 1.0);
}

TEST(Train, ResumeDropsPartialLineAndCatchesUp) {
  TempDir dir;
  const auto cfg = hn::parse_config(chain_doc("roer", dir.str()));
  hn::run_seed(cfg, 1, dir.file("run"));
  const auto full = slurp(dir.file("run/metrics.jsonl"));
  const auto cut = full.find('\n', full.size() / 2);
  {
    std::ofstream out(dir.file("run/metrics.jsonl"), std::ios::binary | std::ios::trunc);
    out << full.substr(0, cut + 1) << full.substr(cut + 1, 20);
  }
  hn::run_seed(cfg, 1, dir.file("run"));
  EXPECT_EQ(slurp(dir.file("run/metrics.jsonl")), full);
}

TEST(Train, OfflineDatasetPrefill) {
  TempDir dir;
  std::vector<roer::replay::Transition> data;
  for (int i = 0; i < 40; ++i) {
    data.push_back({{static_cast<double>(i % 10)}, {1.0}, 0.0, {static_cast<double>(std::min(i % 10 + 1, 9))}, false});
  }
  hn::write_offline_dataset(dir.file("offline.csv"), data);
  auto doc = chain_doc("uniform", dir.file("out"));
  doc["offline_dataset"] = dir.file("offline.csv");
  doc["reward_shift"] = -1.0;
  doc["save_buffer"] = true;
  const auto r = hn::run_train(hn::parse_config(doc)).seeds[0];
  EXPECT_FALSE(r.failed);
  const auto buf = roer::replay::PriorityBuffer::load(roer::read_file_bytes(dir.file("out/seed_0/buffer.bin")));
  EXPECT_EQ(buf.size(), 3040u);
  EXPECT_EQ(buf.at(0).reward, -1.0);
  EXPECT_EQ(buf.priority(0), 1.0);
}

TEST(Train, OfflinePrerefreshRescoresStoredPriorities) {
  TempDir dir;
  std::vector<roer::replay::Transition> data;
  for (int i = 0; i < 200; ++i) {
    data.push_back({{static_cast<double>(i % 10)}, {1.0}, 0.1 * (i % 7), {static_cast<double>(std::min(i % 10 + 1, 9))},
                    false});
  }
  hn::write_offline_dataset(dir.file("offline.csv"), data);
  auto changed_offline_slots = [&](bool prerefresh, const std::string& out) {
    auto doc = chain_doc("roer", dir.file(out));
    doc["offline_dataset"] = dir.file("offline.csv");
    doc["offline_prerefresh"] = prerefresh;
    doc["roer"]["min_exp_clip"] = 0.0;
    doc["roer"]["min_priority_clip"] = 1e-3;
    doc["total_steps"] = 501;
    doc["save_buffer"] = true;
    EXPECT_FALSE(hn::run_train(hn::parse_config(doc)).seeds[0].failed);
    const auto buf = roer::replay::PriorityBuffer::load(roer::read_file_bytes(dir.file(out + "/seed_0/buffer.bin")));
    std::size_t changed = 0;
    for (std::size_t i = 0; i < 200; ++i) changed += buf.priority(i) != 1.0;
    return changed;
  };
  EXPECT_LE(changed_offline_slots(false, "plain"), 64u);
  EXPECT_GE(changed_offline_slots(true, "refreshed"), 190u);
}

TEST(Sweep, SingleCellMatchesTrain) {
  TempDir dir;
  auto base = chain_doc("roer", dir.file("sweep"));
  base["seeds"] = {0, 1};
  const auto res = hn::run_sweep(base, Json{{"roer.beta", {1.0}}});
  ASSERT_EQ(res.cells.size(), 1u);
  auto direct = chain_doc("roer", dir.file("direct"));
  direct["seeds"] = {0, 1};
  const auto summary = hn::run_train(hn::parse_config(direct));
  std::vector<double> kl;
  for (const auto& s : summary.seeds) kl.push_back(*s.final_kl);
  const auto agg = hn::aggregate(kl);
  EXPECT_EQ(res.cells[0].final_kl.mean, agg.mean);
  EXPECT_EQ(res.cells[0].final_kl.ci95, agg.ci95);
  EXPECT_EQ(res.cells[0].ok_seeds, 2u);
}

TEST(Sweep, DeterministicSummaryAndFailedCells) {
  TempDir dir;
  auto base = chain_doc("roer", dir.file("a"));
  base["total_steps"] = 1500;
  const Json grid = {{"roer.beta", {0.4, 1.0}}, {"roer.lambda", {5.0, 0.01}}};
  const auto a = hn::run_sweep(base, grid);
  base["output_dir"] = dir.file("b");
  const auto b = hn::run_sweep(base, grid);
  ASSERT_EQ(a.cells.size(), 4u);
  EXPECT_EQ(a.keys, (std::vector<std::string>{"roer.beta", "roer.lambda"}));
  EXPECT_TRUE(a.cells[0].failed);
  EXPECT_FALSE(a.cells[1].failed);
  EXPECT_TRUE(a.cells[2].failed);
  EXPECT_FALSE(a.cells[3].failed);
  EXPECT_EQ(a.cells[3].assignment["roer.beta"], 1.0);
  EXPECT_EQ(a.summary_csv, b.summary_csv);
  EXPECT_EQ(slurp(dir.file("a/sweep_summary.csv")), a.summary_csv);
}

TEST(Sweep, AggregateInterval) {
  const auto a = hn::aggregate({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(a.mean, 2.0);
  // t_{0.975, 2} = 4.302652729...
  EXPECT_NEAR(a.ci95, 4.302652729911275 / std::sqrt(3.0), 1e-9);
  EXPECT_EQ(hn::aggregate({5.0}).ci95, 0.0);
}

TEST(Oracle, SuitePasses) {
  const auto report = hn::run_oracle_suite();
  for (const auto& c : report.checks) EXPECT_TRUE(c.passed) << c.name << " measured " << c.measured;
  EXPECT_TRUE(report.passed());
  const auto j = report.to_json();
  ASSERT_TRUE(j.contains("checks"));
  for (const auto& c : j["checks"]) {
    EXPECT_TRUE(c.contains("tolerance"));
    EXPECT_TRUE(c.contains("measured"));
  }
}

TEST(Oracle, CorruptedConjugateIsNamed) {
  hn::OracleOptions opts;
  opts.corrupt_conjugate = roer::divergences::Kind::KL;
  const auto report = hn::run_oracle_suite(opts);
  EXPECT_FALSE(report.passed());
  bool named = false;
  for (const auto& c : report.checks) {
    if (c.name == "conjugate_identity/kl") {
      EXPECT_FALSE(c.passed);
      named = true;
    } else if (c.name.rfind("conjugate_identity/", 0) == 0) {
      EXPECT_TRUE(c.passed) << c.name;
    }
  }
  EXPECT_TRUE(named);
  const auto failed = report.to_json()["failed"];
  EXPECT_NE(std::find(failed.begin(), failed.end(), Json("conjugate_identity/kl")), failed.end());
}

TEST(Bias, ZeroRewardGivesNegativeMeanEstimate) {
  roer::mdp::TabularMdp m;
  m.n_states = 2;
  m.n_actions = 2;
  m.gamma = 0.9;
  m.transitions = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  m.rewards = {0, 0, 0, 0};
  m.initial = {0.5, 0.5};
  roer::envs::TabularEnv env(m, 1);
  roer::agents::TabularAgent agent(2, 2, {});
  agent.set_q_table({0.3, 1.2, -0.4, 2.0});
  std::vector<roer::replay::Transition> pairs;
  double mean = 0.0;
  for (int i = 0; i < 16; ++i) {
    const double s = i % 2, a = (i / 2) % 2;
    pairs.push_back({{s}, {a}, 0.0, {0.0}, false});
    mean += agent.q(static_cast<std::size_t>(s), static_cast<std::size_t>(a)) / 16.0;
  }
  roer::Rng rng(1);
  const auto est = hn::estimate_bias(agent, env, pairs, {0.9, 200, 0.0}, rng);
  EXPECT_NEAR(est.bias, -mean, 1e-15);
  EXPECT_EQ(est.mean_true, 0.0);
}

TEST(Bias, OptimalTabularAgentIsUnbiased) {
  roer::Rng rng(2);
  const auto m = roer::mdp::random_mdp(5, 2, 0.9, rng);
  const auto vi = roer::mdp::value_iteration(m);
  roer::envs::TabularEnv env(m, 3);
  roer::agents::TabularAgent agent(5, 2, {});
  agent.set_q_table(vi.q);
  std::vector<roer::replay::Transition> pairs;
  for (int i = 0; i < 500; ++i) {
    pairs.push_back({{static_cast<double>(i % 5)}, {static_cast<double>((i / 5) % 2)}, 0.0, {0.0}, false});
  }
  const auto est = hn::estimate_bias(agent, env, pairs, {0.9, 400, 0.0}, rng);
  EXPECT_LE(std::abs(est.bias), 3.0 * est.std_error + est.tail_bound);
  EXPECT_EQ(est.pairs, 500u);
}

TEST(Bias, SeriesFollowsCheckpointSchedule) {
  TempDir dir;
  auto doc = pendulum_doc("uniform", dir.str());
  doc["bias_every"] = 300;
  doc["bias_batch"] = 8;
  doc["bias_horizon"] = 50;
  doc["keep_checkpoints"] = true;
  const auto cfg = hn::parse_config(doc);
  const auto r = hn::run_seed(cfg, 3, dir.file("run"));
  std::size_t scheduled = 0;
  for (const auto& rec : r.records) scheduled += rec.bias.has_value();
  EXPECT_EQ(scheduled, 3u);
  const auto series = hn::estimate_bias_series(cfg, dir.file("run"), 3);
  ASSERT_EQ(series.size(), scheduled);
  EXPECT_EQ(series[0].step, 300u);
  EXPECT_EQ(series[2].step, 900u);
  for (const auto& p : series) EXPECT_TRUE(std::isfinite(p.estimate.bias));
}

TEST(Bias, SummaryStatistics) {
  const std::vector<double> truth = {1.0, 2.0, 3.0}, est = {0.0, 0.0, 0.0};
  const auto b = hn::summarize_bias(truth, est, 0.5);
  EXPECT_DOUBLE_EQ(b.bias, 2.0);
  EXPECT_DOUBLE_EQ(b.std_error, 1.0 / std::sqrt(3.0));
  EXPECT_EQ(b.tail_bound, 0.5);
}
