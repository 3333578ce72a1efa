#include <CLI11.hpp>
#include <algorithm>
#include <fstream>
#include <iostream>

#include "roer/binary_io.hpp"
#include "roer/errors.hpp"
#include "roer/harness/bias.hpp"
#include "roer/harness/config.hpp"
#include "roer/harness/oracle_suite.hpp"
#include "roer/harness/sweep.hpp"
#include "roer/harness/train.hpp"
#include "roer/replay.hpp"

using namespace roer;
using namespace roer::harness;

namespace {

constexpr int kOk = 0;
constexpr int kCheckFailed = 1;
constexpr int kConfigError = 2;

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  Json doc = Json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("'" + path + "' is not valid JSON");
  return doc;
}

Json load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  Json doc = path.empty() ? Json::object() : read_json_file(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(doc, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return doc;
}

void apply_env_to_doc(Json& doc) {
  // Resolve ROER_OUTPUT_DIR / ROER_THREADS through the typed config so
  // validation errors name the variable.
  auto cfg = parse_config(doc);
  apply_environment_overrides(cfg);
  doc["output_dir"] = cfg.output_dir;
  doc["threads"] = cfg.threads;
}

int cmd_train(const std::string& path, const std::vector<std::string>& sets) {
  Json doc = load_with_overrides(path, sets);
  apply_env_to_doc(doc);
  const auto cfg = parse_config(doc);
  const auto summary = run_train(cfg);
  for (const auto& s : summary.seeds) std::cout << s.to_json().dump() << '\n';
  std::cout << "summary: " << cfg.output_dir << "/summary.csv\n";
  return summary.failures() ? kCheckFailed : kOk;
}

int cmd_sweep(const std::string& path, const std::vector<std::string>& sets) {
  Json doc = load_with_overrides(path, sets);
  auto [base, grid] = split_sweep_document(doc);
  apply_env_to_doc(base);
  const auto result = run_sweep(base, grid);
  std::cout << result.summary_csv;
  const bool any_failed = std::any_of(result.cells.begin(), result.cells.end(), [](const auto& c) { return c.failed; });
  return any_failed ? kCheckFailed : kOk;
}

int cmd_oracle(const std::string& report_path, const std::string& corrupt, std::uint64_t seed) {
  OracleOptions opts;
  opts.seed = seed;
  if (!corrupt.empty()) opts.corrupt_conjugate = divergences::parse_kind(corrupt);
  const auto report = run_oracle_suite(opts);
  const auto text = report.to_json().dump(2);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw ConfigError("cannot write report '" + report_path + "'");
    out << text << '\n';
  }
  std::cout << text << '\n';
  return report.passed() ? kOk : kCheckFailed;
}

int cmd_bias(const std::string& path, const std::vector<std::string>& sets, const std::string& run_dir,
             std::uint64_t seed) {
  const auto cfg = parse_config(load_with_overrides(path, sets));
  for (const auto& p : estimate_bias_series(cfg, run_dir, seed)) {
    std::cout << Json{{"step", p.step},
                      {"bias", p.estimate.bias},
                      {"mean_estimate", p.estimate.mean_estimate},
                      {"mean_true", p.estimate.mean_true},
                      {"std_error", p.estimate.std_error},
                      {"tail_bound", p.estimate.tail_bound},
                      {"pairs", p.estimate.pairs}}
                     .dump()
              << '\n';
  }
  return kOk;
}

int cmd_replay_inspect(const std::string& path, std::size_t top) {
  const auto buffer = replay::PriorityBuffer::load(read_file_bytes(path));
  Json out{{"size", buffer.size()},
           {"capacity", buffer.capacity()},
           {"state_dim", buffer.state_dim()},
           {"action_dim", buffer.action_dim()},
           {"cursor", buffer.cursor()},
           {"total_priority", buffer.total_priority()},
           {"stale_skips", buffer.stale_skips()}};
  if (buffer.size() > 0) {
    std::vector<std::pair<double, std::size_t>> prios;
    for (std::size_t i = 0; i < buffer.size(); ++i) prios.emplace_back(buffer.priority(i), i);
    const auto [mn, mx] = std::minmax_element(prios.begin(), prios.end());
    out["min_priority"] = mn->first;
    out["max_priority"] = mx->first;
    out["mean_priority"] = buffer.total_priority() / static_cast<double>(buffer.size());
    std::sort(prios.begin(), prios.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    Json top_slots = Json::array();
    for (std::size_t k = 0; k < std::min(top, prios.size()); ++k) {
      top_slots.push_back({{"slot", prios[k].second}, {"priority", prios[k].first}});
    }
    out["top"] = top_slots;
    if (buffer.tabular_shape()) out["implied_distribution"] = buffer.implied_distribution();
  }
  std::cout << out.dump(2) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prioritized experience replay experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "Run every seed of an experiment config");
  train->add_option("config", config_path, "JSON config file")->check(CLI::ExistingFile);
  train->add_option("--set", sets, "Override a dotted key, e.g. --set roer.beta=4");

  std::string sweep_path;
  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid ('grid' section of the config)");
  sweep->add_option("config", sweep_path, "JSON sweep file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--set", sets, "Override a dotted key");

  std::string report_path, corrupt;
  std::uint64_t seed = 0;
  auto* oracle = app.add_subcommand("oracle", "Run the oracle verification suite");
  oracle->add_option("--report", report_path, "Also write the JSON report here");
  oracle->add_option("--corrupt-conjugate", corrupt, "Negative control: perturb f*' of this divergence");
  oracle->add_option("--seed", seed, "Seed for the randomized checks");

  std::string run_dir;
  std::uint64_t bias_seed = 0;
  auto* bias = app.add_subcommand("bias", "Bias series of a finished run's checkpoints");
  bias->add_option("config", config_path, "JSON config of the run")->required()->check(CLI::ExistingFile);
  bias->add_option("--run-dir", run_dir, "Seed directory of the run")->required();
  bias->add_option("--seed", bias_seed, "Seed of the run");
  bias->add_option("--set", sets, "Override a dotted key");

  std::string buffer_path;
  std::size_t top = 10;
  auto* inspect = app.add_subcommand("replay-inspect", "Summarize a replay buffer snapshot");
  inspect->add_option("snapshot", buffer_path, "buffer.bin file")->required()->check(CLI::ExistingFile);
  inspect->add_option("--top", top, "Number of highest-priority slots to list");

  std::string profile = "test";
  auto* defaults = app.add_subcommand("defaults", "Print the default config of a profile");
  defaults->add_option("--profile", profile, "test or full");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(config_path, sets);
    if (*sweep) return cmd_sweep(sweep_path, sets);
    if (*oracle) return cmd_oracle(report_path, corrupt, seed);
    if (*bias) return cmd_bias(config_path, sets, run_dir, bias_seed);
    if (*inspect) return cmd_replay_inspect(buffer_path, top);
    if (*defaults) {
      std::cout << default_config_json(profile).dump(2) << '\n';
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kCheckFailed;
  }
  return kOk;
}
