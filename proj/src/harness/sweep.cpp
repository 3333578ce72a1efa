#include "roer/harness/sweep.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "roer/errors.hpp"

namespace roer::harness {

namespace fs = std::filesystem;

namespace {

std::string csv_cell(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    const double sd = std::sqrt(ss / static_cast<double>(a.n - 1));
    const boost::math::students_t dist(static_cast<double>(a.n - 1));
    a.ci95 = boost::math::quantile(dist, 0.975) * sd / std::sqrt(static_cast<double>(a.n));
  }
  return a;
}

std::pair<Json, Json> split_sweep_document(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("sweep document must be a JSON object");
  Json base = doc;
  Json grid = Json::object();
  if (base.contains("grid")) {
    grid = base["grid"];
    base.erase("grid");
  }
  return {base, grid};
}

SweepResult run_sweep(const Json& base, const Json& grid) {
  if (!grid.is_object() || grid.empty()) throw ConfigError("sweep grid must be a nonempty object");
  SweepResult result;
  std::vector<std::vector<Json>> values;
  for (auto it = grid.begin(); it != grid.end(); ++it) {  // nlohmann orders keys
    if (!it.value().is_array() || it.value().empty()) {
      throw ConfigError("grid entry '" + it.key() + "' must be a nonempty array");
    }
    result.keys.push_back(it.key());
    values.emplace_back(it.value().begin(), it.value().end());
  }
  // Validate the base once so a broken base is a config error, not N failed cells.
  const auto base_cfg = parse_config(base);
  const fs::path root(base_cfg.output_dir);
  fs::create_directories(root);

  std::size_t total = 1;
  for (const auto& v : values) total *= v.size();
  for (std::size_t cell_index = 0; cell_index < total; ++cell_index) {
    SweepCell cell;
    cell.assignment = Json::object();
    Json doc = base;
    std::size_t rem = cell_index;
    std::vector<std::size_t> pick(values.size());
    for (std::size_t k = values.size(); k-- > 0;) {
      pick[k] = rem % values[k].size();
      rem /= values[k].size();
    }
    for (std::size_t k = 0; k < values.size(); ++k) {
      cell.assignment[result.keys[k]] = values[k][pick[k]];
      set_dotted(doc, result.keys[k], values[k][pick[k]]);
    }
    cell.output_dir = (root / ("cell_" + std::to_string(cell_index))).string();
    set_dotted(doc, "output_dir", cell.output_dir);
    try {
      const auto cfg = parse_config(doc);
      const auto summary = run_train(cfg);
      std::vector<double> ret, bias, kl;
      for (const auto& s : summary.seeds) {
        if (s.failed) continue;
        ++cell.ok_seeds;
        if (s.final_return) ret.push_back(*s.final_return);
        if (s.final_bias) bias.push_back(*s.final_bias);
        if (s.final_kl) kl.push_back(*s.final_kl);
      }
      cell.final_return = aggregate(ret);
      cell.final_bias = aggregate(bias);
      cell.final_kl = aggregate(kl);
      if (cell.ok_seeds == 0) {
        cell.failed = true;
        cell.failure = "every seed failed";
      }
    } catch (const std::exception& ex) {
      cell.failed = true;
      cell.failure = ex.what();
    }
    result.cells.push_back(std::move(cell));
  }

  std::ostringstream csv;
  csv.precision(17);
  csv << "cell";
  for (const auto& k : result.keys) csv << ',' << k;
  csv << ",ok_seeds,mean_final_return,ci95_final_return,mean_final_bias,ci95_final_bias,mean_final_kl,ci95_final_kl,"
         "status\n";
  auto agg = [&](const Aggregate& a) {
    if (a.n == 0) {
      csv << ",,";
    } else {
      csv << ',' << a.mean << ',' << a.ci95;
    }
  };
  for (std::size_t i = 0; i < result.cells.size(); ++i) {
    const auto& c = result.cells[i];
    csv << i;
    for (const auto& k : result.keys) csv << ',' << csv_cell(c.assignment[k].dump());
    csv << ',' << c.ok_seeds;
    agg(c.final_return);
    agg(c.final_bias);
    agg(c.final_kl);
    csv << ',' << (c.failed ? "failed" : "ok") << '\n';
  }
  result.summary_csv = csv.str();
  std::ofstream out(root / "sweep_summary.csv", std::ios::binary | std::ios::trunc);
  out << result.summary_csv;
  return result;
}

}  // namespace roer::harness
