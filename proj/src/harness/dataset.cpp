#include "roer/harness/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "roer/errors.hpp"

namespace roer::harness {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\r')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, std::size_t row, const std::string& column) {
  std::istringstream ss(s);
  double v;
  ss >> v;
  if (s.empty() || ss.fail() || !ss.eof()) {
    throw FormatError("dataset row " + std::to_string(row) + ", column '" + column + "': not a number: '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<replay::Transition> load_offline_dataset(const std::string& path, std::size_t state_dim,
                                                     std::size_t action_dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open offline dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("offline dataset '" + path + "' is empty");
  const auto header = split_csv(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!col.emplace(header[i], i).second) throw FormatError("duplicate dataset column '" + header[i] + "'");
  }
  auto require = [&](const std::string& name) {
    const auto it = col.find(name);
    if (it == col.end()) throw FormatError("offline dataset lacks column '" + name + "'");
    return it->second;
  };
  std::vector<std::size_t> s_cols, a_cols, n_cols;
  for (std::size_t i = 0; i < state_dim; ++i) {
    s_cols.push_back(require("state_" + std::to_string(i)));
    n_cols.push_back(require("next_state_" + std::to_string(i)));
  }
  for (std::size_t i = 0; i < action_dim; ++i) a_cols.push_back(require("action_" + std::to_string(i)));
  const auto r_col = require("reward");
  const auto t_col = require("terminal");

  std::vector<replay::Transition> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw FormatError("dataset row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(header.size()));
    }
    replay::Transition t;
    for (std::size_t i = 0; i < state_dim; ++i) {
      t.state.push_back(parse_number(cells[s_cols[i]], row, header[s_cols[i]]));
      t.next_state.push_back(parse_number(cells[n_cols[i]], row, header[n_cols[i]]));
    }
    for (auto c : a_cols) t.action.push_back(parse_number(cells[c], row, header[c]));
    t.reward = parse_number(cells[r_col], row, "reward");
    const double term = parse_number(cells[t_col], row, "terminal");
    if (term != 0.0 && term != 1.0) throw FormatError("dataset row " + std::to_string(row) + ": terminal must be 0 or 1");
    t.terminal = term == 1.0;
    out.push_back(std::move(t));
  }
  return out;
}

void write_offline_dataset(const std::string& path, const std::vector<replay::Transition>& data) {
  if (data.empty()) throw InvalidInput("nothing to write");
  const auto sd = data[0].state.size();
  const auto ad = data[0].action.size();
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  for (std::size_t i = 0; i < sd; ++i) out << "state_" << i << ',';
  for (std::size_t i = 0; i < ad; ++i) out << "action_" << i << ',';
  out << "reward,";
  for (std::size_t i = 0; i < sd; ++i) out << "next_state_" << i << ',';
  out << "terminal\n";
  out.precision(17);
  for (const auto& t : data) {
    for (double v : t.state) out << v << ',';
    for (double v : t.action) out << v << ',';
    out << t.reward << ',';
    for (double v : t.next_state) out << v << ',';
    out << (t.terminal ? 1 : 0) << '\n';
  }
}

}  // namespace roer::harness
