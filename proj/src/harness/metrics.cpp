#include "roer/harness/metrics.hpp"

#include <filesystem>
#include <sstream>

#include "roer/errors.hpp"

namespace roer::harness {

namespace {

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

std::string read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Json MetricsRecord::to_json() const {
  return Json{
      {"step", step},
      {"eval_return", optional_json(eval_return)},
      {"critic_loss", critic_loss},
      {"penalty", penalty},
      {"value_loss", value_loss},
      {"actor_loss", actor_loss},
      {"temperature", temperature},
      {"entropy", entropy},
      {"mean_q", mean_q},
      {"bias", optional_json(bias)},
      {"kl_to_optimal", optional_json(kl_to_optimal)},
      {"q_error", optional_json(q_error)},
      {"mean_priority", mean_priority},
      {"value_clip_hits", value_clip_hits},
      {"upper_clip_hits", upper_clip_hits},
      {"lower_clip_hits", lower_clip_hits},
      {"floor_hits", floor_hits},
      {"stale_skips", stale_skips},
      {"aborted_updates", aborted_updates},
  };
}

MetricsRecord MetricsRecord::from_json(const Json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<std::uint64_t>();
  r.eval_return = optional_from(j, "eval_return");
  r.critic_loss = j.value("critic_loss", 0.0);
  r.penalty = j.value("penalty", 0.0);
  r.value_loss = j.value("value_loss", 0.0);
  r.actor_loss = j.value("actor_loss", 0.0);
  r.temperature = j.value("temperature", 0.0);
  r.entropy = j.value("entropy", 0.0);
  r.mean_q = j.value("mean_q", 0.0);
  r.bias = optional_from(j, "bias");
  r.kl_to_optimal = optional_from(j, "kl_to_optimal");
  r.q_error = optional_from(j, "q_error");
  r.mean_priority = j.value("mean_priority", 1.0);
  r.value_clip_hits = j.value("value_clip_hits", std::uint64_t{0});
  r.upper_clip_hits = j.value("upper_clip_hits", std::uint64_t{0});
  r.lower_clip_hits = j.value("lower_clip_hits", std::uint64_t{0});
  r.floor_hits = j.value("floor_hits", std::uint64_t{0});
  r.stale_skips = j.value("stale_skips", std::uint64_t{0});
  r.aborted_updates = j.value("aborted_updates", std::uint64_t{0});
  return r;
}

std::vector<Json> read_jsonl(const std::string& path) {
  std::vector<Json> out;
  const std::string text = read_all(path);
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) break;
    const auto line = text.substr(start, nl - start);
    if (!line.empty()) {
      auto j = Json::parse(line, nullptr, false);
      if (j.is_discarded()) throw FormatError("malformed record in '" + path + "'");
      out.push_back(std::move(j));
    }
    start = nl + 1;
  }
  return out;
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {
  if (std::filesystem::exists(path)) {
    const std::string text = read_all(path);
    const auto last_nl = text.rfind('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    dropped_ = text.size() - keep;
    if (dropped_ > 0) std::filesystem::resize_file(path, keep);
    for (const auto& rec : read_jsonl(path)) {
      if (rec.contains("step")) last_step_ = rec["step"].get<std::uint64_t>();
    }
  }
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw Error("cannot open metrics file '" + path + "'");
}

bool MetricsWriter::append(const Json& record) {
  const auto step = record.at("step").get<std::uint64_t>();
  if (last_step_ && step <= *last_step_) return false;
  out_ << record.dump() << '\n';
  out_.flush();
  last_step_ = step;
  return true;
}

}  // namespace roer::harness
