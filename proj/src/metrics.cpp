#include "rtrrl/metrics.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace rtrrl {

namespace {

using OptField = std::optional<double> MetricRecord::*;

struct Field {
  const char* name;
  OptField member;
};

constexpr Field kFields[] = {
    {"episodic_reward", &MetricRecord::episodic_reward},
    {"eval_reward", &MetricRecord::eval_reward},
    {"delta_mean_abs", &MetricRecord::delta_mean_abs},
    {"entropy", &MetricRecord::entropy},
    {"grad_norm_actor", &MetricRecord::grad_norm_actor},
    {"grad_norm_critic", &MetricRecord::grad_norm_critic},
    {"grad_norm_rnn", &MetricRecord::grad_norm_rnn},
    {"wall_time", &MetricRecord::wall_time},
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_csv(const std::string& row) {
  std::vector<std::string> cells(1);
  bool quoted = false;
  for (std::size_t i = 0; i < row.size(); ++i) {
    const char c = row[i];
    if (quoted) {
      if (c == '"' && i + 1 < row.size() && row[i + 1] == '"') {
        cells.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cells.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.emplace_back();
    } else {
      cells.back() += c;
    }
  }
  return cells;
}

void check_step(std::optional<std::int64_t>& last, std::int64_t step) {
  if (last && step <= *last) {
    throw std::logic_error("metric steps must be strictly increasing (" + std::to_string(step) +
                           " after " + std::to_string(*last) + ")");
  }
  last = step;
}

}  // namespace

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"run_id", "step", "episode"};
    for (const auto& f : kFields) c.emplace_back(f.name);
    return c;
  }();
  return cols;
}

nlohmann::json to_json(const MetricRecord& r) {
  nlohmann::json j;
  j["run_id"] = r.run_id;
  j["step"] = r.step;
  j["episode"] = r.episode;
  for (const auto& f : kFields) {
    const auto& v = r.*f.member;
    j[f.name] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  return j;
}

MetricRecord record_from_json(const nlohmann::json& j) {
  MetricRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.step = j.at("step").get<std::int64_t>();
  r.episode = j.at("episode").get<std::int64_t>();
  for (const auto& f : kFields) {
    auto it = j.find(f.name);
    if (it != j.end() && !it->is_null()) r.*f.member = it->get<double>();
  }
  return r;
}

std::string to_json_line(const MetricRecord& r) { return to_json(r).dump(); }

MetricRecord parse_json_line(const std::string& line) {
  return record_from_json(nlohmann::json::parse(line));
}

std::string csv_header() {
  std::string s;
  for (const auto& c : csv_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

std::string to_csv_row(const MetricRecord& r) {
  std::string s = csv_quote(r.run_id) + ',' + std::to_string(r.step) + ',' + std::to_string(r.episode);
  for (const auto& f : kFields) {
    s += ',';
    const auto& v = r.*f.member;
    if (v) s += format_double(*v);
  }
  return s;
}

MetricRecord parse_csv_row(const std::string& row) {
  const auto cells = split_csv(row);
  if (cells.size() != csv_columns().size()) throw std::invalid_argument("csv row has wrong column count");
  MetricRecord r;
  r.run_id = cells[0];
  r.step = std::stoll(cells[1]);
  r.episode = std::stoll(cells[2]);
  std::size_t i = 3;
  for (const auto& f : kFields) {
    if (!cells[i].empty()) r.*f.member = std::stod(cells[i]);
    ++i;
  }
  return r;
}

void MemoryMetricSink::write(const MetricRecord& r) {
  if (!records_.empty() && r.step <= records_.back().step) {
    throw std::logic_error("metric steps must be strictly increasing");
  }
  records_.push_back(r);
}

FileMetricSink::FileMetricSink(const std::string& jsonl_path, const std::string& csv_path)
    : jsonl_(jsonl_path, std::ios::binary | std::ios::trunc) {
  if (!jsonl_) throw std::runtime_error("cannot open metric log '" + jsonl_path + "'");
  if (!csv_path.empty()) {
    csv_.open(csv_path, std::ios::binary | std::ios::trunc);
    if (!csv_) throw std::runtime_error("cannot open metric csv '" + csv_path + "'");
    csv_ << csv_header() << '\n';
    csv_.flush();
  }
}

void FileMetricSink::header(const nlohmann::json& meta) {
  jsonl_ << nlohmann::json{{"header", meta}}.dump() << '\n';
  jsonl_.flush();
}

void FileMetricSink::write(const MetricRecord& r) {
  check_step(last_step_, r.step);
  jsonl_ << to_json_line(r) << '\n';
  jsonl_.flush();
  if (csv_.is_open()) {
    csv_ << to_csv_row(r) << '\n';
    csv_.flush();
  }
}

}  // namespace rtrrl
