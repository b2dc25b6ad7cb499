#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace rtrrl {

// One row of the metric log. Unset fields are written as null (JSON) or an
// empty cell (CSV).
struct MetricRecord {
  std::string run_id;
  std::int64_t step = 0;
  std::int64_t episode = 0;
  std::optional<double> episodic_reward;  // mean over episodes finished since the last row
  std::optional<double> eval_reward;
  std::optional<double> delta_mean_abs;
  std::optional<double> entropy;
  std::optional<double> grad_norm_actor;
  std::optional<double> grad_norm_critic;
  std::optional<double> grad_norm_rnn;
  std::optional<double> wall_time;

  bool operator==(const MetricRecord&) const = default;
};

/// Fixed CSV column order.
const std::vector<std::string>& csv_columns();

nlohmann::json to_json(const MetricRecord& r);
MetricRecord record_from_json(const nlohmann::json& j);

std::string to_json_line(const MetricRecord& r);
MetricRecord parse_json_line(const std::string& line);
std::string csv_header();
std::string to_csv_row(const MetricRecord& r);
MetricRecord parse_csv_row(const std::string& row);

class MetricSink {
 public:
  virtual ~MetricSink() = default;
  /// Run description written once before any record.
  virtual void header(const nlohmann::json& meta) = 0;
  /// Steps must be strictly increasing; throws std::logic_error otherwise.
  virtual void write(const MetricRecord& r) = 0;
};

class MemoryMetricSink final : public MetricSink {
 public:
  void header(const nlohmann::json& meta) override { meta_ = meta; }
  void write(const MetricRecord& r) override;
  const std::vector<MetricRecord>& records() const { return records_; }
  const nlohmann::json& meta() const { return meta_; }

 private:
  nlohmann::json meta_;
  std::vector<MetricRecord> records_;
};

// JSON-lines log (first line {"header": ...}) plus an optional CSV file.
class FileMetricSink final : public MetricSink {
 public:
  FileMetricSink(const std::string& jsonl_path, const std::string& csv_path = "");
  void header(const nlohmann::json& meta) override;
  void write(const MetricRecord& r) override;

 private:
  std::ofstream jsonl_;
  std::ofstream csv_;
  std::optional<std::int64_t> last_step_;
};

}  // namespace rtrrl
