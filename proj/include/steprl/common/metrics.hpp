#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace steprl {

struct MetricRecord {
  std::string stage;
  long epoch = 0;  // epoch for supervised stages, update index for PPO
  std::string split;
  std::string metric;
  double value = 0.0;
};

// Line-delimited metric stream {stage, epoch, split, metric, value}. Keeps an
// in-memory copy; also appends to a file when one is attached.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::filesystem::path& path) { attach(path); }

  void attach(const std::filesystem::path& path, bool append = false) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
  }

  void log(const std::string& stage, long epoch, const std::string& split, const std::string& metric, double value) {
    records_.push_back({stage, epoch, split, metric, value});
    if (out_.is_open()) {
      nlohmann::ordered_json j;
      j["stage"] = stage;
      j["epoch"] = epoch;
      j["split"] = split;
      j["metric"] = metric;
      j["value"] = value;
      out_ << j.dump() << '\n';
      out_.flush();
    }
  }

  const std::vector<MetricRecord>& records() const { return records_; }

  // Values of one metric in logging order.
  std::vector<double> series(const std::string& split, const std::string& metric) const {
    std::vector<double> v;
    for (const auto& r : records_)
      if (r.split == split && r.metric == metric) v.push_back(r.value);
    return v;
  }

 private:
  std::vector<MetricRecord> records_;
  std::ofstream out_;
};

}  // namespace steprl
