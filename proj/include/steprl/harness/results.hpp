#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace steprl::harness {

struct ResultRow {
  std::string scheme;      // sft for the baseline
  std::string prompt_mix;  // "-" for the baseline
  std::string eval_family;
  double accuracy = 0.0;
  double step_correctness = 0.0;
  double mean_kl = 0.0;
  double mean_aggregate = 0.0;
  std::string status = "ok";  // ok | failed
  std::string error;
  bool operator==(const ResultRow&) const = default;
};

struct ResultsTable {
  std::vector<ResultRow> rows;
  bool operator==(const ResultsTable&) const = default;
};

nlohmann::ordered_json to_json(const ResultsTable& t);
ResultsTable results_from_json(const nlohmann::json& j);

// Comma-separated with a header line. Doubles are written with 17
// significant digits so parsing restores them exactly.
std::string to_csv(const ResultsTable& t);
ResultsTable parse_csv(const std::string& text);

inline const std::vector<std::string>& plot_metrics() {
  static const std::vector<std::string> m{"accuracy", "step_correctness", "mean_kl", "mean_aggregate"};
  return m;
}

// Long format: scheme, prompt_mix, family, metric, value (one line per row
// and metric).
std::string to_plot_csv(const ResultsTable& t);

// Directional mixing check: mixed beats both single-family runs on at least
// one evaluation family. Missing or failed rows make the check fail.
struct MixingVerdict {
  bool pass = false;
  std::vector<std::string> families_won;
};
MixingVerdict mixing_verdict(const ResultsTable& t, const std::string& scheme);

struct ReportFiles {
  std::filesystem::path csv, summary, plot;
};

// Writes <dir>/<stem>.csv, <stem>_summary.json and <stem>_plot.csv.
// Throws std::invalid_argument on an empty table.
ReportFiles emit_report(const ResultsTable& t, const nlohmann::json& extra, const std::filesystem::path& dir,
                        const std::string& stem);

}  // namespace steprl::harness
