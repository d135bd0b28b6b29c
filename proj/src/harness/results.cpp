#include "steprl/harness/results.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace steprl::harness {

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// Fields never contain commas except error messages, which are quoted.
std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool q = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (q) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        q = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      q = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

const char* kHeader = "scheme,prompt_mix,eval_family,accuracy,step_correctness,mean_kl,mean_aggregate,status,error";

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

}  // namespace

nlohmann::ordered_json to_json(const ResultsTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json j;
    j["scheme"] = r.scheme;
    j["prompt_mix"] = r.prompt_mix;
    j["eval_family"] = r.eval_family;
    j["accuracy"] = r.accuracy;
    j["step_correctness"] = r.step_correctness;
    j["mean_kl"] = r.mean_kl;
    j["mean_aggregate"] = r.mean_aggregate;
    j["status"] = r.status;
    j["error"] = r.error;
    rows.push_back(j);
  }
  return {{"rows", rows}};
}

ResultsTable results_from_json(const nlohmann::json& j) {
  ResultsTable t;
  for (const auto& r : j.at("rows")) {
    ResultRow row;
    row.scheme = r.at("scheme").get<std::string>();
    row.prompt_mix = r.at("prompt_mix").get<std::string>();
    row.eval_family = r.at("eval_family").get<std::string>();
    row.accuracy = r.at("accuracy").get<double>();
    row.step_correctness = r.at("step_correctness").get<double>();
    row.mean_kl = r.at("mean_kl").get<double>();
    row.mean_aggregate = r.at("mean_aggregate").get<double>();
    row.status = r.value("status", std::string("ok"));
    row.error = r.value("error", std::string());
    t.rows.push_back(row);
  }
  return t;
}

std::string to_csv(const ResultsTable& t) {
  std::ostringstream os;
  os << kHeader << '\n';
  for (const auto& r : t.rows)
    os << r.scheme << ',' << r.prompt_mix << ',' << r.eval_family << ',' << fmt(r.accuracy) << ','
       << fmt(r.step_correctness) << ',' << fmt(r.mean_kl) << ',' << fmt(r.mean_aggregate) << ',' << r.status << ','
       << quote(r.error) << '\n';
  return os.str();
}

ResultsTable parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kHeader) throw std::invalid_argument("results csv: unexpected header");
  ResultsTable t;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw std::invalid_argument("results csv: expected 9 fields, got " + std::to_string(f.size()));
    ResultRow r;
    r.scheme = f[0];
    r.prompt_mix = f[1];
    r.eval_family = f[2];
    r.accuracy = std::stod(f[3]);
    r.step_correctness = std::stod(f[4]);
    r.mean_kl = std::stod(f[5]);
    r.mean_aggregate = std::stod(f[6]);
    r.status = f[7];
    r.error = f[8];
    t.rows.push_back(r);
  }
  return t;
}

std::string to_plot_csv(const ResultsTable& t) {
  std::ostringstream os;
  os << "scheme,prompt_mix,family,metric,value\n";
  for (const auto& r : t.rows) {
    const double vals[4] = {r.accuracy, r.step_correctness, r.mean_kl, r.mean_aggregate};
    for (std::size_t m = 0; m < plot_metrics().size(); ++m)
      os << r.scheme << ',' << r.prompt_mix << ',' << r.eval_family << ',' << plot_metrics()[m] << ',' << fmt(vals[m]) << '\n';
  }
  return os.str();
}

MixingVerdict mixing_verdict(const ResultsTable& t, const std::string& scheme) {
  MixingVerdict v;
  std::map<std::string, std::map<std::string, const ResultRow*>> by_family;
  for (const auto& r : t.rows)
    if (r.scheme == scheme && r.status == "ok") by_family[r.eval_family][r.prompt_mix] = &r;
  for (const auto& [fam, mixes] : by_family) {
    auto get = [&](const char* m) -> const ResultRow* {
      auto it = mixes.find(m);
      return it == mixes.end() ? nullptr : it->second;
    };
    const ResultRow *mixed = get("mixed"), *s = get("simple-only"), *c = get("complex-only");
    if (mixed && s && c && mixed->accuracy > s->accuracy && mixed->accuracy > c->accuracy) v.families_won.push_back(fam);
  }
  v.pass = !v.families_won.empty();
  return v;
}

ReportFiles emit_report(const ResultsTable& t, const nlohmann::json& extra, const std::filesystem::path& dir,
                        const std::string& stem) {
  if (t.rows.empty()) throw std::invalid_argument("emit_report: empty results table");
  std::filesystem::create_directories(dir);
  ReportFiles f{dir / (stem + ".csv"), dir / (stem + "_summary.json"), dir / (stem + "_plot.csv")};
  write_text(f.csv, to_csv(t));
  write_text(f.plot, to_plot_csv(t));

  nlohmann::ordered_json s;
  s["table"] = to_json(t)["rows"];
  // Accuracy ordering per family, best first.
  std::map<std::string, std::vector<const ResultRow*>> fam;
  for (const auto& r : t.rows)
    if (r.status == "ok") fam[r.eval_family].push_back(&r);
  nlohmann::ordered_json order;
  for (auto& [name, rows] : fam) {
    std::stable_sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->accuracy > b->accuracy; });
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (auto* r : rows) arr.push_back(r->scheme + "/" + r->prompt_mix);
    order[name] = arr;
  }
  s["accuracy_order"] = order;
  long failed = 0;
  for (const auto& r : t.rows) failed += r.status != "ok";
  s["failed_rows"] = failed;
  if (extra.is_object())
    for (auto it = extra.begin(); it != extra.end(); ++it) s[it.key()] = it.value();
  write_text(f.summary, s.dump(2) + "\n");
  return f;
}

}  // namespace steprl::harness
