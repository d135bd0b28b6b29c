#include <fstream>
#include <sstream>

#include "doctest.h"
#include "steprl/harness/pipeline.hpp"

using namespace steprl;
using namespace steprl::harness;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("steprl_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

json tiny_config() {
  return json::parse(R"({
    "corpus": {"sft": {"simple": 20, "complex": 20}, "sft_val": {"simple": 4, "complex": 4},
               "rm": {"simple": 20, "complex": 20}, "rm_val": {"simple": 6, "complex": 6},
               "eval": {"simple": 4, "complex": 4}},
    "model": {"d": 8, "layers": 1, "heads": 2},
    "sft": {"epochs": 1, "batch_size": 8, "batch_divisor": 1},
    "rm": {"orm": {"epochs": 1}, "prm": {"epochs": 1}},
    "ppo": {"iterations": 1, "ppo_epochs": 1, "minibatches": 1, "max_new": 12,
            "schemes": {"orm": {"batch_size": 2}, "prm_avg": {"batch_size": 2}, "prm_prod": {"batch_size": 2},
                        "prm_max": {"batch_size": 2}, "prm_min": {"batch_size": 2}}},
    "ablation": {"scheme": "prm_min"}
  })");
}

ResultRow row(std::string scheme, std::string mix, std::string fam, double acc) {
  ResultRow r;
  r.scheme = std::move(scheme);
  r.prompt_mix = std::move(mix);
  r.eval_family = std::move(fam);
  r.accuracy = acc;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config layers: defaults, file, overrides") {
  const json cfg = resolve_config_json(json::parse(R"({"model": {"d": 32}, "seed": 5})"), json{{"seed", 9}});
  CHECK(cfg["model"]["d"] == 32);
  CHECK(cfg["model"]["layers"] == default_config()["model"]["layers"]);
  CHECK(cfg["seed"] == 9);
  CHECK_THROWS_AS(resolve_config_json(json::parse(R"({"ppo": {"prompt_mix": "both"}})")), HarnessError);
  CHECK_THROWS_AS(resolve_config_json(json::parse(R"({"model": {"d": 30, "heads": 4}})")), HarnessError);
  CHECK_THROWS_AS(resolve_config_json(json::parse(R"({"ablation": {"scheme": "prm_median"}})")), HarnessError);
  try {
    resolve_config("/nonexistent/steprl.json");
    FAIL("expected an error");
  } catch (const HarnessError& e) {
    CHECK(e.kind() == "config");
  }
}

TEST_CASE("per-scheme ppo settings") {
  const json cfg = resolve_config_json(json::object());
  const auto mx = ppo_config(cfg, reward::Kind::PrmMax, "mixed");
  CHECK(mx.batch_size == 160);
  CHECK(mx.critic_lr == 5e-5);
  CHECK(mx.simple_fraction == 0.5);
  const auto pr = ppo_config(cfg, reward::Kind::PrmProd, "simple-only");
  CHECK(pr.batch_size == 126);
  CHECK(pr.critic_lr == 1e-4);
  CHECK(pr.simple_fraction == 1.0);
  CHECK(ppo_config(cfg, reward::Kind::PrmProd, "complex-only").simple_fraction == 0.0);
  CHECK(pr.seed != mx.seed);
  CHECK(reward_scheme(cfg, reward::Kind::PrmMin).kind == reward::Kind::PrmMin);
}

TEST_CASE("run id") {
  const json a = resolve_config_json(json::object());
  CHECK(run_id(a) == run_id(resolve_config_json(json::object())));
  CHECK(run_id(a) != run_id(resolve_config_json(json{{"seed", 2}})));
  CHECK(run_id(a).rfind("run-", 0) == 0);
  CHECK(run_id(resolve_config_json(json{{"run_id", "mine"}})) == "mine");
}

TEST_CASE("results csv round trip and plot rows") {
  ResultsTable t;
  t.rows.push_back(row("sft", "-", "simple", 0.1));
  auto r = row("prm_avg", "mixed", "complex", 1.0 / 3.0);
  r.mean_kl = 0.1 + 0.2;
  r.mean_aggregate = -1e-17;
  t.rows.push_back(r);
  auto f = row("orm", "mixed", "simple", 0.0);
  f.status = "failed";
  f.error = "non-finite gradient, \"quoted\"";
  t.rows.push_back(f);
  CHECK(parse_csv(to_csv(t)) == t);
  CHECK(results_from_json(json::parse(to_json(t).dump())) == t);
  const std::string plot = to_plot_csv(t);
  CHECK(std::count(plot.begin(), plot.end(), '\n') == 1 + 4 * 3);
  CHECK_THROWS_AS(parse_csv("a,b\n"), std::invalid_argument);
  CHECK_THROWS_AS(emit_report(ResultsTable{}, json::object(), scratch("empty"), "x"), std::invalid_argument);
}

TEST_CASE("mixing verdict") {
  ResultsTable t;
  for (const char* fam : {"simple", "complex"}) {
    t.rows.push_back(row("prm_prod", "simple-only", fam, 0.5));
    t.rows.push_back(row("prm_prod", "complex-only", fam, 0.4));
  }
  t.rows.push_back(row("prm_prod", "mixed", "simple", 0.5));  // tie is not a win
  t.rows.push_back(row("prm_prod", "mixed", "complex", 0.45));
  CHECK_FALSE(mixing_verdict(t, "prm_prod").pass);
  t.rows.back().accuracy = 0.55;
  const auto v = mixing_verdict(t, "prm_prod");
  CHECK(v.pass);
  CHECK(v.families_won == std::vector<std::string>{"complex"});
  t.rows.back().status = "failed";
  CHECK_FALSE(mixing_verdict(t, "prm_prod").pass);
  CHECK_FALSE(mixing_verdict(t, "orm").pass);
}

TEST_CASE("pipeline stages, reuse and errors") {
  const fs::path root = scratch("pipe");
  const json cfg = resolve_config_json(tiny_config());
  Pipeline p(cfg, root, false);
  CHECK(p.dir() == root / run_id(cfg));
  CHECK(fs::exists(p.dir() / "config.json"));

  const auto files = p.gen_data(true);
  CHECK(Pipeline::stage_complete(p.dir() / "data"));
  const std::string before = slurp(files.rm);
  p.gen_data(false);  // reused, not rewritten
  CHECK(slurp(files.rm) == before);

  // A snapshot with a different config under the same id is refused.
  json other = cfg;
  other["run_id"] = run_id(cfg);
  other["seed"] = 77;
  CHECK_THROWS_AS(Pipeline(other, root, false), HarnessError);

  // External artifacts must exist before anything runs.
  json ext = cfg;
  ext["artifacts"]["orm"] = (root / "missing.ckpt").string();
  try {
    Pipeline bad(ext, root, false);
    FAIL("expected an error");
  } catch (const HarnessError& e) {
    CHECK(e.kind() == "missing_dependency");
  }

  CHECK_THROWS_AS(p.report(), HarnessError);

  // The ablation exercises the whole chain on a toy budget.
  const auto t = p.ablate_mixing();
  CHECK(t.rows.size() == 6);
  for (const auto& r : t.rows) CHECK(r.status == "ok");
  CHECK(fs::exists(p.dir() / "report" / "ablation.csv"));
  CHECK(parse_csv(slurp(p.dir() / "report" / "ablation.csv")) == t);
  for (const char* stage : {"sft", "rm_orm", "rm_prm", "ppo/prm_min__mixed", "ppo/prm_min__simple-only"})
    CHECK(Pipeline::stage_complete(p.dir() / stage));
  CHECK_FALSE(Pipeline::stage_complete(p.dir() / "ppo" / "orm__mixed"));

  const auto cmp = p.compare_schemes();
  REQUIRE(cmp.rows.size() == 12);
  // Baseline rows are the SFT checkpoint's own accuracy.
  for (auto [fam, idx] : {std::pair{synth::Family::Simple, 0}, std::pair{synth::Family::Complex, 1}}) {
    const auto m = p.evaluate(p.dir() / "sft" / "model.ckpt", fam);
    CHECK(cmp.rows[static_cast<std::size_t>(idx)].scheme == "sft");
    CHECK(cmp.rows[static_cast<std::size_t>(idx)].accuracy == m.accuracy);
  }
  // Accuracies recomputed from the per-prompt records.
  for (const auto& r : cmp.rows) {
    const fs::path dir = r.scheme == "sft" ? p.dir() / "baseline" : p.dir() / "ppo" / (r.scheme + "__" + r.prompt_mix);
    std::ifstream in(dir / ("eval_" + r.eval_family + ".jsonl"));
    std::string line;
    double correct = 0, n = 0;
    while (std::getline(in, line)) {
      correct += json::parse(line)["correct"].get<bool>();
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(std::abs(correct / n - r.accuracy) <= 1e-12);
  }
  // Every declared input exists.
  for (const auto& e : fs::recursive_directory_iterator(p.dir()))
    if (e.path().filename() == "manifest.json")
      for (const auto& in : json::parse(slurp(e.path()))["inputs"]) {
        const fs::path ip = in.get<std::string>();
        CHECK(fs::exists(ip.is_absolute() ? ip : p.dir() / ip));
      }
  // Report regeneration is idempotent.
  const std::string csv = slurp(p.dir() / "report" / "compare.csv");
  const std::string sum = slurp(p.dir() / "report" / "compare_summary.json");
  p.report();
  CHECK(slurp(p.dir() / "report" / "compare.csv") == csv);
  CHECK(slurp(p.dir() / "report" / "compare_summary.json") == sum);

  // Deleting one PPO cell and resuming reruns only that cell.
  const auto sft_time = fs::last_write_time(p.dir() / "sft" / "model.ckpt");
  const auto prm_time = fs::last_write_time(p.dir() / "ppo" / "prm_avg__mixed" / "policy.ckpt");
  const std::string orm_policy = slurp(p.dir() / "ppo" / "orm__mixed" / "policy.ckpt");
  fs::remove_all(p.dir() / "ppo" / "orm__mixed");
  Pipeline resumed(cfg, root, true);
  CHECK(resumed.compare_schemes() == cmp);
  CHECK(fs::last_write_time(p.dir() / "sft" / "model.ckpt") == sft_time);
  CHECK(fs::last_write_time(p.dir() / "ppo" / "prm_avg__mixed" / "policy.ckpt") == prm_time);
  CHECK(slurp(p.dir() / "ppo" / "orm__mixed" / "policy.ckpt") == orm_policy);
  fs::remove_all(root);
}

TEST_CASE("shipped configs resolve") {
  const fs::path dir = fs::path(STEPRL_SOURCE_DIR) / "configs";
  CHECK(resolve_config(dir / "default.json") == resolve_config_json(json::object()));
  const json smoke = resolve_config(dir / "smoke.json");
  CHECK(run_id(smoke) == "smoke");
  CHECK(smoke["model"]["d"] == 32);
}

TEST_CASE("a failing cell becomes failed rows and the sweep continues") {
  const fs::path root = scratch("failcell");
  fs::create_directories(root);
  {
    std::ofstream junk(root / "junk.ckpt");
    junk << "not a checkpoint";
  }
  json cfg = tiny_config();
  cfg["artifacts"]["prm"] = (root / "junk.ckpt").string();
  Pipeline p(resolve_config_json(cfg), root, false);
  const auto t = p.compare_schemes();
  REQUIRE(t.rows.size() == 12);
  for (const auto& r : t.rows) {
    const bool prm = r.scheme.rfind("prm_", 0) == 0;
    CHECK(r.status == (prm ? "failed" : "ok"));
    if (prm) CHECK_FALSE(r.error.empty());
  }
  const json summary = json::parse(slurp(p.dir() / "report" / "compare_summary.json"));
  CHECK(summary["failed_rows"] == 8);
  fs::remove_all(root);
}
