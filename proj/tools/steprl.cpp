// steprl: command line driver for the data / SFT / RM / PPO pipeline.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "steprl/common/alloc.hpp"
#include "steprl/harness/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace steprl;

namespace {

struct Common {
  std::string config;
  std::string out = "runs";
  long long seed = -1;
  bool resume = false;
};

int exit_code(const std::string& kind) {
  if (kind == "config" || kind == "usage") return 2;
  if (kind == "missing_dependency") return 3;
  if (kind == "numeric") return 4;
  return 1;
}

harness::Pipeline open(const Common& c) {
  json over = json::object();
  if (c.seed >= 0) over["seed"] = c.seed;
  return harness::Pipeline(harness::resolve_config(c.config, over), c.out, c.resume);
}

void print(const ordered_json& j) { std::cout << j.dump(2) << std::endl; }

ordered_json base_result(const std::string& cmd, const harness::Pipeline& p) {
  ordered_json r;
  r["status"] = "ok";
  r["command"] = cmd;
  r["run_id"] = p.id();
  r["run_dir"] = p.dir().string();
  return r;
}

ordered_json table_json(const harness::ResultsTable& t) { return harness::to_json(t); }

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Step-level reward shaping pipeline on a synthetic arithmetic task"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&](CLI::App* s) {
    s->add_option("--config", c.config, "JSON config merged onto the defaults")->check(CLI::ExistingFile);
    s->add_option("--seed", c.seed, "global seed override")->check(CLI::NonNegativeNumber);
    s->add_option("--out", c.out, "output root; artifacts go to <out>/<run-id>/");
    s->add_flag("--resume", c.resume, "reuse completed stages and PPO checkpoints");
  };

  auto* gen = app.add_subcommand("gen-data", "write the synthetic corpus");
  auto* sft = app.add_subcommand("train-sft", "supervised fine-tuning");
  auto* rmc = app.add_subcommand("train-rm", "train the outcome or process reward model");
  std::string objective;
  rmc->add_option("--objective", objective)->required()->check(CLI::IsMember({"orm", "prm"}));
  auto* ppo = app.add_subcommand("train-ppo", "PPO with one reward scheme");
  std::string scheme, mix;
  ppo->add_option("--scheme", scheme)->required()->check(CLI::IsMember({"orm", "prm_avg", "prm_prod", "prm_max", "prm_min"}));
  ppo->add_option("--mix", mix, "prompt mix (default: ppo.prompt_mix)")
      ->check(CLI::IsMember({"simple-only", "complex-only", "mixed"}));
  auto* ev = app.add_subcommand("eval", "greedy accuracy on both held-out families");
  std::string checkpoint, name = "sft";
  ev->add_option("--checkpoint", checkpoint, "policy checkpoint (default: the run's SFT model)");
  ev->add_option("--name", name, "subdirectory under eval/");
  auto* cmp = app.add_subcommand("compare-schemes", "SFT baseline and all five schemes on both families");
  auto* abl = app.add_subcommand("ablate-mixing", "prompt-mix ablation for one scheme");
  auto* rep = app.add_subcommand("report", "rebuild CSV/JSON/plot files from stored tables");
  for (auto* s : {gen, sft, rmc, ppo, ev, cmp, abl, rep}) add_common(s);

  std::string sub = "steprl";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    ordered_json err;
    err["error"] = {{"kind", "usage"}, {"message", e.what()}, {"subcommand", sub}};
    std::cout << err.dump() << std::endl;
    return exit_code("usage");
  }
  sub = app.get_subcommands().front()->get_name();

  fs::path run_dir;
  try {
    auto p = open(c);
    run_dir = p.dir();
    ordered_json r = base_result(sub, p);
    if (sub == "gen-data") {
      const auto f = p.gen_data(true);
      r["files"] = {f.sft.string(), f.sft_val.string(), f.rm.string(), f.rm_val.string(), f.eval_simple.string(),
                    f.eval_complex.string()};
    } else if (sub == "train-sft") {
      r["checkpoint"] = p.train_sft(true).string();
    } else if (sub == "train-rm") {
      r["checkpoint"] = p.train_rm(rm::parse_objective(objective), true).string();
    } else if (sub == "train-ppo") {
      if (mix.empty()) mix = p.config().at("ppo").value("prompt_mix", std::string("mixed"));
      const auto cell = p.train_ppo(reward::parse_kind(scheme), mix, true);
      std::ifstream in(cell / "summary.json");
      r["cell"] = cell.string();
      r["summary"] = json::parse(in);
    } else if (sub == "eval") {
      const fs::path ck = checkpoint.empty() ? p.train_sft(false) : fs::path(checkpoint);
      if (!fs::exists(ck)) throw harness::HarnessError("missing_dependency", "checkpoint not found: " + ck.string());
      r["eval"] = p.eval_command(ck, name);
    } else if (sub == "compare-schemes") {
      r["table"] = table_json(p.compare_schemes());
    } else if (sub == "ablate-mixing") {
      const auto t = p.ablate_mixing();
      r["table"] = table_json(t);
      const std::string s = p.config().at("ablation").value("scheme", std::string("prm_prod"));
      r["mixing_check_pass"] = harness::mixing_verdict(t, s).pass;
    } else if (sub == "report") {
      r["report"] = p.report();
    }
    print(r);
    return 0;
  } catch (const std::exception& e) {
    std::string kind = "runtime";
    if (const auto* h = dynamic_cast<const harness::HarnessError*>(&e)) kind = h->kind();
    else if (dynamic_cast<const nn::NumericError*>(&e)) kind = "numeric";
    else if (dynamic_cast<const std::invalid_argument*>(&e)) kind = "invalid_argument";
    ordered_json err;
    err["error"] = {{"kind", kind}, {"message", e.what()}, {"subcommand", sub}};
    if (!run_dir.empty()) {
      err["error"]["run_dir"] = run_dir.string();
      std::ofstream f(run_dir / "error.json", std::ios::trunc);
      f << err.dump(2) << '\n';
    }
    std::cout << err.dump() << std::endl;
    return exit_code(kind);
  }
}
