#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "steprl/harness/config.hpp"
#include "steprl/harness/results.hpp"

namespace steprl::harness {

// One run directory <out>/<run-id>/ holding every artifact of a resolved
// config. Stages finish by writing manifest.json; a stage with a manifest
// whose outputs all exist is complete. Dependencies are produced when
// missing and reused when complete. The stage a command asks for is rerun
// unless `resume` is set.
class Pipeline {
 public:
  Pipeline(nlohmann::json cfg, const std::filesystem::path& out_root, bool resume);

  const std::filesystem::path& dir() const { return dir_; }
  const nlohmann::json& config() const { return cfg_; }
  const std::string& id() const { return id_; }

  synth::CorpusFiles gen_data(bool requested = false);
  std::filesystem::path train_sft(bool requested = false);
  std::filesystem::path train_rm(rm::Objective obj, bool requested = false);
  // Returns the cell directory (policy.ckpt, critic.ckpt, eval records, summary.json).
  std::filesystem::path train_ppo(reward::Kind kind, const std::string& mix, bool requested = false);

  // Greedy evaluation of a policy checkpoint on one family's held-out set;
  // per-prompt records go to `records` when non-empty.
  sft::EvalMetrics evaluate(const std::filesystem::path& checkpoint, synth::Family family,
                            const std::filesystem::path& records = {});
  // Evaluates on both families into <run>/eval/<name>/.
  nlohmann::json eval_command(const std::filesystem::path& checkpoint, const std::string& name);

  ResultsTable compare_schemes();
  ResultsTable ablate_mixing();
  // Rebuilds report files from the stored tables.
  nlohmann::json report();

  // True when a stage directory holds a manifest whose outputs exist.
  static bool stage_complete(const std::filesystem::path& stage_dir);

 private:
  std::filesystem::path stage_dir(const std::string& name) const { return dir_ / name; }
  void write_manifest(const std::filesystem::path& stage, const std::string& name,
                      const std::vector<std::filesystem::path>& inputs,
                      const std::vector<std::filesystem::path>& outputs) const;
  bool reuse(const std::filesystem::path& stage, bool requested) const;
  std::filesystem::path external(const std::string& key) const;
  std::filesystem::path sft_checkpoint();
  std::filesystem::path rm_checkpoint(rm::Objective obj);
  std::vector<synth::Problem> eval_problems(synth::Family f);
  ResultRow baseline_row(synth::Family f);
  std::vector<ResultRow> cell_rows(reward::Kind kind, const std::string& mix);

  nlohmann::json cfg_;
  std::string id_;
  std::filesystem::path dir_;
  bool resume_;
};

// Stage names in dependency order, used in manifests.
std::string ppo_cell_name(reward::Kind kind, const std::string& mix);

}  // namespace steprl::harness
