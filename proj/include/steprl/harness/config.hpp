#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "steprl/nn/model.hpp"
#include "steprl/ppo/ppo.hpp"
#include "steprl/reward/reward.hpp"
#include "steprl/rm/rm.hpp"
#include "steprl/sft/sft.hpp"
#include "steprl/synth/corpus.hpp"

namespace steprl::harness {

// Errors carry a short machine-readable kind for the CLI error record.
class HarnessError : public std::runtime_error {
 public:
  HarnessError(std::string kind, const std::string& msg) : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

// Base layer: the full-size defaults every config is merged onto.
nlohmann::json default_config();

// defaults <- file (JSON merge patch) <- overrides. Throws HarnessError
// ("config") on unreadable or invalid input.
nlohmann::json resolve_config(const std::filesystem::path& file, const nlohmann::json& overrides = {});
nlohmann::json resolve_config_json(const nlohmann::json& user, const nlohmann::json& overrides = {});

// Checks every section parses; throws HarnessError("config").
void validate_config(const nlohmann::json& cfg);

// Explicit "run_id" when set, otherwise a hash of the resolved config.
std::string run_id(const nlohmann::json& cfg);

// Typed views of the resolved document.
synth::CorpusSpec corpus_spec(const nlohmann::json& cfg);
nn::ModelConfig model_config(const nlohmann::json& cfg);
sft::SftConfig sft_config(const nlohmann::json& cfg);
rm::RmConfig rm_config(const nlohmann::json& cfg, rm::Objective obj);
reward::RewardScheme reward_scheme(const nlohmann::json& cfg, reward::Kind kind);
// Common PPO settings with the per-scheme overrides applied and the prompt
// mix translated to a Simple fraction.
ppo::PpoConfig ppo_config(const nlohmann::json& cfg, reward::Kind kind, const std::string& mix);

// simple-only, complex-only, mixed
double simple_fraction(const std::string& mix);

std::uint64_t fnv1a(std::string_view bytes);

}  // namespace steprl::harness
