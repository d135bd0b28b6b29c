#include "steprl/harness/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "steprl/common/rng.hpp"

namespace steprl::harness {

using nlohmann::json;

nlohmann::json default_config() {
  return json::parse(R"({
  "seed": 1,
  "corpus": {
    "sft": {"simple": 3000, "complex": 3000},
    "sft_val": {"simple": 200, "complex": 200},
    "rm": {"simple": 3000, "complex": 3000},
    "rm_val": {"simple": 500, "complex": 500},
    "eval": {"simple": 200, "complex": 200},
    "corruption_fraction": 0.5
  },
  "model": {"vocab": 22, "d": 64, "layers": 2, "heads": 2, "context": 160, "init_std": 0.1},
  "sft": {"epochs": 30, "batch_size": 152, "batch_divisor": 19, "lr": 6e-5, "lr_scale": 16.0,
          "weight_decay": 0.1, "max_grad_norm": 1.0, "order": "mixed"},
  "rm": {
    "init": "sft",
    "orm": {"epochs": 3, "batch_size": 32, "lr": 1e-4, "lr_scale": 1.0, "weight_decay": 0.1,
            "max_grad_norm": 1.0, "balanced": true, "shuffle_labels": false},
    "prm": {"epochs": 3, "batch_size": 32, "lr": 1e-4, "lr_scale": 1.0, "weight_decay": 0.1,
            "max_grad_norm": 1.0, "balanced": true, "shuffle_labels": false}
  },
  "reward": {"kl_coef": 0.2, "reward_clip": 0.7, "empty_steps_fallback": "zero"},
  "ppo": {
    "gamma": 1.0, "lambda": 0.95, "clip": 0.2, "value_clip": 0.2,
    "batch_divisor": 8, "ppo_epochs": 4, "minibatches": 4,
    "lr_scale": 1.0, "weight_decay": 0.1, "cosine": true, "max_grad_norm": 1.0,
    "iterations": 30, "whiten": true, "temperature": 1.0, "max_new": 0,
    "eval_every": 0, "eval_subset": 50, "checkpoint_every": 5,
    "prompt_mix": "mixed",
    "schemes": {
      "orm":      {"batch_size": 144, "actor_lr": 1e-4, "critic_lr": 1e-4},
      "prm_avg":  {"batch_size": 144, "actor_lr": 1e-4, "critic_lr": 1e-4},
      "prm_prod": {"batch_size": 126, "actor_lr": 1e-4, "critic_lr": 1e-4},
      "prm_max":  {"batch_size": 160, "actor_lr": 1e-4, "critic_lr": 5e-5},
      "prm_min":  {"batch_size": 144, "actor_lr": 1e-4, "critic_lr": 5e-5}
    }
  },
  "ablation": {"scheme": "prm_prod", "mixes": ["simple-only", "complex-only", "mixed"]},
  "artifacts": {}
})");
}

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw HarnessError("config", msg); }

}  // namespace

nlohmann::json resolve_config_json(const json& user, const json& overrides) {
  if (!user.is_null() && !user.is_object()) config_error("config document must be a JSON object");
  json cfg = default_config();
  if (user.is_object()) cfg.merge_patch(user);
  if (overrides.is_object()) cfg.merge_patch(overrides);
  validate_config(cfg);
  return cfg;
}

nlohmann::json resolve_config(const std::filesystem::path& file, const json& overrides) {
  json user = json::object();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) config_error("cannot read config file " + file.string());
    try {
      user = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
      config_error("cannot parse config file " + file.string() + ": " + e.what());
    }
  }
  return resolve_config_json(user, overrides);
}

double simple_fraction(const std::string& mix) {
  if (mix == "simple-only") return 1.0;
  if (mix == "complex-only") return 0.0;
  if (mix == "mixed") return 0.5;
  config_error("unknown prompt mix '" + mix + "' (simple-only, complex-only, mixed)");
}

synth::CorpusSpec corpus_spec(const json& cfg) {
  const json& c = cfg.at("corpus");
  synth::CorpusSpec s;
  s.seed = cfg.at("seed").get<std::uint64_t>();
  auto counts = [&](const char* k, synth::FamilyCounts& fc) {
    if (!c.contains(k)) return;
    fc.simple = c.at(k).value("simple", fc.simple);
    fc.complex = c.at(k).value("complex", fc.complex);
    if (fc.simple < 0 || fc.complex < 0) config_error(std::string("corpus.") + k + " counts must be >= 0");
  };
  counts("sft", s.sft);
  counts("sft_val", s.sft_val);
  counts("rm", s.rm);
  counts("rm_val", s.rm_val);
  counts("eval", s.eval);
  s.corruption_fraction = c.value("corruption_fraction", s.corruption_fraction);
  if (s.corruption_fraction < 0.0 || s.corruption_fraction > 1.0) config_error("corpus.corruption_fraction must be in [0, 1]");
  return s;
}

nn::ModelConfig model_config(const json& cfg) { return nn::model_config_from_json(cfg.at("model")); }

sft::SftConfig sft_config(const json& cfg) {
  json j = cfg.at("sft");
  j["seed"] = derive_seed(cfg.at("seed").get<std::uint64_t>(), hash_tag("sft"));
  return sft::sft_config_from_json(j);
}

rm::RmConfig rm_config(const json& cfg, rm::Objective obj) {
  const std::string key(rm::objective_name(obj));
  json j = cfg.at("rm").at(key);
  j["seed"] = derive_seed(cfg.at("seed").get<std::uint64_t>(), hash_tag("rm_" + key));
  return rm::rm_config_from_json(j, obj);
}

reward::RewardScheme reward_scheme(const json& cfg, reward::Kind kind) {
  json j = cfg.at("reward");
  j["reward_scheme"] = reward::kind_name(kind);
  return reward::reward_scheme_from_json(j);
}

ppo::PpoConfig ppo_config(const json& cfg, reward::Kind kind, const std::string& mix) {
  json j = cfg.at("ppo");
  const std::string name(reward::kind_name(kind));
  if (j.contains("schemes") && j["schemes"].contains(name)) j.merge_patch(j["schemes"][name]);
  j.erase("schemes");
  j["simple_fraction"] = simple_fraction(mix);
  j["seed"] = derive_seed(cfg.at("seed").get<std::uint64_t>(), hash_tag("ppo_" + name), hash_tag(mix));
  return ppo::ppo_config_from_json(j);
}

void validate_config(const json& cfg) {
  try {
    if (!cfg.at("seed").is_number_unsigned() && !(cfg.at("seed").is_number_integer() && cfg.at("seed").get<long>() >= 0))
      config_error("seed must be a non-negative integer");
    corpus_spec(cfg);
    const auto mc = model_config(cfg);
    const auto sc = sft_config(cfg);
    (void)sc;
    rm_config(cfg, rm::Objective::Orm);
    rm_config(cfg, rm::Objective::Prm);
    const std::string init = cfg.at("rm").value("init", std::string("sft"));
    if (init != "sft" && init != "scratch") config_error("rm.init must be sft or scratch");
    for (auto k : {reward::Kind::Orm, reward::Kind::PrmAvg, reward::Kind::PrmProd, reward::Kind::PrmMax, reward::Kind::PrmMin}) {
      reward_scheme(cfg, k);
      ppo_config(cfg, k, cfg.at("ppo").value("prompt_mix", std::string("mixed")));
    }
    reward::parse_kind(cfg.at("ablation").value("scheme", std::string("prm_prod")));
    for (const auto& m : cfg.at("ablation").at("mixes")) simple_fraction(m.get<std::string>());
    if (mc.context < 32) config_error("model.context must be at least 32");
  } catch (const HarnessError&) {
    throw;
  } catch (const std::exception& e) {
    config_error(std::string("invalid config: ") + e.what());
  }
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string run_id(const json& cfg) {
  if (cfg.contains("run_id") && cfg["run_id"].is_string() && !cfg["run_id"].get<std::string>().empty())
    return cfg["run_id"].get<std::string>();
  json c = cfg;
  c.erase("run_id");
  char buf[32];
  std::snprintf(buf, sizeof buf, "run-%012llx",
                static_cast<unsigned long long>(fnv1a(c.dump()) & 0xffffffffffffULL));
  return buf;
}

}  // namespace steprl::harness
