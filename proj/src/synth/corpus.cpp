#include "steprl/synth/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "steprl/common/rng.hpp"

namespace steprl::synth {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const CorpusRecord& r) {
  ordered_json j;
  j["prompt"] = r.problem.prompt_text;
  ordered_json steps = ordered_json::array();
  for (const auto& s : r.solution.steps) {
    ordered_json st;
    st["lhs"] = s.lhs;
    st["op"] = std::string(1, op_symbol(s.op));
    st["operand"] = s.operand;
    st["result"] = s.result;
    steps.push_back(st);
  }
  j["steps"] = steps;
  j["step_labels"] = r.solution.step_labels;
  j["final_answer"] = r.solution.final_answer;
  j["answer_correct"] = r.solution.answer_correct;
  j["family"] = std::string(family_name(r.problem.family));
  j["seed"] = r.seed;
  return j;
}

CorpusRecord record_from_json(const json& j) {
  CorpusRecord r;
  const Family fam = parse_family(j.at("family").get<std::string>());
  r.problem = parse_prompt(j.at("prompt").get<std::string>(), fam);
  r.seed = j.at("seed").get<std::int64_t>();
  for (const auto& st : j.at("steps")) {
    const auto op_str = st.at("op").get<std::string>();
    const auto op = op_str.size() == 1 ? op_from_symbol(op_str[0]) : std::nullopt;
    if (!op) throw EncodingError("bad operator in record: " + op_str);
    r.solution.steps.push_back({st.at("lhs").get<std::int64_t>(), *op, st.at("operand").get<std::int64_t>(),
                                st.at("result").get<std::int64_t>()});
  }
  r.solution.step_labels = j.at("step_labels").get<std::vector<bool>>();
  r.solution.final_answer = j.at("final_answer").get<std::int64_t>();
  r.solution.answer_correct = j.at("answer_correct").get<bool>();

  if (r.solution.steps.empty()) throw EncodingError("record without steps");
  if (label_steps(r.problem, r.solution) != r.solution.step_labels)
    throw EncodingError("record step labels disagree with the oracle: " + r.problem.prompt_text);
  // answer_correct is the solution-level label: a corrupted chain stays
  // incorrect even when a later mod step happens to restore the answer.
  const bool all_steps = std::all_of(r.solution.step_labels.begin(), r.solution.step_labels.end(), [](bool b) { return b; });
  const bool oracle_answer = r.solution.final_answer == solve_reference(r.problem).final_answer;
  if (r.solution.answer_correct != (all_steps && oracle_answer))
    throw EncodingError("record answer label disagrees with the oracle: " + r.problem.prompt_text);
  return r;
}

Problem problem_for(Family family, std::uint64_t corpus_seed, std::int64_t seed_index) {
  return generate_problem(family, derive_seed(corpus_seed, static_cast<std::uint64_t>(seed_index)));
}

namespace {

template <typename F>
void for_each_family(const FamilyCounts& counts, F&& f) {
  f(Family::Simple, counts.simple);
  f(Family::Complex, counts.complex);
}

}  // namespace

std::vector<CorpusRecord> make_clean_split(const CorpusSpec& spec, const FamilyCounts& counts,
                                           std::int64_t base) {
  std::vector<CorpusRecord> out;
  out.reserve(static_cast<std::size_t>(counts.total()));
  for_each_family(counts, [&](Family fam, int n) {
    for (int i = 0; i < n; ++i) {
      CorpusRecord r;
      r.seed = base + i;
      r.problem = problem_for(fam, spec.seed, r.seed);
      r.solution = solve_reference(r.problem);
      out.push_back(std::move(r));
    }
  });
  return out;
}

std::vector<CorpusRecord> make_rm_split(const CorpusSpec& spec, const FamilyCounts& counts,
                                        std::int64_t base) {
  if (spec.corruption_fraction < 0.0 || spec.corruption_fraction > 1.0)
    throw std::invalid_argument("corruption fraction must lie in [0, 1]");
  std::vector<CorpusRecord> out;
  for_each_family(counts, [&](Family fam, int n) {
    const auto n_corrupt = static_cast<int>(std::llround(spec.corruption_fraction * n));
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng pick(derive_seed(spec.seed, hash_tag("rm-corrupt-pick"), static_cast<std::uint64_t>(base) + (fam == Family::Simple ? 0 : 1)));
    shuffle(order, pick);
    std::vector<bool> corrupt(static_cast<std::size_t>(n), false);
    for (int k = 0; k < n_corrupt; ++k) corrupt[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;

    for (int i = 0; i < n; ++i) {
      CorpusRecord r;
      r.seed = base + i;
      r.problem = problem_for(fam, spec.seed, r.seed);
      r.solution = solve_reference(r.problem);
      if (corrupt[static_cast<std::size_t>(i)]) {
        const std::uint64_t rs = derive_seed(spec.seed, hash_tag("rm-corrupt-step"), static_cast<std::uint64_t>(r.seed));
        Rng step_rng(rs);
        const int k = static_cast<int>(step_rng.uniform_int(0, static_cast<std::int64_t>(r.solution.steps.size()) - 1));
        r.solution = corrupt_solution(r.solution, k, rs);
      }
      out.push_back(std::move(r));
    }
  });
  return out;
}

CorpusFiles corpus_paths(const std::filesystem::path& dir) {
  return {dir / "sft.jsonl",    dir / "sft_val.jsonl",     dir / "rm.jsonl",
          dir / "rm_val.jsonl", dir / "eval_simple.jsonl", dir / "eval_complex.jsonl"};
}

void write_records(const std::filesystem::path& path, const std::vector<CorpusRecord>& records) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& r : records) os << to_json(r).dump() << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

std::vector<CorpusRecord> read_records(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::vector<CorpusRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(json::parse(line)));
  }
  return out;
}

CorpusFiles build_corpus(const CorpusSpec& spec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const CorpusFiles files = corpus_paths(dir);
  write_records(files.sft, make_clean_split(spec, spec.sft, split_base::kSft));
  write_records(files.sft_val, make_clean_split(spec, spec.sft_val, split_base::kSftVal));
  write_records(files.rm, make_rm_split(spec, spec.rm, split_base::kRm));
  write_records(files.rm_val, make_rm_split(spec, spec.rm_val, split_base::kRmVal));
  write_records(files.eval_simple, make_clean_split(spec, {spec.eval.simple, 0}, split_base::kEval));
  write_records(files.eval_complex, make_clean_split(spec, {0, spec.eval.complex}, split_base::kEval));
  return files;
}

}  // namespace steprl::synth
