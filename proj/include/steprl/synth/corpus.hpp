#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "steprl/synth/task.hpp"

namespace steprl::synth {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One corpus line: a problem, a (possibly corrupted) solution and labels.
struct CorpusRecord {
  Problem problem;
  std::int64_t seed = 0;  // problem seed index; splits use disjoint ranges
  StepwiseSolution solution;
  bool operator==(const CorpusRecord&) const = default;
};

nlohmann::ordered_json to_json(const CorpusRecord& r);
// Parses and re-validates labels against the oracle.
CorpusRecord record_from_json(const nlohmann::json& j);

struct FamilyCounts {
  int simple = 0;
  int complex = 0;
  int total() const { return simple + complex; }
};

struct CorpusSpec {
  std::uint64_t seed = 1;
  FamilyCounts sft{3000, 3000};
  FamilyCounts sft_val{200, 200};
  FamilyCounts rm{3000, 3000};
  FamilyCounts rm_val{500, 500};
  FamilyCounts eval{200, 200};
  double corruption_fraction = 0.5;
};

// Problem seed ranges per split; train and evaluation ranges never overlap.
namespace split_base {
inline constexpr std::int64_t kSft = 0;
inline constexpr std::int64_t kSftVal = 200'000'000;
inline constexpr std::int64_t kRm = 300'000'000;
inline constexpr std::int64_t kRmVal = 400'000'000;
inline constexpr std::int64_t kEval = 1'000'000'000;
}  // namespace split_base

// Problem for a seed index under the corpus seed.
Problem problem_for(Family family, std::uint64_t corpus_seed, std::int64_t seed_index);

// Correct solutions only.
std::vector<CorpusRecord> make_clean_split(const CorpusSpec& spec, const FamilyCounts& counts,
                                           std::int64_t base);
// Exactly round(fraction * count) corrupted records per family.
std::vector<CorpusRecord> make_rm_split(const CorpusSpec& spec, const FamilyCounts& counts,
                                        std::int64_t base);

struct CorpusFiles {
  std::filesystem::path sft, sft_val, rm, rm_val, eval_simple, eval_complex;
};

CorpusFiles corpus_paths(const std::filesystem::path& dir);
CorpusFiles build_corpus(const CorpusSpec& spec, const std::filesystem::path& dir);

void write_records(const std::filesystem::path& path, const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> read_records(const std::filesystem::path& path);

}  // namespace steprl::synth
