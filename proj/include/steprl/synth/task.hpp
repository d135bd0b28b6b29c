#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "steprl/synth/vocab.hpp"

namespace steprl::synth {

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Family { Simple, Complex };

enum class Op : char { Add = '+', Sub = '-', Mul = '*', Mod = '%' };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);
char op_symbol(Op op);
std::optional<Op> op_from_symbol(char c);

// Exact integer arithmetic. Mod is the non-negative residue. Throws
// std::overflow_error when the result leaves the 64-bit range.
std::int64_t apply_op(std::int64_t lhs, Op op, std::int64_t operand);

struct Operation {
  Op op;
  std::int64_t operand;
  bool operator==(const Operation&) const = default;
};

struct Problem {
  Family family = Family::Simple;
  std::int64_t seed_value = 0;
  std::vector<Operation> operations;
  std::string prompt_text;
  bool operator==(const Problem&) const = default;
};

struct Step {
  std::int64_t lhs;
  Op op;
  std::int64_t operand;
  std::int64_t result;
  bool operator==(const Step&) const = default;
};

struct StepwiseSolution {
  std::vector<Step> steps;
  std::int64_t final_answer = 0;
  std::vector<bool> step_labels;
  // Solution-level label: every step correct and the oracle answer reached.
  bool answer_correct = false;
  bool operator==(const StepwiseSolution&) const = default;
};

// Generation limits of one task family.
struct FamilySpec {
  std::int64_t seed_min, seed_max;
  int ops_min, ops_max;
  std::int64_t operand_min, operand_max;
  std::vector<Op> operators;
  // Intermediate values of reference solutions stay in [0, value_cap].
  std::int64_t value_cap;
  // Complex problems always contain at least one mod step.
  bool require_mod;
};

const FamilySpec& family_spec(Family f);

Problem generate_problem(Family family, std::uint64_t rng_seed);

// Renders "<seed> <op> <operand> ... ?".
std::string render_prompt(std::int64_t seed_value, const std::vector<Operation>& ops);
// Inverse of render_prompt.
Problem parse_prompt(std::string_view prompt, Family family);

StepwiseSolution solve_reference(const Problem& p);

// Replaces the claimed result of `step_index` by a wrong value (offset in
// +-[1,5]) and recomputes the later steps from it.
StepwiseSolution corrupt_solution(const StepwiseSolution& sol, int step_index,
                                  std::uint64_t rng_seed);

// A step is correct when its lhs continues the chain, it performs the
// problem's operation, and its claimed result is exact.
bool step_is_correct(std::int64_t expected_lhs, const Operation& expected, const Step& step);

std::vector<bool> label_steps(const Problem& p, const StepwiseSolution& sol);

// The answer "step" is correct when it transcribes the last claimed result.
bool answer_step_correct(const StepwiseSolution& sol);

// "<lhs><op><operand>=<result>;" per step, then "#<answer>".
std::string render_solution(const StepwiseSolution& sol);

struct TokenSeq {
  std::vector<TokenId> tokens;
  // Ordered indices of step-end delimiters; the last entry is the answer
  // terminator (the EOS index) when an answer is present.
  std::vector<int> step_ends;
  int prompt_length = 0;  // BOS plus prompt symbols
  int terminal_index = -1;  // EOS index, or the last index if no EOS
  bool operator==(const TokenSeq&) const = default;
};

TokenSeq encode(const Problem& p, const StepwiseSolution& sol);
// BOS + prompt, no EOS: the conditioning context for generation.
TokenSeq encode_prompt(const Problem& p);
// Builds a TokenSeq from a prompt prefix and generated continuation ids,
// locating step boundaries in the continuation.
TokenSeq assemble(const std::vector<TokenId>& prompt_tokens,
                  const std::vector<TokenId>& continuation);
std::string decode(const TokenSeq& t);

// Solution text parsed back into steps. Fails on any grammar violation and
// on an answer without steps.
struct ParsedSolution {
  std::vector<Step> steps;
  std::int64_t answer;
};
std::optional<ParsedSolution> parse_solution(std::string_view text);
// Complete steps before the first grammar violation or the answer marker.
std::vector<Step> parse_step_prefix(std::string_view text);

}  // namespace steprl::synth
