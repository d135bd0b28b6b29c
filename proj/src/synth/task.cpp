#include "steprl/synth/task.hpp"

#include <charconv>
#include <sstream>

#include "steprl/common/rng.hpp"

namespace steprl::synth {

std::string_view family_name(Family f) { return f == Family::Simple ? "simple" : "complex"; }

Family parse_family(std::string_view name) {
  if (name == "simple") return Family::Simple;
  if (name == "complex") return Family::Complex;
  throw std::invalid_argument("unknown family: " + std::string(name));
}

char op_symbol(Op op) { return static_cast<char>(op); }

std::optional<Op> op_from_symbol(char c) {
  switch (c) {
    case '+': return Op::Add;
    case '-': return Op::Sub;
    case '*': return Op::Mul;
    case '%': return Op::Mod;
    default: return std::nullopt;
  }
}

std::int64_t apply_op(std::int64_t lhs, Op op, std::int64_t operand) {
  std::int64_t out = 0;
  switch (op) {
    case Op::Add:
      if (__builtin_add_overflow(lhs, operand, &out)) throw std::overflow_error("add overflow");
      return out;
    case Op::Sub:
      if (__builtin_sub_overflow(lhs, operand, &out)) throw std::overflow_error("sub overflow");
      return out;
    case Op::Mul:
      if (__builtin_mul_overflow(lhs, operand, &out)) throw std::overflow_error("mul overflow");
      return out;
    case Op::Mod: {
      if (operand <= 0) throw std::invalid_argument("mod operand must be positive");
      const std::int64_t r = lhs % operand;
      return r < 0 ? r + operand : r;
    }
  }
  throw std::invalid_argument("bad operator");
}

const FamilySpec& family_spec(Family f) {
  static const FamilySpec simple{1, 20, 2, 4, 1, 9, {Op::Add, Op::Sub, Op::Mul}, 99, false};
  static const FamilySpec complex{1, 99, 4, 8, 1, 99, {Op::Add, Op::Sub, Op::Mul, Op::Mod}, 999, true};
  return f == Family::Simple ? simple : complex;
}

std::string render_prompt(std::int64_t seed_value, const std::vector<Operation>& ops) {
  std::string s = std::to_string(seed_value);
  for (const auto& o : ops) {
    s += ' ';
    s += op_symbol(o.op);
    s += ' ';
    s += std::to_string(o.operand);
  }
  s += " ?";
  return s;
}

Problem generate_problem(Family family, std::uint64_t rng_seed) {
  const FamilySpec& spec = family_spec(family);
  Rng rng(derive_seed(rng_seed, hash_tag(family_name(family))));
  Problem p;
  p.family = family;
  p.seed_value = rng.uniform_int(spec.seed_min, spec.seed_max);
  const int n = static_cast<int>(rng.uniform_int(spec.ops_min, spec.ops_max));
  const int forced_mod = spec.require_mod ? static_cast<int>(rng.uniform_int(0, n - 1)) : -1;
  const auto n_ops = static_cast<std::int64_t>(spec.operators.size());

  std::int64_t v = p.seed_value;
  for (int i = 0; i < n; ++i) {
    Operation chosen{Op::Add, 0};
    bool accepted = false;
    for (int attempt = 0; attempt < 8 && !accepted; ++attempt) {
      const Op op = i == forced_mod ? Op::Mod : spec.operators[static_cast<std::size_t>(rng.uniform_int(0, n_ops - 1))];
      const std::int64_t b = rng.uniform_int(spec.operand_min, spec.operand_max);
      const std::int64_t w = apply_op(v, op, b);
      chosen = {op, b};
      accepted = w >= 0 && w <= spec.value_cap;
    }
    if (!accepted) chosen.op = v >= chosen.operand ? Op::Sub : Op::Add;
    p.operations.push_back(chosen);
    v = apply_op(v, chosen.op, chosen.operand);
  }
  p.prompt_text = render_prompt(p.seed_value, p.operations);
  return p;
}

Problem parse_prompt(std::string_view prompt, Family family) {
  std::istringstream is{std::string(prompt)};
  Problem p;
  p.family = family;
  std::string tok;
  if (!(is >> tok)) throw EncodingError("empty prompt");
  p.seed_value = std::stoll(tok);
  while (is >> tok) {
    if (tok == "?") break;
    if (tok.size() != 1 || !op_from_symbol(tok[0])) throw EncodingError("bad operator in prompt: " + tok);
    const Op op = *op_from_symbol(tok[0]);
    if (!(is >> tok)) throw EncodingError("missing operand in prompt");
    p.operations.push_back({op, std::stoll(tok)});
  }
  if (tok != "?") throw EncodingError("prompt must end with '?'");
  p.prompt_text = render_prompt(p.seed_value, p.operations);
  if (p.prompt_text != prompt) throw EncodingError("non-canonical prompt: " + std::string(prompt));
  return p;
}

StepwiseSolution solve_reference(const Problem& p) {
  StepwiseSolution sol;
  std::int64_t v = p.seed_value;
  for (const auto& o : p.operations) {
    const std::int64_t w = apply_op(v, o.op, o.operand);
    sol.steps.push_back({v, o.op, o.operand, w});
    v = w;
  }
  sol.final_answer = v;
  sol.step_labels.assign(sol.steps.size(), true);
  sol.answer_correct = true;
  return sol;
}

StepwiseSolution corrupt_solution(const StepwiseSolution& sol, int step_index, std::uint64_t rng_seed) {
  if (step_index < 0 || step_index >= static_cast<int>(sol.steps.size()))
    throw std::out_of_range("corrupt_solution: step index " + std::to_string(step_index) + " out of range");
  Rng rng(derive_seed(rng_seed, hash_tag("corrupt")));
  const std::int64_t magnitude = rng.uniform_int(1, 5);
  const std::int64_t offset = rng.uniform_int(0, 1) == 0 ? -magnitude : magnitude;

  StepwiseSolution out = sol;
  const auto k = static_cast<std::size_t>(step_index);
  out.steps[k].result += offset;
  for (std::size_t i = k + 1; i < out.steps.size(); ++i) {
    out.steps[i].lhs = out.steps[i - 1].result;
    out.steps[i].result = apply_op(out.steps[i].lhs, out.steps[i].op, out.steps[i].operand);
  }
  out.final_answer = out.steps.back().result;
  out.step_labels.assign(out.steps.size(), true);
  out.step_labels[k] = false;
  out.answer_correct = false;
  return out;
}

bool step_is_correct(std::int64_t expected_lhs, const Operation& expected, const Step& step) {
  if (step.lhs != expected_lhs || step.op != expected.op || step.operand != expected.operand) return false;
  try {
    return step.result == apply_op(step.lhs, step.op, step.operand);
  } catch (const std::exception&) {
    return false;
  }
}

std::vector<bool> label_steps(const Problem& p, const StepwiseSolution& sol) {
  if (sol.steps.size() != p.operations.size())
    throw std::invalid_argument("label_steps: solution has " + std::to_string(sol.steps.size()) +
                                " steps, problem has " + std::to_string(p.operations.size()));
  std::vector<bool> labels;
  labels.reserve(sol.steps.size());
  std::int64_t expected_lhs = p.seed_value;
  for (std::size_t i = 0; i < sol.steps.size(); ++i) {
    labels.push_back(step_is_correct(expected_lhs, p.operations[i], sol.steps[i]));
    expected_lhs = sol.steps[i].result;
  }
  return labels;
}

bool answer_step_correct(const StepwiseSolution& sol) {
  return !sol.steps.empty() && sol.final_answer == sol.steps.back().result;
}

std::string render_solution(const StepwiseSolution& sol) {
  if (sol.steps.empty()) return {};
  std::string s;
  for (const auto& st : sol.steps) {
    s += std::to_string(st.lhs);
    s += op_symbol(st.op);
    s += std::to_string(st.operand);
    s += '=';
    s += std::to_string(st.result);
    s += ';';
  }
  s += '#';
  s += std::to_string(sol.final_answer);
  return s;
}

namespace {

std::vector<TokenId> prompt_ids(const Problem& p) {
  std::vector<TokenId> ids{tok::kBos};
  const auto body = Vocabulary::encode_text(p.prompt_text);
  ids.insert(ids.end(), body.begin(), body.end());
  return ids;
}

}  // namespace

TokenSeq assemble(const std::vector<TokenId>& prompt_tokens, const std::vector<TokenId>& continuation) {
  TokenSeq t;
  t.tokens = prompt_tokens;
  t.prompt_length = static_cast<int>(prompt_tokens.size());
  bool seen_answer = false;
  for (TokenId id : continuation) {
    const int pos = static_cast<int>(t.tokens.size());
    t.tokens.push_back(id);
    if (id == tok::kStepEnd && !seen_answer) t.step_ends.push_back(pos);
    if (id == tok::kAnswer) seen_answer = true;
    if (id == tok::kEos) {
      if (seen_answer) t.step_ends.push_back(pos);
      t.terminal_index = pos;
      break;
    }
  }
  if (t.terminal_index < 0) t.terminal_index = static_cast<int>(t.tokens.size()) - 1;
  return t;
}

TokenSeq encode(const Problem& p, const StepwiseSolution& sol) {
  auto cont = Vocabulary::encode_text(render_solution(sol));
  cont.push_back(tok::kEos);
  return assemble(prompt_ids(p), cont);
}

TokenSeq encode_prompt(const Problem& p) {
  TokenSeq t;
  t.tokens = prompt_ids(p);
  t.prompt_length = static_cast<int>(t.tokens.size());
  t.terminal_index = t.prompt_length - 1;
  return t;
}

std::string decode(const TokenSeq& t) { return Vocabulary::decode_text(t.tokens); }

namespace {

// Canonical signed integer: optional '-', no leading zeros, at most 18 digits.
bool parse_int(std::string_view s, std::size_t& pos, bool allow_sign, std::int64_t& out) {
  const std::size_t start = pos;
  if (allow_sign && pos < s.size() && s[pos] == '-') ++pos;
  const std::size_t digits_start = pos;
  while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
  const std::size_t n_digits = pos - digits_start;
  if (n_digits == 0 || n_digits > 18) return false;
  if (n_digits > 1 && s[digits_start] == '0') return false;
  if (n_digits == 1 && s[digits_start] == '0' && digits_start != start) return false;  // "-0"
  auto [ptr, ec] = std::from_chars(s.data() + start, s.data() + pos, out);
  return ec == std::errc{} && ptr == s.data() + pos;
}

}  // namespace

namespace {

bool parse_step(std::string_view text, std::size_t& pos, Step& st) {
  if (!parse_int(text, pos, true, st.lhs)) return false;
  if (pos >= text.size()) return false;
  const auto op = op_from_symbol(text[pos]);
  if (!op) return false;
  st.op = *op;
  ++pos;
  if (!parse_int(text, pos, false, st.operand)) return false;
  if (pos >= text.size() || text[pos] != '=') return false;
  ++pos;
  if (!parse_int(text, pos, true, st.result)) return false;
  if (pos >= text.size() || text[pos] != ';') return false;
  ++pos;
  return true;
}

}  // namespace

std::optional<ParsedSolution> parse_solution(std::string_view text) {
  ParsedSolution out{};
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] != '#') {
    Step st{};
    if (!parse_step(text, pos, st)) return std::nullopt;
    out.steps.push_back(st);
  }
  if (out.steps.empty() || pos >= text.size() || text[pos] != '#') return std::nullopt;
  ++pos;
  if (!parse_int(text, pos, true, out.answer)) return std::nullopt;
  if (pos != text.size()) return std::nullopt;
  return out;
}

std::vector<Step> parse_step_prefix(std::string_view text) {
  std::vector<Step> out;
  std::size_t pos = 0;
  while (pos < text.size() && text[pos] != '#') {
    Step st{};
    if (!parse_step(text, pos, st)) break;
    out.push_back(st);
  }
  return out;
}

}  // namespace steprl::synth
