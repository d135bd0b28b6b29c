#include "steprl/synth/vocab.hpp"

#include "steprl/synth/task.hpp"

namespace steprl::synth {

namespace {
constexpr std::array<char, 19> kSymbols = {'0', '1', '2', '3', '4', '5', '6', '7', '8', '9',
                                           '+', '-', '*', '%', '=', ';', '#', '?', ' '};
}

char Vocabulary::symbol(TokenId id) {
  if (!is_printable(id)) throw EncodingError("token id has no symbol: " + std::to_string(id));
  return kSymbols[static_cast<std::size_t>(id)];
}

TokenId Vocabulary::id_of(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  switch (c) {
    case '+': return tok::kPlus;
    case '-': return tok::kMinus;
    case '*': return tok::kTimes;
    case '%': return tok::kMod;
    case '=': return tok::kEquals;
    case ';': return tok::kStepEnd;
    case '#': return tok::kAnswer;
    case '?': return tok::kQuery;
    case ' ': return tok::kSpace;
    default: break;
  }
  throw EncodingError(std::string("symbol outside vocabulary: '") + c + "'");
}

std::vector<TokenId> Vocabulary::encode_text(std::string_view text) {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id_of(c));
  return ids;
}

std::string Vocabulary::decode_text(const std::vector<TokenId>& ids) {
  std::string s;
  s.reserve(ids.size());
  for (TokenId id : ids)
    if (is_printable(id)) s.push_back(symbol(id));
  return s;
}

std::string Vocabulary::name(TokenId id) {
  switch (id) {
    case tok::kBos: return "<bos>";
    case tok::kEos: return "<eos>";
    case tok::kPad: return "<pad>";
    default: return std::string(1, symbol(id));
  }
}

}  // namespace steprl::synth
