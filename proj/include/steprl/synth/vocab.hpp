#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace steprl::synth {

using TokenId = std::int32_t;

// Fixed character-level vocabulary. Ids are stable across runs and builds.
namespace tok {
inline constexpr TokenId kPlus = 10;
inline constexpr TokenId kMinus = 11;
inline constexpr TokenId kTimes = 12;
inline constexpr TokenId kMod = 13;
inline constexpr TokenId kEquals = 14;
inline constexpr TokenId kStepEnd = 15;
inline constexpr TokenId kAnswer = 16;
inline constexpr TokenId kQuery = 17;
inline constexpr TokenId kSpace = 18;
inline constexpr TokenId kBos = 19;
inline constexpr TokenId kEos = 20;
inline constexpr TokenId kPad = 21;
}  // namespace tok

class Vocabulary {
 public:
  static constexpr int kSize = 22;

  // Symbol for a printable token; BOS/EOS/PAD have no text form.
  static char symbol(TokenId id);
  static bool is_printable(TokenId id) { return id >= 0 && id < tok::kBos; }
  static bool is_digit(TokenId id) { return id >= 0 && id <= 9; }

  // Throws EncodingError on characters outside the vocabulary.
  static TokenId id_of(char c);

  static std::vector<TokenId> encode_text(std::string_view text);
  // Printable tokens only; special tokens are dropped.
  static std::string decode_text(const std::vector<TokenId>& ids);
  static std::string name(TokenId id);
};

}  // namespace steprl::synth
