#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sisr::text {

enum SpecialToken : std::size_t { kPad = 0, kBos = 1, kEos = 2, kMask = 3, kUnk = 4 };
inline constexpr std::size_t kSpecialCount = 5;

using TokenSequence = std::vector<std::size_t>;

// Lowercased, whitespace-delimited words.
std::vector<std::string> split_words(std::string_view text);
// Lowercased words joined by single spaces.
std::string normalize(std::string_view text);

// Word-level vocabulary: the five special tokens first, then corpus words in
// first-appearance order.
class Vocabulary {
 public:
  // Throws ContractError on an empty corpus.
  static Vocabulary build(const std::vector<std::string>& corpus);
  // Tokens in id order; the first five must be the specials.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  // One token per line, line number = id.
  static Vocabulary parse(std::string_view file_text);
  std::string serialize() const;

  std::size_t size() const { return tokens_.size(); }
  // kUnk for out-of-vocabulary words.
  std::size_t id(std::string_view word) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  void index();

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// [BOS, words..., EOS].
TokenSequence tokenize(std::string_view report, const Vocabulary& vocab);
// Drops PAD/BOS/EOS and joins the remaining surfaces with spaces.
std::string detokenize(const TokenSequence& ids, const Vocabulary& vocab);

}  // namespace sisr::text
