#include "sisr/vocab.hpp"

#include <cctype>

#include "sisr/error.hpp"

namespace sisr::text {

namespace {
const char* const kSpecialSurfaces[kSpecialCount] = {"<pad>", "<bos>", "<eos>", "<mask>",
                                                     "<unk>"};
}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::string normalize(std::string_view text) {
  std::string out;
  for (const auto& w : split_words(text)) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus) {
  if (corpus.empty()) throw ContractError("cannot build a vocabulary from an empty corpus");
  Vocabulary v;
  for (const char* s : kSpecialSurfaces) v.tokens_.emplace_back(s);
  v.index();
  for (const auto& report : corpus) {
    for (auto& w : split_words(report)) {
      if (v.ids_.contains(w)) continue;
      v.ids_.emplace(w, v.tokens_.size());
      v.tokens_.push_back(std::move(w));
    }
  }
  return v;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kSpecialCount) {
    throw IoError("vocabulary has fewer entries than the special tokens");
  }
  for (std::size_t i = 0; i < kSpecialCount; ++i) {
    if (tokens[i] != kSpecialSurfaces[i]) {
      throw IoError("vocabulary entry " + std::to_string(i) + " should be " +
                    kSpecialSurfaces[i] + ", found '" + tokens[i] + "'");
    }
  }
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  v.index();
  if (v.ids_.size() != v.tokens_.size()) throw IoError("vocabulary contains duplicate tokens");
  return v;
}

Vocabulary Vocabulary::parse(std::string_view file_text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos < file_text.size()) {
    auto nl = file_text.find('\n', pos);
    if (nl == std::string_view::npos) nl = file_text.size();
    tokens.emplace_back(file_text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return from_tokens(std::move(tokens));
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

std::size_t Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

void Vocabulary::index() {
  ids_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], i);
}

TokenSequence tokenize(std::string_view report, const Vocabulary& vocab) {
  TokenSequence ids{kBos};
  for (const auto& w : split_words(report)) ids.push_back(vocab.id(w));
  ids.push_back(kEos);
  return ids;
}

std::string detokenize(const TokenSequence& ids, const Vocabulary& vocab) {
  std::string out;
  for (auto id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

}  // namespace sisr::text
