#include "wklm/vocab.hpp"

#include <set>

#include "wklm/error.hpp"

namespace wklm {

const std::vector<std::string>& Vocabulary::specials() {
  static const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[BOS]", "[EOS]", kMaskToken};
  return kSpecials;
}

Vocabulary::Vocabulary() : Vocabulary(specials()) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  const auto& sp = specials();
  if (tokens_.size() < sp.size()) throw DataError("vocabulary lacks special tokens");
  for (std::size_t i = 0; i < sp.size(); ++i)
    if (tokens_[i] != sp[i]) throw DataError("vocabulary special token mismatch at " + std::to_string(i));
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second)
      throw DataError("duplicate vocabulary token: " + tokens_[i]);
  }
}

Vocabulary Vocabulary::build(const std::vector<TrainingInstance>& instances) {
  std::set<std::string> seen;
  for (const auto& inst : instances) {
    seen.insert(inst.tokens.begin(), inst.tokens.end());
    for (const auto& m : inst.masks) seen.insert(m.original);
  }
  std::vector<std::string> tokens = specials();
  for (const auto& s : specials()) seen.erase(s);
  tokens.insert(tokens.end(), seen.begin(), seen.end());
  return Vocabulary(std::move(tokens));
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

}  // namespace wklm
