#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "wklm/corpus.hpp"

namespace wklm {

// Closed token vocabulary. Indices 0-4 are reserved for the special symbols;
// corpus tokens follow in byte-lexicographic order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kMask = 4;
  static const std::vector<std::string>& specials();

  Vocabulary();
  // `tokens` must start with specials() and contain no duplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  // Every token and masked original in the instances.
  static Vocabulary build(const std::vector<TrainingInstance>& instances);

  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace wklm
