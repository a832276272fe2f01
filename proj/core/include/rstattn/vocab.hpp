#ifndef RSTATTN_VOCAB_HPP
#define RSTATTN_VOCAB_HPP

#include <string>
#include <unordered_map>
#include <vector>

#include "rstattn/corpus.hpp"

namespace rstattn {

/// Closed token vocabulary. Ids 0..3 are reserved; corpus types follow in
/// lexicographic order so the mapping is independent of document order.
class Vocabulary {
public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> id_to_token);

  /// Collects every token type from documents and reference summaries.
  static Vocabulary build(const std::vector<Document>& docs);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int id_of(const std::string& token) const;  // kUnk for unknown types
  const std::string& token_of(int id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
};

}  // namespace rstattn

#endif
