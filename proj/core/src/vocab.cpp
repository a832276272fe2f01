#include "rstattn/vocab.hpp"

#include <algorithm>
#include <set>

#include "rstattn/errors.hpp"

namespace rstattn {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> id_to_token)
    : id_to_token_(std::move(id_to_token)) {
  if (id_to_token_.size() < kSpecials.size())
    throw ValidationError("vocabulary missing reserved entries");
  for (int i = 0; i < static_cast<int>(id_to_token_.size()); ++i) {
    if (!token_to_id_.emplace(id_to_token_[i], i).second)
      throw ValidationError("vocabulary has duplicate token '" + id_to_token_[i] + "'");
  }
}

Vocabulary Vocabulary::build(const std::vector<Document>& docs) {
  std::set<std::string> types;
  for (const Document& doc : docs) {
    types.insert(doc.tokens.begin(), doc.tokens.end());
    types.insert(doc.reference_summary.begin(), doc.reference_summary.end());
  }
  std::vector<std::string> id_to_token = kSpecials;
  for (const std::string& t : types) {
    if (std::find(kSpecials.begin(), kSpecials.end(), t) != kSpecials.end())
      throw ValidationError("corpus token collides with reserved '" + t + "'");
    id_to_token.push_back(t);
  }
  return Vocabulary(std::move(id_to_token));
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size())
    throw ContractError("token id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& t : tokens) ids.push_back(id_of(t));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) tokens.push_back(token_of(id));
  return tokens;
}

}  // namespace rstattn
