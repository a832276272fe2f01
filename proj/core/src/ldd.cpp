#include "rstattn/ldd.hpp"

#include <algorithm>
#include <string>

#include "rstattn/errors.hpp"

namespace rstattn {

RelationCategory categorize(std::string_view label) {
  if (label == "Temporal") return RelationCategory::Temporal;
  if (label == "Cause" || label == "Condition") return RelationCategory::Contingency;
  if (label == "Comparison" || label == "Contrast" || label == "Concession" ||
      label == "Topic-Change") {
    return RelationCategory::Comparison;
  }
  if (label == "Explanation" || label == "Elaboration" || label == "Background" ||
      label == "Topic-Comment") {
    return RelationCategory::Expansion;
  }
  throw ValidationError("unknown relation label '" + std::string(label) + "'");
}

const char* to_string(RelationCategory category) {
  switch (category) {
    case RelationCategory::Temporal: return "Temporal";
    case RelationCategory::Contingency: return "Contingency";
    case RelationCategory::Comparison: return "Comparison";
    case RelationCategory::Expansion: return "Expansion";
  }
  throw ContractError("invalid RelationCategory");
}

double LddTensor::prob_or(int src, int dst, RelationCategory category,
                          double fill) const {
  auto it = entries_.find({src, dst, key_category(category)});
  return it == entries_.end() ? fill : it->second;
}

void LddTensor::merge_max(int src, int dst, RelationCategory category,
                          double prob) {
  auto [it, inserted] = entries_.try_emplace({src, dst, key_category(category)}, prob);
  if (!inserted) it->second = std::max(it->second, prob);
}

void LddTensor::set(int src, int dst, RelationCategory category, double prob) {
  entries_[{src, dst, key_category(category)}] = prob;
}

std::vector<LddTensor::Entry> LddTensor::entries() const {
  std::vector<Entry> out;
  out.reserve(entries_.size());
  for (const auto& [key, prob] : entries_) {
    const auto& [src, dst, cat] = key;
    out.push_back(Entry{src, dst, static_cast<RelationCategory>(cat), prob});
  }
  return out;
}

LddTensor build_ldd(std::span<const RelationRecord> records, int n_edus) {
  LddTensor ldd(n_edus);
  for (const RelationRecord& r : records) {
    if (r.src_edu == r.dst_edu) continue;  // no unit depends on itself
    if (!r.src_is_nucleus) continue;       // only nucleus-side probabilities
    if (r.src_edu < 0 || r.src_edu >= n_edus || r.dst_edu < 0 || r.dst_edu >= n_edus)
      throw ContractError("relation record indexes EDU outside [0, n_edus)");
    ldd.merge_max(r.src_edu, r.dst_edu, categorize(r.label), r.prob);
  }
  return ldd;
}

LddTensor collapse_relations(const LddTensor& ldd) {
  LddTensor out(ldd.n_edus(), /*collapsed=*/true);
  std::map<std::pair<int, int>, double> sums;
  for (const auto& e : ldd.entries()) sums[{e.src, e.dst}] += e.prob;
  for (const auto& [key, sum] : sums) {
    out.set(key.first, key.second, RelationCategory::Temporal, std::min(1.0, sum));
  }
  return out;
}

std::vector<RelationCategory> assign_heads(int h) {
  if (h < 1) throw ContractError("head count must be >= 1");
  std::vector<RelationCategory> map(h);
  for (int i = 0; i < h; ++i) map[i] = kCategoryOrder[i % kNumCategories];
  return map;
}

}  // namespace rstattn
