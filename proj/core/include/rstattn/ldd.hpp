#ifndef RSTATTN_LDD_HPP
#define RSTATTN_LDD_HPP

#include <array>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "rstattn/corpus.hpp"

namespace rstattn {

/// The four relation groups attention heads specialize on.
enum class RelationCategory { Temporal = 0, Contingency, Comparison, Expansion };

inline constexpr int kNumCategories = 4;
inline constexpr std::array<RelationCategory, kNumCategories> kCategoryOrder = {
    RelationCategory::Temporal, RelationCategory::Contingency,
    RelationCategory::Comparison, RelationCategory::Expansion};

/// Maps a relation label to its category:
///   Temporal    <- Temporal
///   Contingency <- Cause, Condition
///   Comparison  <- Comparison, Contrast, Concession, Topic-Change
///   Expansion   <- Explanation, Elaboration, Background, Topic-Comment
/// Unknown labels raise ValidationError naming the label.
RelationCategory categorize(std::string_view label);

const char* to_string(RelationCategory category);

/// Sparse EDU x EDU x category tensor of parser confidences in [0,1].
/// Stored entries never sit on the diagonal and always originate from
/// nucleus-source records. A collapsed tensor has the category dimension
/// summed away; lookups then ignore the category argument.
class LddTensor {
public:
  LddTensor() = default;
  explicit LddTensor(int n_edus, bool collapsed = false)
      : n_edus_(n_edus), collapsed_(collapsed) {}

  int n_edus() const { return n_edus_; }
  bool collapsed() const { return collapsed_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Stored probability, or `fill` when no entry exists.
  double prob_or(int src, int dst, RelationCategory category, double fill) const;

  /// Keeps the maximum over duplicate (src, dst, category) keys.
  void merge_max(int src, int dst, RelationCategory category, double prob);

  void set(int src, int dst, RelationCategory category, double prob);

  /// Sorted, deterministic iteration order: (src, dst, category).
  struct Entry {
    int src;
    int dst;
    RelationCategory category;
    double prob;
  };
  std::vector<Entry> entries() const;

private:
  int key_category(RelationCategory category) const {
    return collapsed_ ? 0 : static_cast<int>(category);
  }

  int n_edus_ = 0;
  bool collapsed_ = false;
  std::map<std::tuple<int, int, int>, double> entries_;
};

/// Builds the distribution tensor from parser records: diagonal records and
/// satellite-source records are dropped, duplicate keys keep the maximum
/// probability. An empty record set yields an empty tensor.
LddTensor build_ldd(std::span<const RelationRecord> records, int n_edus);

/// Sums the category dimension and clips at 1.0, producing the collapsed
/// tensor used by the relation-blind model variant.
LddTensor collapse_relations(const LddTensor& ldd);

/// Head -> category assignment: the fixed category order, repeated
/// round-robin; h < 4 uses the leading categories only.
std::vector<RelationCategory> assign_heads(int h);

}  // namespace rstattn

#endif
