#ifndef RSTATTN_CORPUS_HPP
#define RSTATTN_CORPUS_HPP

#include <filesystem>
#include <string>
#include <vector>

namespace rstattn {

/// Half-open token index range [begin, end).
struct Span {
  int begin = 0;
  int end = 0;
  friend bool operator==(const Span&, const Span&) = default;
};

/// One whitespace-pretokenized source document. EDU and sentence spans
/// partition the token range; the reference summary may be empty.
struct Document {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<Span> edu_spans;
  std::vector<Span> sentence_spans;
  std::vector<std::string> reference_summary;

  int n_tokens() const { return static_cast<int>(tokens.size()); }
  int n_edus() const { return static_cast<int>(edu_spans.size()); }
  bool has_reference() const { return !reference_summary.empty(); }

  /// EDU index owning token t. Precondition: spans validated, 0 <= t < T.
  int edu_of(int t) const;
};

/// One discourse relation hypothesis emitted by an external parser:
/// src EDU relates to dst EDU under `label` with confidence `prob`;
/// src_is_nucleus marks whether the source side is the nucleus of the
/// relation instance.
struct RelationRecord {
  int src_edu = 0;
  int dst_edu = 0;
  std::string label;
  bool src_is_nucleus = false;
  double prob = 0.0;
  friend bool operator==(const RelationRecord&, const RelationRecord&) = default;
};

/// Throws ValidationError (message names the document id) unless spans are
/// non-empty, sorted, non-overlapping, and jointly cover [0, n_tokens).
void validate(const Document& doc);

/// Reads a line-delimited JSON corpus, one document object per line, in file
/// order. Malformed lines raise ParseError naming the line; invariant
/// violations raise ValidationError naming the document.
std::vector<Document> load_corpus(const std::filesystem::path& path);

/// Writes documents back as line-delimited JSON (inverse of load_corpus up
/// to JSON whitespace).
void save_corpus(const std::filesystem::path& path,
                 const std::vector<Document>& docs);

/// Reads the relation file for one document. A missing file yields an empty
/// sequence (the downstream builder then degenerates to the plain baseline).
/// Out-of-range EDU indices, probabilities outside [0,1], and labels outside
/// the known inventory raise ValidationError.
std::vector<RelationRecord> load_relations(const std::filesystem::path& path,
                                           const Document& doc);

void save_relations(const std::filesystem::path& path,
                    const std::vector<RelationRecord>& records);

}  // namespace rstattn

#endif
