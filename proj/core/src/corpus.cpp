#include "rstattn/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "rstattn/errors.hpp"
#include "rstattn/ldd.hpp"

namespace rstattn {

using nlohmann::json;
using nlohmann::ordered_json;

int Document::edu_of(int t) const {
  // Spans are sorted and cover [0, T); find the first span ending past t.
  auto it = std::upper_bound(edu_spans.begin(), edu_spans.end(), t,
                             [](int tok, const Span& s) { return tok < s.end; });
  if (it == edu_spans.end() || t < it->begin)
    throw ContractError("token " + std::to_string(t) + " outside every EDU span");
  return static_cast<int>(it - edu_spans.begin());
}

namespace {

void validate_partition(const std::vector<Span>& spans, int n_tokens,
                        const std::string& what, const std::string& doc_id) {
  auto fail = [&](const std::string& msg) {
    throw ValidationError("document '" + doc_id + "': " + what + " " + msg);
  };
  if (spans.empty()) fail("must be non-empty");
  int cursor = 0;
  for (const Span& s : spans) {
    if (s.begin >= s.end) fail("contain an empty or inverted span");
    if (s.begin != cursor) {
      fail(s.begin < cursor ? "overlap or are unsorted" : "leave tokens uncovered");
    }
    cursor = s.end;
  }
  if (cursor != n_tokens) fail("do not cover the token range");
}

std::vector<Span> spans_from_json(const json& j) {
  std::vector<Span> spans;
  for (const auto& pair : j) {
    if (!pair.is_array() || pair.size() != 2)
      throw json::type_error::create(302, "span must be a [begin, end) pair", nullptr);
    spans.push_back(Span{pair[0].get<int>(), pair[1].get<int>()});
  }
  return spans;
}

json spans_to_json(const std::vector<Span>& spans) {
  json j = json::array();
  for (const Span& s : spans) j.push_back({s.begin, s.end});
  return j;
}

Document document_from_json(const json& j) {
  Document doc;
  doc.id = j.at("id").get<std::string>();
  doc.tokens = j.at("tokens").get<std::vector<std::string>>();
  if (j.contains("edu_spans")) {
    doc.edu_spans = spans_from_json(j.at("edu_spans"));
  } else {
    doc.edu_spans = {Span{0, doc.n_tokens()}};
  }
  if (j.contains("sentence_spans")) {
    doc.sentence_spans = spans_from_json(j.at("sentence_spans"));
  } else {
    doc.sentence_spans = {Span{0, doc.n_tokens()}};
  }
  if (j.contains("reference_summary")) {
    doc.reference_summary = j.at("reference_summary").get<std::vector<std::string>>();
  }
  return doc;
}

ordered_json document_to_json(const Document& doc) {
  ordered_json j;
  j["id"] = doc.id;
  j["tokens"] = doc.tokens;
  j["edu_spans"] = spans_to_json(doc.edu_spans);
  j["sentence_spans"] = spans_to_json(doc.sentence_spans);
  if (doc.has_reference()) j["reference_summary"] = doc.reference_summary;
  return j;
}

/// Calls fn(line_number, parsed_json) for every non-blank line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": parse error at line " +
                       std::to_string(line_no) + ": " + e.what());
    }
    fn(line_no, j);
  }
}

}  // namespace

void validate(const Document& doc) {
  if (doc.id.empty()) throw ValidationError("document with empty id");
  if (doc.tokens.empty())
    throw ValidationError("document '" + doc.id + "': tokens must be non-empty");
  validate_partition(doc.edu_spans, doc.n_tokens(), "edu_spans", doc.id);
  validate_partition(doc.sentence_spans, doc.n_tokens(), "sentence_spans", doc.id);
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::vector<Document> docs;
  for_each_json_line(path, [&](int line_no, const json& j) {
    Document doc;
    try {
      doc = document_from_json(j);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": parse error at line " +
                       std::to_string(line_no) + ": " + e.what());
    }
    validate(doc);
    docs.push_back(std::move(doc));
  });
  return docs;
}

void save_corpus(const std::filesystem::path& path,
                 const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const Document& doc : docs) out << document_to_json(doc).dump() << "\n";
}

std::vector<RelationRecord> load_relations(const std::filesystem::path& path,
                                           const Document& doc) {
  std::vector<RelationRecord> records;
  if (!std::filesystem::exists(path)) return records;

  for_each_json_line(path, [&](int line_no, const json& j) {
    RelationRecord r;
    try {
      r.src_edu = j.at("src_edu").get<int>();
      r.dst_edu = j.at("dst_edu").get<int>();
      r.label = j.at("label").get<std::string>();
      r.src_is_nucleus = j.at("src_is_nucleus").get<bool>();
      r.prob = j.at("prob").get<double>();
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ": parse error at line " +
                       std::to_string(line_no) + ": " + e.what());
    }
    auto fail = [&](const std::string& msg) {
      throw ValidationError(path.string() + " line " + std::to_string(line_no) +
                            ": " + msg);
    };
    if (r.src_edu < 0 || r.src_edu >= doc.n_edus() || r.dst_edu < 0 ||
        r.dst_edu >= doc.n_edus()) {
      fail("EDU index out of range for document '" + doc.id + "' (" +
           std::to_string(doc.n_edus()) + " EDUs)");
    }
    if (!(r.prob >= 0.0 && r.prob <= 1.0))
      fail("prob " + std::to_string(r.prob) + " outside [0,1]");
    categorize(r.label);  // unknown labels are a hard error
    records.push_back(std::move(r));
  });
  return records;
}

void save_relations(const std::filesystem::path& path,
                    const std::vector<RelationRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const RelationRecord& r : records) {
    ordered_json j;
    j["src_edu"] = r.src_edu;
    j["dst_edu"] = r.dst_edu;
    j["label"] = r.label;
    j["src_is_nucleus"] = r.src_is_nucleus;
    j["prob"] = r.prob;
    out << j.dump() << "\n";
  }
}

}  // namespace rstattn
