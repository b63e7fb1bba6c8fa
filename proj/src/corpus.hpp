#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "text_util.hpp"

namespace persrm {

enum class Genre { news, email, essay, blog, interview, chat, other };
enum class CorpusLabel { ccat, cmcc, custom };

// Author splits are train/val/test; cross_domain is a document-level partition
// holding withheld-genre documents of val/test authors.
enum class Split { train, val, test, cross_domain };

std::string_view to_string(Genre g);
std::string_view to_string(CorpusLabel c);
std::string_view to_string(Split s);
std::optional<Genre> parse_genre(std::string_view s);  // case-insensitive
std::optional<CorpusLabel> parse_corpus_label(std::string_view s);
std::optional<Split> parse_split(std::string_view s);

struct Document {
  std::string id;
  std::string author_id;
  Genre genre = Genre::other;
  CorpusLabel corpus = CorpusLabel::custom;
  std::string query;
  std::string body;
  bool query_from_lead = false;  // query was empty in the manifest and derived from the body

  // Unique across a corpus: "author_id/id".
  std::string key() const { return author_id + "/" + id; }
};

using Corpus = std::vector<Document>;

json to_json(const Document& d);
Document document_from_json(const json& j);
Corpus load_corpus(const std::filesystem::path& corpus_jsonl);
std::string corpus_to_jsonl(const Corpus& corpus);

// ---------------- ingest ----------------

struct RejectedRow {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::string id;
  std::string reason;
};

struct IngestReport {
  std::vector<RejectedRow> rejected;
  std::size_t lead_queries = 0;  // documents whose query was derived from the lead sentence
};

struct IngestResult {
  Corpus corpus;
  IngestReport report;
};

// Manifest is UTF-8 CSV with header `id,author_id,genre,corpus,query,path`; paths resolve against `root`.
// Throws DataError naming the row when a referenced file is absent.
IngestResult ingest(const std::filesystem::path& root, const std::filesystem::path& manifest);
IngestResult ingest_csv(const std::filesystem::path& root, std::string_view manifest_text);

json to_json(const IngestReport& r);

// RFC 4180 records. Quoted fields may span lines.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

// ---------------- splits ----------------

struct SplitCounts {
  int train = 0;
  int val = 0;
  int test = 0;
  int total() const { return train + val + test; }
};

struct SplitSpec {
  std::map<CorpusLabel, SplitCounts> counts;
  std::set<Genre> withheld_genres;  // non-empty iff a cross-domain set is requested
  std::uint64_t seed = 0;
};

SplitSpec split_spec_from_json(const json& j, std::uint64_t default_seed);

struct SplitAssignment {
  std::uint64_t seed = 0;
  std::set<Genre> withheld_genres;
  // Sorted (author, split). A well-formed assignment lists each author once; the list form
  // lets a hand-edited artifact that repeats an author reach verification intact.
  std::vector<std::pair<std::string, Split>> authors;
  std::vector<std::string> cross_domain_docs;  // Document::key() values, sorted

  std::optional<Split> split_of(std::string_view author_id) const;
  std::set<std::string> authors_in(Split s) const;
};

json to_json(const SplitAssignment& a);
std::string serialize(const SplitAssignment& a);
SplitAssignment parse_assignment(std::string_view text);

// Seeded author permutation per corpus, then train/val/test prefixes. Throws DataError when
// a corpus has fewer authors than requested.
SplitAssignment make_splits(const Corpus& corpus, const SplitSpec& spec);

struct Violation {
  std::string kind;  // author_overlap | unknown_author | unknown_doc | cross_domain_author | cross_domain_genre | genre_leak
  std::string subject;
  std::string detail;
};

struct VerificationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

VerificationReport verify_splits(const Corpus& corpus, const SplitAssignment& assignment);
json to_json(const VerificationReport& r);

// Resolves which partition each document belongs to under an assignment.
class SplitIndex {
 public:
  SplitIndex(const Corpus& corpus, const SplitAssignment& assignment);

  const Corpus& corpus() const { return *corpus_; }
  std::optional<Split> split_of_doc(const Document& d) const;
  std::optional<Split> split_of_author(std::string_view author_id) const;

  // Documents of `author_id` usable in partition `s`, in corpus order.
  std::vector<const Document*> docs_of(Split s, std::string_view author_id) const;
  std::vector<const Document*> docs_in(Split s) const;
  // Authors with at least one usable document in `s`, sorted.
  std::vector<std::string> authors_in(Split s) const;
  const Document* find(std::string_view key) const;

 private:
  const Corpus* corpus_;
  std::map<std::string, std::size_t, std::less<>> by_key_;
  std::map<std::string, Split, std::less<>> author_split_;
  std::map<std::string, std::vector<std::size_t>, std::less<>> by_author_;
  std::vector<std::optional<Split>> doc_split_;
};

}  // namespace persrm
