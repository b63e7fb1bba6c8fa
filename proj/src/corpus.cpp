#include "corpus.hpp"

#include <algorithm>
#include <array>

#include "error.hpp"

namespace persrm {

namespace {

constexpr std::array<std::pair<Genre, std::string_view>, 7> kGenres{{
    {Genre::news, "news"},
    {Genre::email, "email"},
    {Genre::essay, "essay"},
    {Genre::blog, "blog"},
    {Genre::interview, "interview"},
    {Genre::chat, "chat"},
    {Genre::other, "other"},
}};

constexpr std::array<std::pair<CorpusLabel, std::string_view>, 3> kCorpora{{
    {CorpusLabel::ccat, "CCAT"},
    {CorpusLabel::cmcc, "CMCC"},
    {CorpusLabel::custom, "custom"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 4> kSplits{{
    {Split::train, "train"},
    {Split::val, "val"},
    {Split::test, "test"},
    {Split::cross_domain, "cross_domain"},
}};

}  // namespace

std::string_view to_string(Genre g) {
  for (auto& [k, v] : kGenres)
    if (k == g) return v;
  return "other";
}

std::string_view to_string(CorpusLabel c) {
  for (auto& [k, v] : kCorpora)
    if (k == c) return v;
  return "custom";
}

std::string_view to_string(Split s) {
  for (auto& [k, v] : kSplits)
    if (k == s) return v;
  return "train";
}

std::optional<Genre> parse_genre(std::string_view s) {
  std::string lower = to_lower_ascii(trim(s));
  for (auto& [k, v] : kGenres)
    if (v == lower) return k;
  return std::nullopt;
}

std::optional<CorpusLabel> parse_corpus_label(std::string_view s) {
  std::string lower = to_lower_ascii(trim(s));
  for (auto& [k, v] : kCorpora)
    if (to_lower_ascii(v) == lower) return k;
  return std::nullopt;
}

std::optional<Split> parse_split(std::string_view s) {
  for (auto& [k, v] : kSplits)
    if (v == s) return k;
  return std::nullopt;
}

json to_json(const Document& d) {
  return json{{"id", d.id},
              {"author_id", d.author_id},
              {"genre", to_string(d.genre)},
              {"corpus", to_string(d.corpus)},
              {"query", d.query},
              {"query_from_lead", d.query_from_lead},
              {"body", d.body}};
}

Document document_from_json(const json& j) {
  try {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.author_id = j.at("author_id").get<std::string>();
    auto genre = parse_genre(j.at("genre").get<std::string>());
    auto corpus = parse_corpus_label(j.at("corpus").get<std::string>());
    if (!genre || !corpus) throw DataError("document " + d.id + ": unknown genre or corpus label");
    d.genre = *genre;
    d.corpus = *corpus;
    d.query = j.value("query", "");
    d.query_from_lead = j.value("query_from_lead", false);
    d.body = j.at("body").get<std::string>();
    return d;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed document record: ") + e.what());
  }
}

Corpus load_corpus(const std::filesystem::path& corpus_jsonl) {
  Corpus corpus;
  for (const auto& row : read_jsonl(corpus_jsonl)) corpus.push_back(document_from_json(row));
  return corpus;
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::vector<json> rows;
  rows.reserve(corpus.size());
  for (const auto& d : corpus) rows.push_back(to_json(d));
  return to_jsonl(rows);
}

// ---------------- ingest ----------------

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;  // BOM
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    bool blank = row.size() == 1 && row[0].empty();
    if (!blank) rows.push_back(std::move(row));
    row.clear();
  };
  for (; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else if (c == '\n') {
      end_row();
    } else {
      field += c;
      field_started = true;
    }
  }
  if (quoted) throw DataError("manifest: unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

json to_json(const IngestReport& r) {
  json rejected = json::array();
  for (const auto& x : r.rejected) rejected.push_back({{"row", x.row}, {"id", x.id}, {"reason", x.reason}});
  return {{"rejected", rejected}, {"lead_queries", r.lead_queries}};
}

IngestResult ingest_csv(const std::filesystem::path& root, std::string_view manifest_text) {
  auto rows = parse_csv(manifest_text);
  if (rows.empty()) throw DataError("manifest is empty");

  static constexpr std::array<std::string_view, 6> kColumns{"id", "author_id", "genre", "corpus", "query", "path"};
  std::array<std::size_t, 6> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find_if(rows[0].begin(), rows[0].end(),
                           [&](const std::string& h) { return trim(h) == kColumns[c]; });
    if (it == rows[0].end()) throw DataError("manifest header lacks column '" + std::string(kColumns[c]) + "'");
    col[c] = static_cast<std::size_t>(it - rows[0].begin());
  }

  IngestResult result;
  std::set<std::pair<std::string, std::string>> seen;
  std::map<std::string, CorpusLabel> author_corpus;

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](std::size_t c) -> std::string {
      return col[c] < row.size() ? std::string(trim(row[col[c]])) : std::string();
    };
    std::string id = cell(0);
    std::string author = cell(1);
    auto reject = [&](std::string reason) { result.report.rejected.push_back({r, id, std::move(reason)}); };

    if (id.empty() || author.empty()) {
      reject("missing id or author_id");
      continue;
    }
    auto genre = parse_genre(cell(2));
    if (!genre) {
      reject("unknown genre '" + cell(2) + "'");
      continue;
    }
    auto corpus = parse_corpus_label(cell(3));
    if (!corpus) {
      reject("unknown corpus '" + cell(3) + "'");
      continue;
    }

    std::filesystem::path path = root / cell(5);
    std::error_code ec;
    if (cell(5).empty() || !std::filesystem::is_regular_file(path, ec)) {
      throw DataError("manifest row " + std::to_string(r) + " (id=" + id + "): file not found: " + path.string());
    }
    std::string body = read_file(path);
    if (is_blank(body)) {
      reject("empty body");
      continue;
    }
    if (!seen.insert({author, id}).second) {
      reject("duplicate (author_id, id)");
      continue;
    }
    auto [it, inserted] = author_corpus.emplace(author, *corpus);
    if (!inserted && it->second != *corpus) {
      reject("author " + author + " already belongs to corpus " + std::string(to_string(it->second)));
      continue;
    }

    Document d;
    d.id = id;
    d.author_id = author;
    d.genre = *genre;
    d.corpus = *corpus;
    d.body = std::string(trim(body));
    d.query = cell(4);
    if (d.query.empty()) {
      d.query = lead_sentence(d.body);
      d.query_from_lead = true;
      ++result.report.lead_queries;
    }
    result.corpus.push_back(std::move(d));
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& root, const std::filesystem::path& manifest) {
  return ingest_csv(root, read_file(manifest));
}

// ---------------- splits ----------------

SplitSpec split_spec_from_json(const json& j, std::uint64_t default_seed) {
  SplitSpec spec;
  spec.seed = default_seed;
  try {
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& [name, c] : j.at("counts").items()) {
      auto label = parse_corpus_label(name);
      if (!label) throw DataError("split spec: unknown corpus '" + name + "'");
      SplitCounts counts{c.value("train", 0), c.value("val", 0), c.value("test", 0)};
      if (counts.train < 0 || counts.val < 0 || counts.test < 0)
        throw DataError("split spec: negative author count for " + name);
      spec.counts[*label] = counts;
    }
    for (const auto& g : j.value("withheld_genres", json::array())) {
      auto genre = parse_genre(g.get<std::string>());
      if (!genre) throw DataError("split spec: unknown genre '" + g.get<std::string>() + "'");
      spec.withheld_genres.insert(*genre);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("split spec: ") + e.what());
  }
  return spec;
}

std::optional<Split> SplitAssignment::split_of(std::string_view author_id) const {
  auto it = std::lower_bound(authors.begin(), authors.end(), author_id,
                             [](const auto& e, std::string_view a) { return e.first < a; });
  if (it != authors.end() && it->first == author_id) return it->second;
  return std::nullopt;
}

std::set<std::string> SplitAssignment::authors_in(Split s) const {
  std::set<std::string> out;
  for (const auto& [a, sp] : authors)
    if (sp == s) out.insert(a);
  return out;
}

json to_json(const SplitAssignment& a) {
  json authors = json::object();
  for (const auto& [author, split] : a.authors) authors[author] = to_string(split);
  json withheld = json::array();
  for (Genre g : a.withheld_genres) withheld.push_back(to_string(g));
  return {{"seed", a.seed}, {"authors", authors}, {"cross_domain_docs", a.cross_domain_docs},
          {"withheld_genres", withheld}};
}

std::string serialize(const SplitAssignment& a) { return to_json(a).dump(2) + "\n"; }

SplitAssignment parse_assignment(std::string_view text) {
  SplitAssignment a;
  // Object keys are collected through the parser callback so a repeated author survives.
  std::vector<std::pair<std::string, std::string>> entries;
  bool in_authors = false;
  std::string pending;
  json j;
  try {
    j = json::parse(text, [&](int depth, json::parse_event_t ev, json& parsed) {
      if (ev == json::parse_event_t::key && depth == 1) in_authors = parsed == "authors";
      if (in_authors && depth == 2) {
        if (ev == json::parse_event_t::key) pending = parsed.get<std::string>();
        if (ev == json::parse_event_t::value && parsed.is_string()) entries.emplace_back(pending, parsed.get<std::string>());
      }
      return true;
    });
    a.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& d : j.value("cross_domain_docs", json::array())) a.cross_domain_docs.push_back(d.get<std::string>());
    for (const auto& g : j.value("withheld_genres", json::array())) {
      auto genre = parse_genre(g.get<std::string>());
      if (!genre) throw DataError("assignment: unknown genre " + g.get<std::string>());
      a.withheld_genres.insert(*genre);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed split assignment: ") + e.what());
  }
  for (auto& [author, label] : entries) {
    auto s = parse_split(label);
    if (!s || *s == Split::cross_domain) throw DataError("assignment: bad split label '" + label + "' for " + author);
    a.authors.emplace_back(author, *s);
  }
  std::sort(a.authors.begin(), a.authors.end());
  std::sort(a.cross_domain_docs.begin(), a.cross_domain_docs.end());
  return a;
}

SplitAssignment make_splits(const Corpus& corpus, const SplitSpec& spec) {
  std::map<CorpusLabel, std::set<std::string>> authors;
  for (const auto& d : corpus) authors[d.corpus].insert(d.author_id);

  SplitAssignment a;
  a.seed = spec.seed;
  a.withheld_genres = spec.withheld_genres;

  for (const auto& [label, counts] : spec.counts) {
    const auto& pool_set = authors[label];
    if (static_cast<std::size_t>(counts.total()) > pool_set.size()) {
      throw DataError("corpus " + std::string(to_string(label)) + ": requested " + std::to_string(counts.total()) +
                      " authors (train " + std::to_string(counts.train) + ", val " + std::to_string(counts.val) +
                      ", test " + std::to_string(counts.test) + ") but only " + std::to_string(pool_set.size()) +
                      " available");
    }
    std::vector<std::string> pool(pool_set.begin(), pool_set.end());
    Rng rng(derive_seed(spec.seed, to_string(label)));
    rng.shuffle(pool);
    std::size_t i = 0;
    for (int k = 0; k < counts.train; ++k) a.authors.emplace_back(pool[i++], Split::train);
    for (int k = 0; k < counts.val; ++k) a.authors.emplace_back(pool[i++], Split::val);
    for (int k = 0; k < counts.test; ++k) a.authors.emplace_back(pool[i++], Split::test);
  }
  std::sort(a.authors.begin(), a.authors.end());

  if (!spec.withheld_genres.empty()) {
    for (const auto& d : corpus) {
      if (!spec.withheld_genres.count(d.genre)) continue;
      auto s = a.split_of(d.author_id);
      if (s == Split::val || s == Split::test) a.cross_domain_docs.push_back(d.key());
    }
    std::sort(a.cross_domain_docs.begin(), a.cross_domain_docs.end());
  }
  return a;
}

VerificationReport verify_splits(const Corpus& corpus, const SplitAssignment& assignment) {
  VerificationReport report;

  std::map<std::string, std::set<Split>> memberships;
  for (const auto& [author, split] : assignment.authors) memberships[author].insert(split);
  std::set<std::string> known_authors;
  for (const auto& d : corpus) known_authors.insert(d.author_id);

  for (const auto& [author, splits] : memberships) {
    if (splits.size() > 1) {
      std::vector<std::string> names;
      for (Split s : splits) names.emplace_back(to_string(s));
      report.violations.push_back({"author_overlap", author, "assigned to " + join(names, ", ")});
    }
    if (!known_authors.count(author)) report.violations.push_back({"unknown_author", author, "not present in corpus"});
  }

  auto in_split = [&](const std::string& author, Split s) {
    auto it = memberships.find(author);
    return it != memberships.end() && it->second.count(s) > 0;
  };

  std::set<std::string> cross(assignment.cross_domain_docs.begin(), assignment.cross_domain_docs.end());
  std::set<Genre> train_val_genres;
  for (const auto& d : corpus) {
    if (cross.count(d.key()) || assignment.withheld_genres.count(d.genre)) continue;
    if (in_split(d.author_id, Split::train) || in_split(d.author_id, Split::val)) train_val_genres.insert(d.genre);
  }

  std::map<std::string, const Document*> by_key;
  for (const auto& d : corpus) by_key.emplace(d.key(), &d);
  for (const auto& key : assignment.cross_domain_docs) {
    auto it = by_key.find(key);
    if (it == by_key.end()) {
      report.violations.push_back({"unknown_doc", key, "cross-domain document not in corpus"});
      continue;
    }
    const Document& d = *it->second;
    if (!(in_split(d.author_id, Split::val) || in_split(d.author_id, Split::test)) ||
        in_split(d.author_id, Split::train)) {
      report.violations.push_back({"cross_domain_author", key, "author " + d.author_id + " is not a val/test author"});
    }
    if (!assignment.withheld_genres.count(d.genre)) {
      if (train_val_genres.count(d.genre)) {
        report.violations.push_back(
            {"genre_leak", key, "genre " + std::string(to_string(d.genre)) + " also appears in train/val"});
      } else {
        report.violations.push_back(
            {"cross_domain_genre", key, "genre " + std::string(to_string(d.genre)) + " is not withheld"});
      }
    }
  }
  return report;
}

json to_json(const VerificationReport& r) {
  json v = json::array();
  for (const auto& x : r.violations) v.push_back({{"kind", x.kind}, {"subject", x.subject}, {"detail", x.detail}});
  return {{"ok", r.ok()}, {"violations", v}};
}

SplitIndex::SplitIndex(const Corpus& corpus, const SplitAssignment& assignment) : corpus_(&corpus) {
  for (const auto& [author, split] : assignment.authors) author_split_.emplace(author, split);
  std::set<std::string, std::less<>> cross(assignment.cross_domain_docs.begin(), assignment.cross_domain_docs.end());
  doc_split_.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Document& d = corpus[i];
    by_key_.emplace(d.key(), i);
    by_author_[d.author_id].push_back(i);
    std::optional<Split> s;
    auto it = author_split_.find(d.author_id);
    if (cross.count(d.key())) {
      s = Split::cross_domain;
    } else if (it != author_split_.end() && !assignment.withheld_genres.count(d.genre)) {
      s = it->second;
    }
    doc_split_.push_back(s);
  }
}

std::optional<Split> SplitIndex::split_of_doc(const Document& d) const {
  auto it = by_key_.find(d.key());
  if (it == by_key_.end()) return std::nullopt;
  return doc_split_[it->second];
}

std::optional<Split> SplitIndex::split_of_author(std::string_view author_id) const {
  auto it = author_split_.find(author_id);
  if (it == author_split_.end()) return std::nullopt;
  return it->second;
}

std::vector<const Document*> SplitIndex::docs_of(Split s, std::string_view author_id) const {
  std::vector<const Document*> out;
  auto it = by_author_.find(author_id);
  if (it == by_author_.end()) return out;
  for (std::size_t i : it->second)
    if (doc_split_[i] == s) out.push_back(&(*corpus_)[i]);
  return out;
}

std::vector<const Document*> SplitIndex::docs_in(Split s) const {
  std::vector<const Document*> out;
  for (std::size_t i = 0; i < corpus_->size(); ++i)
    if (doc_split_[i] == s) out.push_back(&(*corpus_)[i]);
  return out;
}

std::vector<std::string> SplitIndex::authors_in(Split s) const {
  std::set<std::string> out;
  for (std::size_t i = 0; i < corpus_->size(); ++i)
    if (doc_split_[i] == s) out.insert((*corpus_)[i].author_id);
  return {out.begin(), out.end()};
}

const Document* SplitIndex::find(std::string_view key) const {
  auto it = by_key_.find(key);
  return it == by_key_.end() ? nullptr : &(*corpus_)[it->second];
}

}  // namespace persrm
