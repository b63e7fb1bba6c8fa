#include "synthetic_corpus.hpp"

#include <atomic>
#include <cctype>
#include <cstdio>
#include <unistd.h>

namespace persrm::testing {

namespace {

const std::vector<std::string> kFunction{"the", "a",    "of",  "and",  "to",   "in",  "that", "it",  "was", "for",
                                         "on",  "with", "as",  "by",   "at",   "from", "this", "but", "they", "were"};

// Words the mock perturbation knows substitutes for.
const std::vector<std::string> kSwappable{"big",  "small", "quick", "good",  "bad",  "happy",     "said",  "very",
                                          "often", "new",  "old",   "strong", "began", "important", "major", "show"};

const std::vector<std::string> kContent{
    "market",   "river",    "council",  "engine",   "harvest",  "ledger",   "harbor",   "signal",   "orchard",
    "tariff",   "pension",  "quarry",   "lantern",  "glacier",  "festival", "refinery", "verdict",  "cabinet",
    "airline",  "bullion",  "copper",   "freight",  "turbine",  "vaccine",  "satellite", "election", "merger",
    "dividend", "subsidy",  "drought",  "monsoon",  "embassy",  "treaty",   "uprising", "pipeline", "reactor",
    "auction",  "mortgage", "mill",     "workshop", "garden",   "kitchen",  "library",  "sermon",   "ballad",
    "chapter",  "canvas",   "ferry",    "railway",  "tunnel",   "bridge",   "highway",  "airport",  "stadium",
    "clinic",   "school",   "campus",   "village",  "province", "capital",  "frontier", "desert",   "forest",
    "meadow",   "valley",   "summit",   "island",   "coast",    "lagoon",   "canyon",   "plateau",  "delta",
    "budget",   "forecast", "inventory", "payroll", "contract", "lawsuit",  "patent",   "royalty",  "franchise",
    "startup",  "venture",  "portfolio", "bond",    "equity",   "currency", "inflation", "recession", "surplus",
    "deficit",  "export",   "import",   "quota",    "embargo",  "sanction", "ceasefire", "summit",  "protocol",
    "memo",     "meeting",  "deadline", "schedule", "proposal", "draft",    "review",   "invoice",  "receipt",
    "journey",  "holiday",  "weekend",  "evening",  "morning",  "winter",   "summer",   "autumn",   "spring",
    "puzzle",   "riddle",   "melody",   "rhythm",   "poem",     "novel",    "sketch",   "mural",    "statue"};

const char* kPunct[] = {".", ".", ";", "!", "."};

std::string capitalize(std::string w) {
  if (!w.empty()) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
  return w;
}

struct AuthorStyle {
  std::vector<std::string> signature;
  int sentence_min = 6;
  int sentence_span = 6;
  std::string end = ".";
  std::string opener;
};

AuthorStyle make_style(Rng& rng) {
  AuthorStyle s;
  std::vector<std::string> pool = kContent;
  rng.shuffle(pool);
  s.signature.assign(pool.begin(), pool.begin() + 14);
  s.sentence_min = 5 + static_cast<int>(rng.below(5));
  s.sentence_span = 3 + static_cast<int>(rng.below(6));
  s.end = kPunct[rng.below(5)];
  s.opener = capitalize(s.signature[0]);
  return s;
}

std::string sentence(const AuthorStyle& style, Rng& rng) {
  int n = style.sentence_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(style.sentence_span)));
  std::string out;
  for (int i = 0; i < n; ++i) {
    double u = rng.unit();
    std::string w;
    if (u < 0.45) {
      w = style.signature[rng.below(style.signature.size())];
    } else if (u < 0.80) {
      w = kFunction[rng.below(kFunction.size())];
    } else if (u < 0.92) {
      w = kSwappable[rng.below(kSwappable.size())];
    } else {
      w = kContent[rng.below(kContent.size())];
    }
    if (i == 0) w = capitalize(w);
    out += (i ? " " : "") + w;
  }
  return out + style.end;
}

std::string body(const AuthorStyle& style, Rng& rng) {
  int sentences = 5 + static_cast<int>(rng.below(4));
  std::string out = style.opener + " matters here" + style.end;
  for (int i = 0; i < sentences; ++i) out += " " + sentence(style, rng);
  return out;
}

Document make_doc(const std::string& author, int k, Genre genre, CorpusLabel corpus, const AuthorStyle& style, Rng& rng) {
  Document d;
  char id[32];
  std::snprintf(id, sizeof id, "d%02d", k);
  d.id = id;
  d.author_id = author;
  d.genre = genre;
  d.corpus = corpus;
  d.body = body(style, rng);
  if (rng.below(6) != 0) {
    d.query = "Write a " + std::string(to_string(genre)) + " piece about the " + kContent[rng.below(kContent.size())] +
              " and the " + kContent[rng.below(kContent.size())] + ".";
  } else {
    d.query = lead_sentence(d.body);
    d.query_from_lead = true;
  }
  return d;
}

}  // namespace

Corpus synthetic_corpus(const SyntheticShape& shape) {
  Corpus corpus;
  for (int a = 1; a <= shape.ccat_authors; ++a) {
    char name[16];
    std::snprintf(name, sizeof name, "C%02d", a);
    Rng rng(derive_seed(shape.seed, name));
    AuthorStyle style = make_style(rng);
    for (int k = 0; k < shape.ccat_docs; ++k)
      corpus.push_back(make_doc(name, k, Genre::news, CorpusLabel::ccat, style, rng));
  }
  for (int a = 1; a <= shape.cmcc_authors; ++a) {
    char name[16];
    std::snprintf(name, sizeof name, "M%02d", a);
    Rng rng(derive_seed(shape.seed, name));
    AuthorStyle style = make_style(rng);
    int k = 0;
    for (Genre g : {Genre::email, Genre::essay})
      for (int i = 0; i < shape.cmcc_docs_per_genre; ++i)
        corpus.push_back(make_doc(name, k++, g, CorpusLabel::cmcc, style, rng));
    for (Genre g : {Genre::blog, Genre::interview, Genre::chat})
      corpus.push_back(make_doc(name, k++, g, CorpusLabel::cmcc, style, rng));
  }
  return corpus;
}

SplitSpec standard_spec(std::uint64_t seed) {
  SplitSpec s;
  s.seed = seed;
  s.counts[CorpusLabel::ccat] = {45, 2, 3};
  s.counts[CorpusLabel::cmcc] = {18, 1, 2};
  s.withheld_genres = {Genre::blog, Genre::interview, Genre::chat};
  return s;
}

std::filesystem::path write_corpus_tree(const Corpus& corpus, const std::filesystem::path& root) {
  std::string manifest = "id,author_id,genre,corpus,query,path\n";
  auto quote = [](const std::string& s) {
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
  };
  for (const auto& d : corpus) {
    std::string rel = "docs/" + d.author_id + "/" + d.id + ".txt";
    write_file(root / rel, d.body);
    manifest += d.id + "," + d.author_id + "," + std::string(to_string(d.genre)) + "," +
                std::string(to_string(d.corpus)) + "," + quote(d.query_from_lead ? std::string() : d.query) + "," + rel +
                "\n";
  }
  auto path = root / "manifest.csv";
  write_file(path, manifest);
  return path;
}

TempDir::TempDir(const std::string& label) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("persrm-" + label + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace persrm::testing
