#include "synthetic.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "udgenre/random.hpp"

namespace udgenre::testing {

namespace fs = std::filesystem;

namespace {

// UTF-8 encoding of a code point in the two-byte range.
std::string encode(char32_t cp) {
  std::string s;
  s += static_cast<char>(0xC0 | (cp >> 6));
  s += static_cast<char>(0x80 | (cp & 0x3F));
  return s;
}

constexpr std::size_t kLettersPerGenre = 6;

}  // namespace

GenreLabel planted_genre(const Treebank& tb, std::size_t sentence) {
  const auto labels = tb.genres.labels();
  return labels[sentence % labels.size()];
}

GenreLabel planted_genre(const Corpus& corpus, SentenceRef ref) {
  return planted_genre(corpus.treebank_of(ref), ref.sentence);
}

std::string genre_text(GenreLabel genre, std::mt19937_64& rng) {
  // Latin Extended-A/B code points, a disjoint block of letters per genre.
  const char32_t base = 0x100 + static_cast<char32_t>(genre_index(genre) * kLettersPerGenre);
  const std::size_t words = 6 + uniform_below(rng, 6);
  std::string text;
  for (std::size_t w = 0; w < words; ++w) {
    if (w) text += ' ';
    const std::size_t len = 2 + uniform_below(rng, 4);
    for (std::size_t c = 0; c < len; ++c) text += encode(base + static_cast<char32_t>(uniform_below(rng, kLettersPerGenre)));
  }
  return text;
}

Corpus make_corpus(const std::vector<TreebankSpec>& specs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Treebank> treebanks;
  for (const auto& spec : specs) {
    Treebank tb;
    tb.id = spec.id;
    tb.language = spec.id.substr(0, spec.id.find('_'));
    for (auto g : spec.genres) tb.genres.insert(g);
    const std::pair<DeclaredSplit, std::size_t> parts[] = {
        {DeclaredSplit::train, spec.train}, {DeclaredSplit::dev, spec.dev}, {DeclaredSplit::test, spec.test}};
    for (const auto& [split, n] : parts) {
      for (std::size_t i = 0; i < n; ++i) {
        const GenreLabel g = planted_genre(tb, tb.sentences.size());
        Sentence s;
        s.sent_id = spec.id + "-" + std::string(split_name(split)) + "-" + std::to_string(i);
        s.text = genre_text(g, rng);
        std::istringstream words(s.text);
        for (std::string w; words >> w;) s.tokens.push_back(w);
        s.comments.push_back({"sent_id", s.sent_id});
        if (tb.genres.size() > 1) s.comments.push_back({"genre", std::string(genre_name(g))});
        s.comments.push_back({"text", s.text});
        tb.add(std::move(s), split);
      }
    }
    treebanks.push_back(std::move(tb));
  }
  return Corpus(std::move(treebanks));
}

std::vector<double> genre_center(GenreLabel g, const PlantedEmbedding& p) {
  std::vector<double> c(p.dim, 0.0);
  c[genre_index(g)] = p.separation * p.sigma / std::sqrt(2.0);
  return c;
}

EmbeddingStore planted_embeddings(const Corpus& corpus, const PlantedEmbedding& p) {
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> noise(0.0, p.sigma);
  EmbeddingStore store(p.dim);
  std::vector<float> row(p.dim);
  for (auto ref : corpus.all_refs()) {
    const auto center = genre_center(planted_genre(corpus, ref), p);
    for (std::size_t j = 0; j < p.dim; ++j) row[j] = static_cast<float>(center[j] + noise(rng));
    store.append({corpus.treebank_of(ref).id, corpus.sentence(ref).sent_id}, row);
  }
  return store;
}

EmbeddingStore label_embeddings(const PlantedEmbedding& p) {
  EmbeddingStore store(p.dim);
  for (auto g : all_genres()) {
    auto c = genre_center(g, p);
    std::vector<float> row(c.begin(), c.end());
    std::string name(genre_name(g));
    store.append({name, name}, row);
  }
  return store;
}

std::string comment_mapping(const Corpus& corpus) {
  std::string out = "# treebank\tkind\traw\tgenre\n";
  for (const auto& tb : corpus.treebanks()) {
    if (tb.single_genre()) continue;
    for (auto g : tb.genres.labels()) {
      out += tb.id + "\tcomment-key\t" + std::string(genre_name(g)) + "\t" + std::string(genre_name(g)) + "\n";
    }
  }
  return out;
}

fs::path temp_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("udgenre-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

DiskFixture write_fixture(const fs::path& dir, const Corpus& corpus, const PlantedEmbedding& p) {
  DiskFixture fx;
  fx.dir = dir;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["treebanks"] = nlohmann::json::array();
  for (const auto& tb : corpus.treebanks()) {
    nlohmann::json entry;
    entry["id"] = tb.id;
    entry["language"] = tb.language;
    entry["genres"] = nlohmann::json::array();
    for (auto g : tb.genres.labels()) entry["genres"].push_back(genre_name(g));
    entry["files"] = nlohmann::json::object();
    for (auto split : {DeclaredSplit::train, DeclaredSplit::dev, DeclaredSplit::test}) {
      std::vector<Sentence> part;
      for (std::size_t i = 0; i < tb.sentences.size(); ++i) {
        if (tb.declared[i] == split) part.push_back(tb.sentences[i]);
      }
      if (part.empty()) continue;
      const std::string file = tb.id + "/" + tb.id + "-ud-" + std::string(split_name(split)) + ".conllu";
      fs::create_directories(dir / tb.id);
      std::ofstream out(dir / file, std::ios::binary);
      write_conllu(out, part);
      entry["files"][std::string(split_name(split))] = file;
    }
    manifest["treebanks"].push_back(entry);
  }
  fx.manifest = dir / "manifest.json";
  std::ofstream(fx.manifest) << manifest.dump(2) << '\n';
  fx.mapping = dir / "mapping.tsv";
  std::ofstream(fx.mapping) << comment_mapping(corpus);
  fx.emb_data = dir / "sentences.emb";
  fx.emb_index = dir / "sentences.idx";
  write_embeddings(planted_embeddings(corpus, p), fx.emb_data, fx.emb_index);
  fx.label_data = dir / "labels.emb";
  fx.label_index = dir / "labels.idx";
  write_embeddings(label_embeddings(p), fx.label_data, fx.label_index);
  return fx;
}

std::vector<TreebankSpec> small_specs() {
  using G = GenreLabel;
  return {
      {"en_news1", {G::news}, 60, 10, 30},
      {"en_news2", {G::news}, 50, 10, 30},
      {"de_wiki", {G::wiki}, 60, 10, 30},
      {"fr_fiction", {G::fiction}, 60, 10, 30},
      {"en_mix", {G::news, G::wiki}, 80, 10, 40},
      {"cs_tri", {G::news, G::wiki, G::fiction}, 90, 15, 45},
  };
}

}  // namespace udgenre::testing
