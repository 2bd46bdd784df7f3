#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "doctest.h"
#include "synthetic.hpp"
#include "udgenre/embeddings.hpp"
#include "udgenre/error.hpp"
#include "udgenre/features.hpp"

using namespace udgenre;
namespace fs = std::filesystem;

namespace {

std::vector<std::string_view> views(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

EmbeddingStore random_store(std::mt19937_64& rng, std::size_t n, std::uint32_t d) {
  std::normal_distribution<float> g;
  EmbeddingStore s(d);
  std::vector<float> row(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : row) v = g(rng);
    s.append({"tb" + std::to_string(i % 3), "s" + std::to_string(i)}, row);
  }
  return s;
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("abcd with n 3..4") {
    std::vector<std::string> texts{"abcd"};
    auto f = char_ngram_features(views(texts), {3, 4, 1, 1.0, 1});
    CHECK(f.vocab.entries() == std::vector<std::string>{"abc", "abcd", "bcd"});
    REQUIRE(f.matrix.rows() == 1);
    CHECK(f.matrix.row_end(0) - f.matrix.row_begin(0) == 3);
    for (auto c : f.matrix.count) CHECK(c == 1);
  }

  TEST_CASE("min_df keeps aaa and drops bbb") {
    // max_df_frac 1.0 so that df 2 of 3 passes the upper bound.
    std::vector<std::string> texts{"aaa", "aaa", "bbb"};
    auto f = char_ngram_features(views(texts), {3, 6, 2, 1.0, 1});
    CHECK(f.vocab.index_of("aaa") >= 0);
    CHECK(f.vocab.index_of("bbb") == -1);
  }

  TEST_CASE("max_df excludes an n-gram in 4 of 10 texts") {
    std::vector<std::string> texts;
    for (int i = 0; i < 10; ++i) {
      if (i < 4) {
        texts.push_back("the" + std::to_string(i));
      } else if (i < 6) {
        texts.push_back("uvw");
      } else {
        texts.push_back(std::to_string(1000 + i));
      }
    }
    auto f = char_ngram_features(views(texts), {3, 3, 2, 0.30, 1});
    CHECK(f.vocab.index_of("the") == -1);
    CHECK(f.vocab.index_of("uvw") >= 0);
  }

  TEST_CASE("everything filtered is an error") {
    std::vector<std::string> texts{"abc", "xyz"};
    CHECK_THROWS_WITH_AS(char_ngram_features(views(texts)), "empty vocabulary", ValidationError);
  }

  TEST_CASE("code points, not bytes") {
    auto grams = char_ngrams("\xC3\xA9t\xC3\xA9", 3, 3);
    REQUIRE(grams.size() == 1);
    CHECK(grams[0] == "\xC3\xA9t\xC3\xA9");
  }

  TEST_CASE("df bounds hold under a brute-force recount") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::string> texts;
      const std::size_t n = 5 + rng() % 40;
      for (std::size_t i = 0; i < n; ++i) {
        std::string t;
        for (std::size_t c = 0, len = 3 + rng() % 20; c < len; ++c) t += "ab c"[rng() % 4];
        texts.push_back(t);
      }
      NgramParams p{3, 5, 1 + rng() % 3, 0.2 + 0.1 * static_cast<double>(rng() % 7), 1 + static_cast<unsigned>(rng() % 3)};
      std::map<std::string, std::size_t> df;
      std::map<std::string, std::vector<std::size_t>> counts;
      for (std::size_t i = 0; i < n; ++i) {
        std::set<std::string> distinct;
        for (std::size_t start = 0; start < texts[i].size(); ++start) {
          for (std::size_t len = p.n_min; len <= p.n_max && start + len <= texts[i].size(); ++len) {
            distinct.insert(texts[i].substr(start, len));
          }
        }
        for (const auto& g : distinct) ++df[g];
      }
      const auto max_df = static_cast<std::size_t>(std::floor(p.max_df_frac * static_cast<double>(n) + 1e-9));
      std::vector<std::string> expected;
      for (const auto& [g, d] : df) {
        if (d >= p.min_df && d <= max_df) expected.push_back(g);
      }
      if (expected.empty()) {
        CHECK_THROWS(char_ngram_features(views(texts), p));
        continue;
      }
      auto f = char_ngram_features(views(texts), p);
      CHECK(f.vocab.entries() == expected);
      for (std::size_t j = 0; j < f.vocab.size(); ++j) CHECK(f.vocab.df()[j] == df[f.vocab.entries()[j]]);
      // Stored counts equal occurrence counts.
      for (std::size_t r = 0; r < n; ++r) {
        for (auto i = f.matrix.row_begin(r); i < f.matrix.row_end(r); ++i) {
          const auto& g = f.vocab.entries()[f.matrix.col[i]];
          std::size_t occ = 0;
          for (std::size_t s = 0; s + g.size() <= texts[r].size(); ++s) occ += texts[r].compare(s, g.size(), g) == 0;
          CHECK(f.matrix.count[i] == occ);
        }
      }
      // Same input, different thread count: identical result.
      NgramParams q = p;
      q.threads = 4;
      auto g = char_ngram_features(views(texts), q);
      CHECK(g.vocab.entries() == f.vocab.entries());
      CHECK(g.matrix.col == f.matrix.col);
      CHECK(g.matrix.count == f.matrix.count);
    }
  }
}

TEST_SUITE("embeddings") {
  TEST_CASE("header echo for N=2, d=3") {
    auto dir = testing::temp_dir("emb-basic");
    std::ofstream data(dir / "e.bin", std::ios::binary);
    const std::uint32_t n = 2, d = 3;
    data.write("EMB1", 4);
    data.write(reinterpret_cast<const char*>(&n), 4);
    data.write(reinterpret_cast<const char*>(&d), 4);
    const float values[6] = {1, 2, 3, 4, 5, 6};
    data.write(reinterpret_cast<const char*>(values), sizeof(values));
    data.close();
    std::ofstream(dir / "e.idx") << "tb\ta\ntb\tb\n";
    auto store = read_embeddings(dir / "e.bin", dir / "e.idx");
    CHECK(store.rows() == 2);
    CHECK(store.dim() == 3);
    CHECK(store.row(1)[2] == 6.0f);
    CHECK(*store.find("tb", "b") == 1);

    std::ofstream(dir / "bad.idx") << "tb\ta\ntb\tb\ntb\tc\n";
    CHECK_THROWS_WITH(read_embeddings(dir / "e.bin", dir / "bad.idx"), doctest::Contains("3"));
  }

  TEST_CASE("bad magic and non-finite values") {
    auto dir = testing::temp_dir("emb-bad");
    std::ofstream(dir / "x.bin", std::ios::binary) << "NOPE00000000";
    std::ofstream(dir / "x.idx") << "";
    CHECK_THROWS_WITH(read_embeddings(dir / "x.bin", dir / "x.idx"), doctest::Contains("not an embedding file"));

    std::ofstream data(dir / "n.bin", std::ios::binary);
    const std::uint32_t n = 2, d = 1;
    const float values[2] = {1.0f, std::nanf("")};
    data.write("EMB1", 4);
    data.write(reinterpret_cast<const char*>(&n), 4);
    data.write(reinterpret_cast<const char*>(&d), 4);
    data.write(reinterpret_cast<const char*>(values), sizeof(values));
    data.close();
    std::ofstream(dir / "n.idx") << "t\ta\nt\tb\n";
    CHECK_THROWS_WITH(read_embeddings(dir / "n.bin", dir / "n.idx"), doctest::Contains("row 1"));
  }

  TEST_CASE("empty store is a 12-byte file") {
    auto dir = testing::temp_dir("emb-empty");
    write_embeddings(EmbeddingStore(768), dir / "e.bin", dir / "e.idx");
    CHECK(fs::file_size(dir / "e.bin") == 12);
    CHECK(fs::file_size(dir / "e.idx") == 0);
    auto back = read_embeddings(dir / "e.bin", dir / "e.idx");
    CHECK(back.dim() == 768);
    CHECK(back.rows() == 0);
  }

  TEST_CASE("one zero vector writes dim*4 zero bytes") {
    auto dir = testing::temp_dir("emb-zero");
    EmbeddingStore s(5);
    std::vector<float> zero(5, 0.0f);
    s.append({"t", "a"}, zero);
    write_embeddings(s, dir / "e.bin", dir / "e.idx");
    auto bytes = slurp(dir / "e.bin");
    REQUIRE(bytes.size() == 12 + 20);
    CHECK(bytes.substr(0, 4) == "EMB1");
    CHECK(std::all_of(bytes.begin() + 12, bytes.end(), [](char c) { return c == 0; }));
  }

  TEST_CASE("write/read/write is byte identical for random stores") {
    std::mt19937_64 rng(29);
    auto dir = testing::temp_dir("emb-roundtrip");
    for (int trial = 0; trial < 20; ++trial) {
      auto s = random_store(rng, rng() % 40, 1 + static_cast<std::uint32_t>(rng() % 16));
      write_embeddings(s, dir / "a.bin", dir / "a.idx");
      auto back = read_embeddings(dir / "a.bin", dir / "a.idx");
      CHECK(back == s);
      write_embeddings(back, dir / "b.bin", dir / "b.idx");
      CHECK(slurp(dir / "a.bin") == slurp(dir / "b.bin"));
      CHECK(slurp(dir / "a.idx") == slurp(dir / "b.idx"));
    }
  }

  TEST_CASE("centroid examples and naive oracle") {
    EmbeddingStore s(2);
    s.append({"t", "a"}, std::vector<float>{1, 0});
    s.append({"t", "b"}, std::vector<float>{3, 0});
    CHECK(centroid(s, {0, 1}) == std::vector<double>{2.0, 0.0});
    CHECK(centroid(s, {1}) == std::vector<double>{3.0, 0.0});
    CHECK_THROWS_WITH(centroid(s, {}), "empty cluster");

    std::mt19937_64 rng(31);
    auto big = random_store(rng, 100, 7);
    std::vector<std::size_t> rows(100);
    std::iota(rows.begin(), rows.end(), 0);
    std::vector<long double> naive(7, 0.0L);
    for (auto r = rows.rbegin(); r != rows.rend(); ++r) {
      for (std::size_t j = 0; j < 7; ++j) naive[j] += big.row(*r)[j];
    }
    auto c = centroid(big, rows);
    for (std::size_t j = 0; j < 7; ++j) {
      const double expect = static_cast<double>(naive[j] / 100.0L);
      CHECK(std::abs(c[j] - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
    }
    std::shuffle(rows.begin(), rows.end(), rng);
    CHECK(centroid(big, rows) == c);
  }

  TEST_CASE("missing sentences are listed") {
    auto corpus = testing::make_corpus({{"xx_a", {GenreLabel::news}, 3, 0, 0}});
    EmbeddingStore s(2);
    s.append({"xx_a", "xx_a-train-0"}, std::vector<float>{1, 0});
    CHECK_THROWS_WITH(resolve_rows(s, corpus, corpus.all_refs()), doctest::Contains("xx_a-train-1"));
  }
}
