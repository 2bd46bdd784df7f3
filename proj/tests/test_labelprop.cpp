#include <random>
#include <sstream>

#include "doctest.h"
#include "synthetic.hpp"
#include "udgenre/error.hpp"
#include "udgenre/labelprop.hpp"

using namespace udgenre;

namespace {

using G = GenreLabel;

// One sentence per listed vector; cluster ids given explicitly.
struct Handmade {
  Corpus corpus;
  EmbeddingStore store{2};
};

Handmade handmade(const std::vector<std::pair<std::string, LabelSet>>& tbs,
                  const std::vector<std::vector<std::vector<float>>>& rows) {
  std::vector<Treebank> list;
  Handmade h;
  for (std::size_t t = 0; t < tbs.size(); ++t) {
    Treebank tb;
    tb.id = tbs[t].first;
    tb.genres = tbs[t].second;
    for (std::size_t i = 0; i < rows[t].size(); ++i) {
      Sentence s;
      s.sent_id = "s" + std::to_string(i);
      s.text = "x";
      s.tokens = {"x"};
      tb.add(s, DeclaredSplit::test);
      h.store.append({tb.id, s.sent_id}, rows[t][i]);
    }
    list.push_back(tb);
  }
  h.corpus = Corpus(std::move(list));
  return h;
}

TreebankClusters clusters_for(const Handmade& h, std::uint32_t t, std::vector<std::uint32_t> ids) {
  ClusterAssignment a;
  a.k = h.corpus.treebank(t).genres.size();
  for (std::uint32_t s = 0; s < ids.size(); ++s) a.refs.push_back({t, s});
  a.cluster = std::move(ids);
  return make_treebank_clusters(h.corpus, t, std::move(a), h.store);
}

}  // namespace

TEST_SUITE("labelprop") {
  TEST_CASE("nearest cluster takes the seed genre, closure takes the rest") {
    // cos distance of b1=(0.9,0.1) to A=(1,0) is ~0.006, of b2=(0,1) is 1.
    auto h = handmade({{"A", {G::news}}, {"B", {G::news, G::wiki}}},
                      {{{1.0f, 0.0f}}, {{0.9f, 0.1f}, {0.0f, 1.0f}}});
    std::vector<TreebankClusters> tcs{clusters_for(h, 0, {0}), clusters_for(h, 1, {0, 1})};
    auto r = propagate_labels(tcs);
    REQUIRE(r.complete());
    const auto& b = r.clusters[1];
    CHECK(b.labels[0] == G::news);
    CHECK(b.rounds[0] == 1);
    CHECK(*b.scores[0] == doctest::Approx(1.0 - 0.9 / std::sqrt(0.82)));
    CHECK(b.labels[1] == G::wiki);
    CHECK(b.rounds[1] == 4);
    CHECK(r.unreachable.empty());
  }

  TEST_CASE("unreachable genre is reported as residue") {
    auto h = handmade({{"A", {G::news}}, {"B", {G::news, G::wiki, G::poetry}}},
                      {{{1, 0}}, {{1, 0.1f}, {0, 1}, {0.1f, 1}}});
    auto r = propagate_labels({clusters_for(h, 0, {0}), clusters_for(h, 1, {0, 1, 2})});
    CHECK_FALSE(r.complete());
    CHECK(r.residue.size() == 2);
    CHECK(r.unreachable == LabelSet{G::wiki, G::poetry});
    std::ostringstream out;
    write_residue_report(out, r);
    CHECK(out.str().find("#unreachable\tpoetry") != std::string::npos);
    CHECK_THROWS_AS(to_predictions(r.clusters, "gmm+l", 1), ValidationError);
    fill_residue_in_label_order(r);
    auto preds = to_predictions(r.clusters, "gmm+l", 1);
    CHECK(preds.size() == 4);
  }

  TEST_CASE("single genre clusters and broadcast") {
    auto corpus = testing::make_corpus({{"xx_a", {G::news}, 40, 0, 0}});
    auto emb = testing::planted_embeddings(corpus);
    ClusterOptions o;
    auto tcs = cluster_all_treebanks(corpus, corpus.all_refs(), emb, o);
    REQUIRE(tcs.size() == 1);
    CHECK(tcs[0].k() == 1);
    CHECK(tcs[0].assignment.cluster_sizes() == std::vector<std::size_t>{40});
    auto preds = to_predictions(propagate_labels(tcs).clusters, "gmm+l", 41);
    CHECK(preds.size() == 40);
    for (const auto& p : preds.items) CHECK(p.label == G::news);
  }

  TEST_CASE("two planted blobs in one treebank") {
    auto corpus = testing::make_corpus({{"xx_ab", {G::news, G::wiki}, 60, 0, 0}});
    testing::PlantedEmbedding pe;
    pe.separation = 20.0;
    auto emb = testing::planted_embeddings(corpus, pe);
    for (auto method : {ClusterMethod::gmm, ClusterMethod::lda}) {
      ClusterOptions o;
      o.method = method;
      auto tcs = cluster_all_treebanks(corpus, corpus.all_refs(), emb, o);
      const auto& a = tcs[0].assignment;
      // Same partition as the planted genres.
      std::map<std::uint32_t, GenreLabel> seen;
      bool consistent = true;
      for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it, fresh] = seen.emplace(a.cluster[i], testing::planted_genre(corpus, a.refs[i]));
        consistent = consistent && it->second == testing::planted_genre(corpus, a.refs[i]);
      }
      CHECK(consistent);
      CHECK(seen.size() == 2);
      // Centroids live in embedding space whatever the method.
      for (std::size_t c = 0; c < 2; ++c) CHECK(tcs[0].centroids[c]->size() == pe.dim);
    }
  }

  TEST_CASE("fewer sentences than clusters are flagged") {
    auto corpus = testing::make_corpus({{"xx_tiny", {G::news, G::wiki, G::fiction}, 2, 0, 0}});
    auto emb = testing::planted_embeddings(corpus);
    auto tcs = cluster_all_treebanks(corpus, corpus.all_refs(), emb, {});
    CHECK(tcs[0].flagged);
    CHECK(tcs[0].assignment.cluster_sizes() == std::vector<std::size_t>{2, 0, 0});
    CHECK(tcs[0].empty_cluster(1));
  }

  TEST_CASE("labeling does not depend on input order") {
    auto corpus = testing::make_corpus(testing::small_specs());
    auto emb = testing::planted_embeddings(corpus);
    auto base = cluster_all_treebanks(corpus, corpus.all_refs(), emb, {});
    auto reference = propagate_labels(base);
    std::ostringstream ref_report;
    write_label_report(ref_report, reference);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
      auto shuffled = base;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      std::ostringstream report;
      write_label_report(report, propagate_labels(shuffled));
      CHECK(report.str() == ref_report.str());
    }
  }

  TEST_CASE("invariants on random planted corpora") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 6; ++trial) {
      std::vector<testing::TreebankSpec> specs;
      for (int t = 0; t < 3; ++t) specs.push_back({"s" + std::to_string(t), {genre_at(t)}, 20, 0, 0});
      for (int t = 0; t < 4; ++t) {
        std::vector<G> genres{genre_at(rng() % 3), genre_at(rng() % 3), genre_at(3 + rng() % 2)};
        specs.push_back({"m" + std::to_string(t), genres, 40 + rng() % 20, 0, 0});
      }
      auto corpus = testing::make_corpus(specs, rng());
      auto emb = testing::planted_embeddings(corpus);
      auto r = propagate_labels(cluster_all_treebanks(corpus, corpus.all_refs(), emb, {}));
      for (std::size_t round = 1; round < r.pool_sizes.size(); ++round) {
        for (std::size_t g = 0; g < kGenreCount; ++g) CHECK(r.pool_sizes[round][g] >= r.pool_sizes[round - 1][g]);
      }
      fill_residue_in_label_order(r);
      for (const auto& tc : r.clusters) {
        LabelSet used;
        for (const auto& l : tc.labels) {
          REQUIRE(l.has_value());
          CHECK(tc.genres.contains(*l));
          CHECK_FALSE(used.contains(*l));
          used.insert(*l);
        }
      }
      auto preds = to_predictions(r.clusters, "gmm+l", 1);
      CHECK(preds.size() == corpus.sentence_count());
      std::size_t correct = 0;
      for (const auto& p : preds.items) {
        const auto& tb = corpus.treebank_of(p.ref);
        CHECK(tb.genres.contains(p.label));
        if (tb.single_genre()) CHECK(p.label == tb.genres.sole());
        correct += p.label == testing::planted_genre(corpus, p.ref);
      }
      // Full covariance on tiny clusters (n < d) can misplace a stray point.
      CHECK(correct * 100 >= preds.size() * 97);
    }
  }

  TEST_CASE("distance functions") {
    CHECK(centroid_distance({1, 0}, {2, 0}, CentroidDistance::cosine) == doctest::Approx(0.0));
    CHECK(centroid_distance({1, 0}, {0, 3}, CentroidDistance::cosine) == doctest::Approx(1.0));
    CHECK(centroid_distance({1, 0}, {4, 4}, CentroidDistance::euclidean) == doctest::Approx(5.0));
    CHECK(centroid_distance({0, 0}, {1, 1}, CentroidDistance::cosine) == 1.0);
  }
}
