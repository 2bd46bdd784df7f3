#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "synthetic.hpp"
#include "udgenre/error.hpp"
#include "udgenre/metrics.hpp"

using namespace udgenre;
using G = GenreLabel;

namespace {

PredictionSet predict(const Corpus& corpus, const std::function<G(SentenceRef)>& f) {
  PredictionSet p;
  p.method = "test";
  for (auto ref : corpus.all_refs()) p.items.push_back({ref, f(ref), 1.0});
  return p;
}

GenreDistribution uniform_over(std::initializer_list<G> labels) { return GenreDistribution::uniform(LabelSet(labels)); }

LabelSet random_set(std::mt19937_64& rng) {
  LabelSet s;
  while (s.empty()) {
    for (auto g : all_genres()) {
      if (rng() % 4 == 0) s.insert(g);
    }
  }
  return s;
}

// Pairwise recomputation with plain arrays.
double delta_bc_oracle(const Corpus& corpus, const PredictionSet& preds) {
  const auto n = corpus.treebanks().size();
  std::vector<std::array<double, kGenreCount>> counts(n);
  std::vector<double> totals(n, 0.0);
  for (auto& c : counts) c.fill(0.0);
  for (const auto& p : preds.items) {
    counts[p.ref.treebank][genre_index(p.label)] += 1.0;
    totals[p.ref.treebank] += 1.0;
  }
  double sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t t = s + 1; t < n; ++t) {
      if (totals[s] == 0 || totals[t] == 0) continue;
      const auto& ls = corpus.treebank(static_cast<std::uint32_t>(s)).genres;
      const auto& lt = corpus.treebank(static_cast<std::uint32_t>(t)).genres;
      double expected = 0.0, predicted = 0.0;
      for (std::size_t g = 0; g < kGenreCount; ++g) {
        const double us = ls.contains(genre_at(g)) ? 1.0 / static_cast<double>(ls.size()) : 0.0;
        const double ut = lt.contains(genre_at(g)) ? 1.0 / static_cast<double>(lt.size()) : 0.0;
        expected += std::sqrt(us * ut);
        predicted += std::sqrt(counts[s][g] / totals[s] * counts[t][g] / totals[t]);
      }
      sum += std::abs(expected - predicted);
      ++pairs;
    }
  }
  return 100.0 * sum / static_cast<double>(pairs);
}

double purity_oracle(const Corpus& corpus, const GroupAssignment& a) {
  std::map<std::uint32_t, std::map<G, std::size_t>> table;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.refs.size(); ++i) {
    const auto& tb = corpus.treebank_of(a.refs[i]);
    if (!tb.single_genre()) continue;
    ++table[a.group[i]][tb.genres.sole()];
    ++n;
  }
  std::size_t hit = 0;
  for (const auto& [group, row] : table) {
    std::size_t best = 0;
    for (const auto& [g, c] : row) best = std::max(best, c);
    hit += best;
  }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(n);
}

std::vector<testing::TreebankSpec> random_specs(std::mt19937_64& rng) {
  std::vector<testing::TreebankSpec> specs;
  const std::size_t count = 3 + rng() % 5;
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<G> genres{genre_at(rng() % 4)};
    if (rng() % 2) genres.push_back(genre_at(4 + rng() % 3));
    specs.push_back({"tb" + std::to_string(t), genres, 0, 0, 5 + rng() % 30});
  }
  return specs;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("bhattacharyya worked pair") {
    auto fsw = uniform_over({G::fiction, G::spoken, G::wiki});
    CHECK(bhattacharyya(fsw, uniform_over({G::news})) == 0.0);
    CHECK(std::abs(bhattacharyya(fsw, uniform_over({G::fiction, G::medical, G::spoken})) - 2.0 / 3.0) <= 1e-12);
    CHECK(bhattacharyya(fsw, fsw) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("invalid distributions are rejected") {
    CHECK_THROWS_AS(GenreDistribution({0.5, 0.6}), ValidationError);
    CHECK_THROWS_AS(GenreDistribution({1.5, -0.5}), ValidationError);
    CHECK_THROWS_AS(GenreDistribution::from_counts({0.0, 0.0}), ValidationError);
  }

  TEST_CASE("bhattacharyya properties") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> a(kGenreCount), b(kGenreCount);
      for (std::size_t i = 0; i < kGenreCount; ++i) {
        a[i] = rng() % 3 ? u(rng) : 0.0;
        b[i] = rng() % 3 ? u(rng) : 0.0;
      }
      a[rng() % kGenreCount] += 0.1;
      b[rng() % kGenreCount] += 0.1;
      auto p = GenreDistribution::from_counts(a), q = GenreDistribution::from_counts(b);
      const double pq = bhattacharyya(p, q);
      CHECK(pq == bhattacharyya(q, p));
      CHECK(pq >= 0.0);
      CHECK(pq <= 1.0);
      CHECK(bhattacharyya(p, p) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("expected overlap") {
    CHECK(expected_overlap({G::academic, G::bible}, {G::bible, G::blog}) == doctest::Approx(0.5));
    CHECK(expected_overlap({G::news}, {G::wiki}) == 0.0);
    CHECK(expected_overlap({G::news, G::wiki, G::web}, {G::news, G::wiki, G::web}) == doctest::Approx(1.0));
    CHECK_THROWS_AS(expected_overlap({}, {G::news}), ValidationError);
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 1000; ++trial) {
      auto ls = random_set(rng), lt = random_set(rng);
      const double bc = bhattacharyya(GenreDistribution::uniform(ls), GenreDistribution::uniform(lt));
      CHECK(std::abs(expected_overlap(ls, lt) - bc) <= 1e-12);
    }
  }

  TEST_CASE("delta_bc examples") {
    auto corpus = testing::make_corpus({{"a", {G::news}, 0, 0, 4}, {"b", {G::wiki}, 0, 0, 4}});
    auto all_news = predict(corpus, [](SentenceRef) { return G::news; });
    CHECK(delta_bc(groups_of(all_news), corpus, corpus.all_refs()) == doctest::Approx(100.0));
    auto faithful = predict(corpus, [&](SentenceRef r) { return testing::planted_genre(corpus, r); });
    CHECK(delta_bc(groups_of(faithful), corpus, corpus.all_refs()) == doctest::Approx(0.0));

    auto single = testing::make_corpus({{"a", {G::news}, 0, 0, 4}});
    CHECK_THROWS_WITH_AS(delta_bc(groups_of(predict(single, [](SentenceRef) { return G::news; })), single,
                                  single.all_refs()),
                         "no pairs", ValidationError);
  }

  TEST_CASE("delta_bc is zero for exactly uniform predictions") {
    // planted_genre cycles over the metadata genres; sizes divisible by |L|.
    auto corpus = testing::make_corpus({{"a", {G::news, G::wiki}, 0, 0, 20},
                                        {"b", {G::news, G::wiki, G::fiction}, 0, 0, 30},
                                        {"c", {G::fiction}, 0, 0, 7},
                                        {"d", {G::web, G::news}, 0, 0, 12}});
    auto preds = predict(corpus, [&](SentenceRef r) { return testing::planted_genre(corpus, r); });
    CHECK(std::abs(delta_bc(groups_of(preds), corpus, corpus.all_refs())) <= 1e-9);
  }

  TEST_CASE("delta_bc matches a pairwise oracle") {
    std::mt19937_64 rng(47);
    for (int trial = 0; trial < 30; ++trial) {
      auto corpus = testing::make_corpus(random_specs(rng), rng());
      auto preds = predict(corpus, [&](SentenceRef) { return genre_at(rng() % 8); });
      CHECK(std::abs(delta_bc(groups_of(preds), corpus, corpus.all_refs()) - delta_bc_oracle(corpus, preds)) <= 1e-9);
    }
  }

  TEST_CASE("purity examples") {
    auto corpus = testing::make_corpus({{"a", {G::news}, 0, 0, 60}, {"b", {G::wiki}, 0, 0, 40}});
    auto one = predict(corpus, [](SentenceRef) { return G::poetry; });
    CHECK(*purity(groups_of(one), corpus, corpus.all_refs()) == doctest::Approx(60.0));
    auto constant = predict(corpus, [](SentenceRef r) { return r.treebank == 0 ? G::legal : G::email; });
    CHECK(*purity(groups_of(constant), corpus, corpus.all_refs()) == doctest::Approx(100.0));

    auto mixed = testing::make_corpus({{"m", {G::news, G::wiki}, 0, 0, 5}});
    CHECK_FALSE(purity(groups_of(predict(mixed, [](SentenceRef) { return G::news; })), mixed, mixed.all_refs()));
  }

  TEST_CASE("agreement examples") {
    auto corpus = testing::make_corpus(
        {{"a", {G::news}, 0, 0, 5}, {"b", {G::news}, 0, 0, 5}, {"c", {G::news}, 0, 0, 5}, {"d", {G::wiki}, 0, 0, 5}});
    auto faithful = predict(corpus, [&](SentenceRef r) { return testing::planted_genre(corpus, r); });
    CHECK(*agreement(groups_of(faithful), corpus, corpus.all_refs()) == doctest::Approx(100.0));
    // Majorities (news, news, wiki) over the three news treebanks.
    auto split = predict(corpus, [](SentenceRef r) { return r.treebank == 2 ? G::wiki : G::news; });
    CHECK(*agreement(groups_of(split), corpus, corpus.all_refs()) == doctest::Approx(100.0 / 3.0));

    auto two = testing::make_corpus({{"a", {G::news}, 0, 0, 5}, {"b", {G::news}, 0, 0, 5}});
    auto differ = predict(two, [](SentenceRef r) { return r.treebank == 0 ? G::news : G::wiki; });
    CHECK(*agreement(groups_of(differ), two, two.all_refs()) == 0.0);
    auto lone = testing::make_corpus({{"a", {G::news}, 0, 0, 5}, {"b", {G::wiki}, 0, 0, 5}});
    CHECK_FALSE(agreement(groups_of(predict(lone, [](SentenceRef) { return G::news; })), lone, lone.all_refs()));
  }

  TEST_CASE("purity oracle and renaming invariance") {
    std::mt19937_64 rng(53);
    for (int trial = 0; trial < 30; ++trial) {
      auto specs = random_specs(rng);
      specs.push_back({"s1", {G::academic}, 0, 0, 10});
      specs.push_back({"s2", {G::academic}, 0, 0, 10});
      auto corpus = testing::make_corpus(specs, rng());
      ClusterAssignment c;
      c.k = 5;
      c.refs = corpus.all_refs();
      for (std::size_t i = 0; i < c.refs.size(); ++i) c.cluster.push_back(static_cast<std::uint32_t>(rng() % 5));
      auto a = groups_of(c);
      const auto refs = corpus.all_refs();
      CHECK(*purity(a, corpus, refs) == doctest::Approx(purity_oracle(corpus, a)).epsilon(1e-12));
      std::vector<std::uint32_t> perm{0, 1, 2, 3, 4};
      std::shuffle(perm.begin(), perm.end(), rng);
      auto renamed = a;
      for (auto& g : renamed.group) g = perm[g];
      CHECK(*purity(renamed, corpus, refs) == *purity(a, corpus, refs));
      // Majority ties break toward the lower id, so renaming can move a tie;
      // compare only when every single-genre treebank has a strict majority.
      std::map<std::uint32_t, std::map<std::uint32_t, std::size_t>> votes;
      for (std::size_t i = 0; i < a.refs.size(); ++i) ++votes[a.refs[i].treebank][a.group[i]];
      bool strict = true;
      for (const auto& [tb, row] : votes) {
        std::vector<std::size_t> counts;
        for (const auto& [g, n] : row) counts.push_back(n);
        std::sort(counts.rbegin(), counts.rend());
        strict = strict && (counts.size() == 1 || counts[0] > counts[1]);
      }
      if (strict) CHECK(agreement(renamed, corpus, refs) == agreement(a, corpus, refs));
    }
  }

  TEST_CASE("micro f1") {
    auto corpus = testing::make_corpus({{"m", {G::news, G::wiki}, 0, 0, 2}});
    std::map<SentenceRef, G> gold{{{0, 0}, G::news}, {{0, 1}, G::wiki}};
    auto perfect = predict(corpus, [&](SentenceRef r) { return gold.at(r); });
    CHECK(*micro_f1(perfect, gold, corpus.all_refs()) == doctest::Approx(100.0));
    auto half = predict(corpus, [](SentenceRef) { return G::news; });
    CHECK(*micro_f1(half, gold, corpus.all_refs()) == doctest::Approx(50.0));
    CHECK_FALSE(micro_f1(half, {}, corpus.all_refs()));
  }

  TEST_CASE("micro f1 equals accuracy and the TP/FP/FN oracle") {
    std::mt19937_64 rng(59);
    auto corpus = testing::make_corpus({{"m", {G::news, G::wiki, G::fiction}, 0, 0, 100}});
    for (int trial = 0; trial < 20; ++trial) {
      std::map<SentenceRef, G> gold;
      for (auto r : corpus.all_refs()) {
        if (rng() % 4) gold[r] = genre_at(rng() % 3);
      }
      auto preds = predict(corpus, [&](SentenceRef) { return genre_at(rng() % 4); });
      std::array<std::size_t, kGenreCount> tp{}, fp{}, fn{};
      std::size_t correct = 0;
      for (const auto& p : preds.items) {
        auto it = gold.find(p.ref);
        if (it == gold.end()) continue;
        if (p.label == it->second) {
          ++tp[genre_index(p.label)];
          ++correct;
        } else {
          ++fp[genre_index(p.label)];
          ++fn[genre_index(it->second)];
        }
      }
      double TP = 0, FP = 0, FN = 0;
      for (std::size_t g = 0; g < kGenreCount; ++g) {
        TP += static_cast<double>(tp[g]);
        FP += static_cast<double>(fp[g]);
        FN += static_cast<double>(fn[g]);
      }
      const double oracle = 100.0 * 2 * TP / (2 * TP + FP + FN);
      const double f1 = *micro_f1(preds, gold, corpus.all_refs());
      CHECK(f1 == doctest::Approx(oracle).epsilon(1e-12));
      CHECK(f1 == doctest::Approx(100.0 * static_cast<double>(correct) / static_cast<double>(gold.size())));
    }
  }

  TEST_CASE("confusion rows") {
    std::mt19937_64 rng(61);
    auto corpus = testing::make_corpus({{"m", {G::news, G::wiki, G::fiction}, 0, 0, 90}});
    std::map<SentenceRef, G> gold;
    for (auto r : corpus.all_refs()) gold[r] = testing::planted_genre(corpus, r);
    auto perfect = predict(corpus, [&](SentenceRef r) { return gold.at(r); });
    auto c = confusion(perfect, gold, corpus.all_refs());
    for (auto g : {G::news, G::wiki, G::fiction}) {
      CHECK(c.ratios(genre_index(g), genre_index(g)) == 1.0);
      CHECK(c.row_counts[genre_index(g)] == 30);
    }
    CHECK(c.ratios.row(genre_index(G::poetry)).sum() == 0.0);

    auto news = predict(corpus, [](SentenceRef) { return G::news; });
    auto cn = confusion(news, gold, corpus.all_refs());
    for (auto g : {G::news, G::wiki, G::fiction}) CHECK(cn.ratios(genre_index(g), genre_index(G::news)) == 1.0);

    auto random = predict(corpus, [&](SentenceRef) { return genre_at(rng() % 5); });
    auto cr = confusion(random, gold, corpus.all_refs());
    Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kGenreCount, kGenreCount);
    for (const auto& p : random.items) counts(genre_index(gold.at(p.ref)), genre_index(p.label)) += 1.0;
    for (Eigen::Index r = 0; r < counts.rows(); ++r) {
      const double total = counts.row(r).sum();
      if (total == 0) continue;
      CHECK(cr.ratios.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
      for (Eigen::Index col = 0; col < counts.cols(); ++col) {
        CHECK(cr.ratios(r, col) == doctest::Approx(counts(r, col) / total).epsilon(1e-12));
      }
    }
    std::ostringstream csv;
    write_confusion_csv(csv, cr.ratios);
    CHECK(csv.str().rfind("gold,academic,", 0) == 0);
  }

  TEST_CASE("genre bounds on a five-treebank fixture") {
    auto corpus = testing::make_corpus({{"a", {G::news}, 0, 0, 100},
                                        {"b", {G::news, G::wiki}, 0, 0, 200},
                                        {"c", {G::wiki}, 0, 0, 50},
                                        {"d", {G::fiction, G::news, G::spoken}, 0, 0, 300},
                                        {"e", {G::poetry}, 0, 0, 350}});
    auto b = genre_bounds(corpus);
    auto check = [&](G g, double lo, double uni, double hi, std::size_t n) {
      const auto& x = b[genre_index(g)];
      CHECK(x.min_frac == doctest::Approx(lo));
      CHECK(x.uniform_frac == doctest::Approx(uni));
      CHECK(x.max_frac == doctest::Approx(hi));
      CHECK(x.treebank_count == n);
    };
    check(G::news, 0.1, 0.3, 0.6, 3);
    check(G::wiki, 0.05, 0.15, 0.25, 2);
    check(G::fiction, 0.0, 0.1, 0.3, 1);
    check(G::spoken, 0.0, 0.1, 0.3, 1);
    check(G::poetry, 0.35, 0.35, 0.35, 1);
    check(G::legal, 0.0, 0.0, 0.0, 0);

    auto one = testing::make_corpus({{"a", {G::news}, 0, 0, 100}, {"b", {G::wiki}, 0, 0, 900}});
    CHECK(genre_bounds(one)[genre_index(G::news)].max_frac == doctest::Approx(0.1));
  }

  TEST_CASE("genre bounds invariants") {
    std::mt19937_64 rng(67);
    for (int trial = 0; trial < 30; ++trial) {
      auto corpus = testing::make_corpus(random_specs(rng), rng());
      auto b = genre_bounds(corpus);
      double total = 0.0;
      for (const auto& x : b) {
        CHECK(x.min_frac <= x.uniform_frac + 1e-12);
        CHECK(x.uniform_frac <= x.max_frac + 1e-12);
        total += x.uniform_frac;
      }
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  TEST_CASE("aggregate") {
    auto a = aggregate({1.0, 2.0, 3.0});
    CHECK(*a.mean == doctest::Approx(2.0));
    CHECK(*a.sd == doctest::Approx(std::sqrt(2.0 / 3.0)));
    auto b = aggregate({std::nullopt, 4.0});
    CHECK(*b.mean == 4.0);
    CHECK(*b.sd == 0.0);
    auto c = aggregate({std::nullopt});
    CHECK_FALSE(c.mean);
    CHECK_FALSE(c.sd);
  }
}
