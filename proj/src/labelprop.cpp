#include "udgenre/labelprop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include <fmt/format.h>

#include "udgenre/error.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {

bool TreebankClusters::has_label(GenreLabel g) const {
  return std::any_of(labels.begin(), labels.end(), [g](const auto& l) { return l == g; });
}

TreebankClusters make_treebank_clusters(const Corpus& corpus, std::uint32_t treebank, ClusterAssignment assignment,
                                        const EmbeddingStore& embeddings) {
  const auto& tb = corpus.treebank(treebank);
  TreebankClusters out;
  out.treebank = treebank;
  out.treebank_id = tb.id;
  out.genres = tb.genres;
  const std::size_t k = tb.genres.size();
  if (assignment.k != k) {
    throw ValidationError("treebank '" + tb.id + "' clustered into " + std::to_string(assignment.k) +
                          " groups, expected " + std::to_string(k));
  }
  assignment.scope = tb.id;
  auto rows = resolve_rows(embeddings, corpus, assignment.refs);
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < rows.size(); ++i) members.at(assignment.cluster[i]).push_back(rows[i]);
  out.centroids.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    if (!members[c].empty()) out.centroids[c] = centroid(embeddings, members[c]);
  }
  out.labels.assign(k, std::nullopt);
  out.scores.assign(k, std::nullopt);
  out.rounds.assign(k, -1);
  out.assignment = std::move(assignment);
  return out;
}

std::vector<TreebankClusters> cluster_all_treebanks(const Corpus& corpus, const std::vector<SentenceRef>& scope,
                                                    const EmbeddingStore& embeddings, const ClusterOptions& options) {
  std::vector<std::vector<SentenceRef>> by_treebank(corpus.treebanks().size());
  for (auto ref : scope) by_treebank.at(ref.treebank).push_back(ref);

  std::vector<TreebankClusters> out(corpus.treebanks().size());
  parallel_for(out.size(), options.threads, [&](std::size_t t) {
    const auto& tb = corpus.treebank(static_cast<std::uint32_t>(t));
    auto& refs = by_treebank[t];
    std::sort(refs.begin(), refs.end());
    const std::size_t k = tb.genres.size();

    ClusterAssignment a;
    a.k = k;
    a.refs = refs;
    a.cluster.assign(refs.size(), 0);
    bool flagged = refs.size() < k;

    if (k > 1 && refs.size() >= k) {
      if (options.method == ClusterMethod::gmm) {
        GmmParams p = options.gmm;
        p.k = k;
        p.seed = options.seed;
        p.threads = 1;
        auto x = gather_samples(embeddings, resolve_rows(embeddings, corpus, refs));
        auto fitted = gmm_assign(gmm_fit(x, p), x);
        a.cluster = std::move(fitted.cluster);
        a.posteriors = std::move(fitted.posteriors);
      } else {
        std::vector<std::string_view> texts;
        texts.reserve(refs.size());
        for (auto r : refs) texts.push_back(featurization_text(corpus.sentence(r).text, options.char_cap));
        NgramParams np = options.ngrams;
        np.threads = 1;
        std::optional<NgramFeatures> features;
        try {
          features = char_ngram_features(texts, np);
        } catch (const ValidationError&) {
          flagged = true;  // degenerate vocabulary: keep everything in cluster 0
        }
        if (features && features->vocab.size() >= k && !features->matrix.col.empty()) {
          LdaParams p = options.lda;
          p.k = k;
          p.seed = options.seed;
          p.threads = 1;
          auto model = lda_fit(features->matrix, p);
          auto fitted = lda_assign(model, features->matrix, p.max_doc_iter, p.doc_tol);
          a.cluster = std::move(fitted.cluster);
          a.posteriors = std::move(fitted.posteriors);
          a.flagged = std::move(fitted.flagged);
        } else {
          flagged = true;
        }
      }
    }
    out[t] = make_treebank_clusters(corpus, static_cast<std::uint32_t>(t), std::move(a), embeddings);
    out[t].flagged = flagged;
  });
  return out;
}

double centroid_distance(const std::vector<double>& a, const std::vector<double>& b, CentroidDistance metric) {
  if (a.size() != b.size()) throw ValidationError("centroid dimensions differ");
  if (metric == CentroidDistance::euclidean) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

using Pool = std::array<std::vector<const std::vector<double>*>, kGenreCount>;

std::array<std::size_t, kGenreCount> pool_sizes(const Pool& pool) {
  std::array<std::size_t, kGenreCount> out{};
  for (std::size_t g = 0; g < kGenreCount; ++g) out[g] = pool[g].size();
  return out;
}

struct Candidate {
  double score;
  std::size_t tb;  // position in the id-sorted order
  std::size_t cluster;
  std::size_t genre;

  auto key() const { return std::tie(score, tb, cluster, genre); }
};

}  // namespace

PropagationResult propagate_labels(std::vector<TreebankClusters> clusters, const PropagationOptions& options) {
  // Work in treebank-id order so ties and output do not depend on input order.
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.treebank_id < b.treebank_id; });
  for (std::size_t i = 1; i < clusters.size(); ++i) {
    if (clusters[i].treebank_id == clusters[i - 1].treebank_id) {
      throw ValidationError("treebank '" + clusters[i].treebank_id + "' clustered twice");
    }
  }

  PropagationResult result;
  Pool pool;
  for (auto& tc : clusters) {
    if (tc.k() != tc.genres.size()) throw ValidationError("treebank '" + tc.treebank_id + "': cluster count mismatch");
    if (tc.k() != 1) continue;
    const GenreLabel g = tc.genres.sole();
    tc.labels[0] = g;
    tc.scores[0] = 0.0;
    tc.rounds[0] = 0;
    if (tc.centroids[0]) pool[genre_index(g)].push_back(&*tc.centroids[0]);
  }
  result.pool_sizes.push_back(pool_sizes(pool));

  for (int round = 1; round <= options.rounds; ++round) {
    std::vector<Candidate> candidates;
    for (std::size_t t = 0; t < clusters.size(); ++t) {
      const auto& tc = clusters[t];
      for (auto g : tc.genres.labels()) {
        const auto& members = pool[genre_index(g)];
        if (members.empty() || tc.has_label(g)) continue;
        for (std::size_t c = 0; c < tc.k(); ++c) {
          if (tc.labels[c] || tc.empty_cluster(c)) continue;
          double best = std::numeric_limits<double>::infinity();
          for (const auto* p : members) best = std::min(best, centroid_distance(*tc.centroids[c], *p, options.distance));
          candidates.push_back({best, t, c, genre_index(g)});
        }
      }
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) { return a.key() < b.key(); });

    std::vector<std::pair<std::size_t, std::size_t>> fresh;
    for (const auto& cand : candidates) {
      auto& tc = clusters[cand.tb];
      const GenreLabel g = genre_at(cand.genre);
      if (tc.labels[cand.cluster] || tc.has_label(g)) continue;
      tc.labels[cand.cluster] = g;
      tc.scores[cand.cluster] = cand.score;
      tc.rounds[cand.cluster] = round;
      fresh.emplace_back(cand.tb, cand.cluster);
    }
    for (auto [t, c] : fresh) {
      pool[genre_index(*clusters[t].labels[c])].push_back(&*clusters[t].centroids[c]);
    }
    result.pool_sizes.push_back(pool_sizes(pool));
  }

  // Closure: one open cluster with members and one open genre, or only empty
  // clusters left to fill.
  for (auto& tc : clusters) {
    LabelSet open = tc.genres;
    std::vector<std::size_t> open_nonempty, open_empty;
    for (std::size_t c = 0; c < tc.k(); ++c) {
      if (tc.labels[c]) {
        open.erase(*tc.labels[c]);
      } else if (tc.empty_cluster(c)) {
        open_empty.push_back(c);
      } else {
        open_nonempty.push_back(c);
      }
    }
    auto close = [&](std::size_t c, GenreLabel g) {
      tc.labels[c] = g;
      tc.rounds[c] = options.rounds + 1;
    };
    if (open_nonempty.size() == 1 && open.size() == 1) {
      close(open_nonempty[0], open.sole());
    } else if (open_nonempty.empty()) {
      auto remaining = open.labels();
      for (std::size_t i = 0; i < open_empty.size(); ++i) close(open_empty[i], remaining[i]);
    } else {
      for (auto c : open_nonempty) result.residue.push_back({tc.treebank_id, c, open});
      for (auto c : open_empty) result.residue.push_back({tc.treebank_id, c, open});
    }
  }

  LabelSet mentioned, reached;
  for (const auto& tc : clusters) {
    mentioned = mentioned.unite(tc.genres);
    for (const auto& l : tc.labels) {
      if (l) reached.insert(*l);
    }
  }
  result.unreachable = mentioned.minus(reached);
  result.clusters = std::move(clusters);
  return result;
}

void fill_residue_in_label_order(PropagationResult& result) {
  for (auto& tc : result.clusters) {
    LabelSet open = tc.genres;
    for (const auto& l : tc.labels) {
      if (l) open.erase(*l);
    }
    auto remaining = open.labels();
    std::size_t next = 0;
    for (std::size_t c = 0; c < tc.k(); ++c) {
      if (tc.labels[c]) continue;
      tc.labels[c] = remaining.at(next++);
      tc.rounds[c] = -2;
    }
  }
}

PredictionSet to_predictions(const std::vector<TreebankClusters>& clusters, const std::string& method,
                             std::uint64_t seed) {
  PredictionSet out;
  out.method = method;
  out.seed = seed;
  for (const auto& tc : clusters) {
    const auto& a = tc.assignment;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const auto c = a.cluster[i];
      if (!tc.labels.at(c)) {
        throw ValidationError("treebank '" + tc.treebank_id + "': cluster " + std::to_string(c) + " is unlabeled");
      }
      double confidence = 1.0;
      if (a.posteriors.rows() == static_cast<Eigen::Index>(a.size())) {
        confidence = a.posteriors(static_cast<Eigen::Index>(i), c);
      }
      out.items.push_back({a.refs[i], *tc.labels[c], confidence});
    }
  }
  return out;
}

void write_label_report(std::ostream& out, const PropagationResult& result) {
  for (const auto& tc : result.clusters) {
    for (std::size_t c = 0; c < tc.k(); ++c) {
      out << tc.treebank_id << '\t' << c << '\t' << (tc.labels[c] ? genre_name(*tc.labels[c]) : "-") << '\t'
          << (tc.scores[c] ? fmt::format("{:.6f}", *tc.scores[c]) : std::string("NA")) << '\t' << tc.rounds[c]
          << '\n';
    }
  }
}

void write_residue_report(std::ostream& out, const PropagationResult& result) {
  for (const auto& r : result.residue) {
    out << r.treebank_id << '\t' << r.cluster << '\t' << r.open_genres.to_string() << '\n';
  }
  for (auto g : result.unreachable.labels()) out << "#unreachable\t" << genre_name(g) << '\n';
}

}  // namespace udgenre
