#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "udgenre/cluster.hpp"
#include "udgenre/corpus.hpp"
#include "udgenre/embeddings.hpp"
#include "udgenre/features.hpp"
#include "udgenre/gmm.hpp"
#include "udgenre/lda.hpp"
#include "udgenre/predictions.hpp"

namespace udgenre {

enum class ClusterMethod : unsigned char { gmm, lda };

// Per-treebank clustering with one cluster per metadata genre, plus the
// labels assigned to those clusters by propagation.
struct TreebankClusters {
  std::uint32_t treebank = 0;
  std::string treebank_id;
  LabelSet genres;
  ClusterAssignment assignment;  // scope = treebank id, k = |genres|
  std::vector<std::optional<std::vector<double>>> centroids;  // nullopt for empty clusters
  std::vector<std::optional<GenreLabel>> labels;
  std::vector<std::optional<double>> scores;  // distance that won the label; 0 for seeds
  std::vector<int> rounds;                    // 0 seed, 1..R propagation, R+1 closure, -1 unlabeled
  bool flagged = false;                       // fewer usable sentences than clusters

  std::size_t k() const { return labels.size(); }
  bool empty_cluster(std::size_t c) const { return !centroids[c].has_value(); }
  bool has_label(GenreLabel g) const;
};

struct ClusterOptions {
  ClusterMethod method = ClusterMethod::gmm;
  std::uint64_t seed = 41;
  GmmParams gmm;       // k and seed are overridden per treebank
  LdaParams lda;       // k and seed are overridden per treebank
  NgramParams ngrams;  // vocabulary is rebuilt per treebank
  std::size_t char_cap = kDefaultCharCap;
  unsigned threads = 1;  // across treebanks
};

// Clusters every treebank's sentences from `scope` into |genres| groups.
// Single-genre treebanks get one cluster without fitting; treebanks with
// fewer sentences than clusters (or a degenerate n-gram vocabulary) put all
// sentences in cluster 0 and are flagged. Centroids always come from the
// embeddings, whatever the clustering input.
std::vector<TreebankClusters> cluster_all_treebanks(const Corpus& corpus, const std::vector<SentenceRef>& scope,
                                                    const EmbeddingStore& embeddings, const ClusterOptions& options);

// Builds the record for one treebank from an explicit assignment (refs and
// cluster ids); used by cluster_all_treebanks and by tests with planted data.
TreebankClusters make_treebank_clusters(const Corpus& corpus, std::uint32_t treebank, ClusterAssignment assignment,
                                        const EmbeddingStore& embeddings);

enum class CentroidDistance : unsigned char { cosine, euclidean };

double centroid_distance(const std::vector<double>& a, const std::vector<double>& b, CentroidDistance metric);

struct PropagationOptions {
  int rounds = 3;
  CentroidDistance distance = CentroidDistance::cosine;
};

struct ResidueEntry {
  std::string treebank_id;
  std::size_t cluster = 0;
  LabelSet open_genres;
};

struct PropagationResult {
  std::vector<TreebankClusters> clusters;
  std::vector<ResidueEntry> residue;
  LabelSet unreachable;  // metadata genres that never labeled any cluster
  // Pool size per genre at the start (index 0) and after each round.
  std::vector<std::array<std::size_t, kGenreCount>> pool_sizes;

  bool complete() const { return residue.empty(); }
};

// Seeds the pool from single-genre treebanks, then for each round labels
// clusters greedily by ascending distance to the nearest pooled centroid of
// a candidate genre (ties by treebank id, cluster index, genre order). A
// treebank left with one unlabeled cluster and one open genre is closed
// after the last round; anything still open is reported as residue.
PropagationResult propagate_labels(std::vector<TreebankClusters> clusters, const PropagationOptions& options = {});

// Broadcasts cluster labels to sentences. Throws ValidationError on any
// unlabeled non-empty cluster. Confidence is the cluster posterior when
// available, otherwise 1.
PredictionSet to_predictions(const std::vector<TreebankClusters>& clusters, const std::string& method,
                             std::uint64_t seed);

// Labels residue clusters with their treebank's open genres in label order.
// Used by the pipeline so every sentence gets a label; the residue report
// is still written.
void fill_residue_in_label_order(PropagationResult& result);

// "treebank_id<TAB>cluster_index<TAB>genre<TAB>score<TAB>round"
void write_label_report(std::ostream& out, const PropagationResult& result);
// "treebank_id<TAB>cluster_index<TAB>open_genres", then "#unreachable<TAB>genre" lines.
void write_residue_report(std::ostream& out, const PropagationResult& result);

}  // namespace udgenre
