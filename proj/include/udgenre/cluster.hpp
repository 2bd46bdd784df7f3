#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "udgenre/corpus.hpp"
#include "udgenre/embeddings.hpp"

namespace udgenre {

// Samples stored one per column (d x n), the layout every fitter consumes.
using SampleMatrix = Eigen::MatrixXd;

SampleMatrix gather_samples(const EmbeddingStore& store, const std::vector<std::size_t>& rows);

struct ClusterAssignment {
  std::string scope = "global";       // "global" or a treebank id
  std::size_t k = 0;
  std::vector<SentenceRef> refs;      // filled by callers that know the sentences
  std::vector<std::uint32_t> cluster; // per row, < k
  Eigen::MatrixXd posteriors;         // n x k, or empty
  std::vector<std::size_t> flagged;   // rows that hit a degenerate-input rule

  std::size_t size() const { return cluster.size(); }
  std::vector<std::size_t> cluster_sizes() const;
};

// Argmax over a row, ties toward the lower index.
std::uint32_t argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row);

// "treebank_id<TAB>sent_id<TAB>cluster_index" lines sorted by key.
void write_cluster_assignment(std::ostream& out, const Corpus& corpus, const ClusterAssignment& assignment);

struct KMeansResult {
  Eigen::MatrixXd centers;  // d x k
  std::vector<std::uint32_t> labels;
};

// Seeded farthest-point seeding (first center drawn from `seed`, each next
// center the sample farthest from the chosen ones) followed by Lloyd steps.
KMeansResult kmeans(const SampleMatrix& x, std::size_t k, std::uint64_t seed, int max_iter = 50);

}  // namespace udgenre
