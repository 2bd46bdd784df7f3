#include "udgenre/cluster.hpp"

#include <algorithm>
#include <limits>
#include <ostream>
#include <random>

#include "udgenre/error.hpp"
#include "udgenre/random.hpp"

namespace udgenre {

SampleMatrix gather_samples(const EmbeddingStore& store, const std::vector<std::size_t>& rows) {
  SampleMatrix x(store.dim(), rows.size());
  for (std::size_t j = 0; j < rows.size(); ++j) {
    auto row = store.row(rows[j]);
    for (std::size_t i = 0; i < row.size(); ++i) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[i];
  }
  return x;
}

std::vector<std::size_t> ClusterAssignment::cluster_sizes() const {
  std::vector<std::size_t> sizes(k, 0);
  for (auto c : cluster) ++sizes.at(c);
  return sizes;
}

std::uint32_t argmax_lowest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::uint32_t best = 0;
  for (Eigen::Index j = 1; j < row.size(); ++j) {
    if (row(j) > row(best)) best = static_cast<std::uint32_t>(j);
  }
  return best;
}

void write_cluster_assignment(std::ostream& out, const Corpus& corpus, const ClusterAssignment& assignment) {
  if (assignment.refs.size() != assignment.cluster.size()) {
    throw ValidationError("cluster assignment has no sentence refs");
  }
  std::vector<std::size_t> order(assignment.refs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.key_less(assignment.refs[a], assignment.refs[b]);
  });
  for (auto i : order) {
    out << corpus.treebank_of(assignment.refs[i]).id << '\t' << corpus.sentence(assignment.refs[i]).sent_id
        << '\t' << assignment.cluster[i] << '\n';
  }
}

KMeansResult kmeans(const SampleMatrix& x, std::size_t k, std::uint64_t seed, int max_iter) {
  const auto n = static_cast<std::size_t>(x.cols());
  if (k == 0 || n < k) throw ValidationError("k-means needs at least k samples");
  KMeansResult out;
  out.centers.resize(x.rows(), static_cast<Eigen::Index>(k));
  out.labels.assign(n, 0);

  std::mt19937_64 rng(seed);
  std::size_t first = uniform_below(rng, n);
  out.centers.col(0) = x.col(static_cast<Eigen::Index>(first));
  Eigen::VectorXd nearest = (x.colwise() - out.centers.col(0)).colwise().squaredNorm().transpose();
  for (std::size_t c = 1; c < k; ++c) {
    Eigen::Index far = 0;
    for (Eigen::Index j = 1; j < nearest.size(); ++j) {
      if (nearest(j) > nearest(far)) far = j;
    }
    out.centers.col(static_cast<Eigen::Index>(c)) = x.col(far);
    nearest = nearest.cwiseMin((x.colwise() - x.col(far)).colwise().squaredNorm().transpose());
  }

  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (std::size_t j = 0; j < n; ++j) {
      auto col = x.col(static_cast<Eigen::Index>(j));
      std::uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        double d = (col - out.centers.col(static_cast<Eigen::Index>(c))).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(c);
        }
      }
      if (out.labels[j] != best) changed = true;
      out.labels[j] = best;
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(x.rows(), static_cast<Eigen::Index>(k));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t j = 0; j < n; ++j) {
      sums.col(out.labels[j]) += x.col(static_cast<Eigen::Index>(j));
      ++counts[out.labels[j]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      // An emptied cluster keeps its previous center.
      if (counts[c] > 0) out.centers.col(static_cast<Eigen::Index>(c)) = sums.col(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
    }
  }
  return out;
}

}  // namespace udgenre
