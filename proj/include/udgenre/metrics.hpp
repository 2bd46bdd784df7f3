#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "udgenre/cluster.hpp"
#include "udgenre/corpus.hpp"
#include "udgenre/genre.hpp"
#include "udgenre/predictions.hpp"

namespace udgenre {

// Sentences mapped to group ids: genre indices for label predictions, cluster
// ids for unlabeled clusterings. Metrics that only need a partition take this.
struct GroupAssignment {
  std::vector<SentenceRef> refs;
  std::vector<std::uint32_t> group;
  std::size_t groups = 0;
};

GroupAssignment groups_of(const PredictionSet& predictions);
GroupAssignment groups_of(const ClusterAssignment& clusters);

// Probability vector over a fixed support (18 genres or k clusters).
class GenreDistribution {
 public:
  GenreDistribution() = default;
  // Throws ValidationError unless entries are >= 0 and sum to 1 +- 1e-9.
  explicit GenreDistribution(std::vector<double> p);

  static GenreDistribution uniform(const LabelSet& labels);
  // Normalized counts; an all-zero count vector is rejected.
  static GenreDistribution from_counts(const std::vector<double>& counts);

  std::span<const double> values() const { return p_; }
  std::size_t size() const { return p_.size(); }

 private:
  std::vector<double> p_;
};

// Sum over the support of sqrt(p(l) q(l)).
double bhattacharyya(const GenreDistribution& p, const GenreDistribution& q);

// |Ls ∩ Lt| / sqrt(|Ls| |Lt|): the coefficient of the two uniform
// distributions over the label sets.
double expected_overlap(const LabelSet& ls, const LabelSet& lt);

// 100 x mean over treebank pairs (both with split sentences) of
// |expected_overlap - bhattacharyya(predicted distributions)|. Every split
// sentence must have a group. Throws ValidationError("no pairs") when fewer
// than two treebanks qualify.
double delta_bc(const GroupAssignment& assignment, const Corpus& corpus, const std::vector<SentenceRef>& split);

// Purity over split sentences of single-genre treebanks (gold = the
// treebank genre), in [0, 100]; nullopt when there are none.
std::optional<double> purity(const GroupAssignment& assignment, const Corpus& corpus,
                             const std::vector<SentenceRef>& split);

// Share (x100) of same-genre single-genre treebank pairs whose majority
// groups coincide; majorities break ties toward the lower group id.
std::optional<double> agreement(const GroupAssignment& assignment, const Corpus& corpus,
                                const std::vector<SentenceRef>& split);

// Micro-F1 (x100) over gold-labeled split sentences; nullopt without gold.
std::optional<double> micro_f1(const PredictionSet& predictions, const std::map<SentenceRef, GenreLabel>& gold,
                               const std::vector<SentenceRef>& split);

struct Confusion {
  Eigen::MatrixXd ratios;                    // 18 x 18, gold rows x predicted columns
  std::array<std::size_t, kGenreCount> row_counts{};  // gold sentences per row
};

Confusion confusion(const PredictionSet& predictions, const std::map<SentenceRef, GenreLabel>& gold,
                    const std::vector<SentenceRef>& split);

struct GenreBound {
  double min_frac = 0.0;
  double uniform_frac = 0.0;
  double max_frac = 0.0;
  std::size_t treebank_count = 0;
};

using GenreBounds = std::array<GenreBound, kGenreCount>;

// Metadata-implied share of corpus sentences per genre: single-genre
// treebanks only (min), uniform split within treebanks, every treebank
// listing the genre (max).
GenreBounds genre_bounds(const Corpus& corpus);

// Fraction of the given predictions per genre.
std::array<double, kGenreCount> predicted_fractions(const PredictionSet& predictions,
                                                    const std::vector<SentenceRef>& split);

// Per-seed values with population mean and standard deviation over the
// non-null entries; null when no seed produced a value.
struct Aggregate {
  std::vector<std::optional<double>> per_seed;
  std::optional<double> mean;
  std::optional<double> sd;
};

Aggregate aggregate(std::vector<std::optional<double>> per_seed);

void write_confusion_csv(std::ostream& out, const Eigen::MatrixXd& ratios);

}  // namespace udgenre
