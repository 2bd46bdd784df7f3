#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "udgenre/corpus.hpp"
#include "udgenre/genre.hpp"

namespace udgenre {

struct Prediction {
  SentenceRef ref;
  GenreLabel label = GenreLabel::news;
  double confidence = 1.0;
};

struct PredictionSet {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<Prediction> items;
  // Optional n x 18 simplex per item, rows aligned with `items`.
  Eigen::MatrixXd probabilities;

  std::size_t size() const { return items.size(); }
};

// "method<TAB>treebank_id<TAB>sent_id<TAB>genre<TAB>confidence<TAB>seed",
// sorted by (treebank_id, sent_id); confidence printed with 6 decimals.
void write_predictions(std::ostream& out, const Corpus& corpus, const PredictionSet& predictions);
void write_predictions(const std::filesystem::path& path, const Corpus& corpus, const PredictionSet& predictions);
PredictionSet read_predictions(const std::filesystem::path& path, const Corpus& corpus);

}  // namespace udgenre
