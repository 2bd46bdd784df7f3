#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace udgenre {

struct NgramParams {
  std::size_t n_min = 3;
  std::size_t n_max = 6;
  std::size_t min_df = 2;
  double max_df_frac = 0.30;  // retained iff df <= floor(max_df_frac * N)
  unsigned threads = 1;
};

// Character n-grams in byte-wise lexicographic order; column i is entries[i].
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(std::vector<std::string> entries, std::vector<std::uint32_t> df);

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }
  const std::vector<std::uint32_t>& df() const { return df_; }
  // -1 when absent.
  std::int64_t index_of(std::string_view ngram) const;

 private:
  std::vector<std::string> entries_;
  std::vector<std::uint32_t> df_;
};

// Compressed sparse rows of n-gram counts; columns within a row ascend.
struct FeatureMatrix {
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<std::uint32_t> count;
  std::size_t cols = 0;

  std::size_t rows() const { return row_ptr.size() - 1; }
  std::size_t row_begin(std::size_t r) const { return row_ptr[r]; }
  std::size_t row_end(std::size_t r) const { return row_ptr[r + 1]; }
  std::uint64_t row_total(std::size_t r) const;
};

// Every character n-gram occurrence of one text, by start position then
// length. Characters are Unicode code points; spaces are kept, case is not
// folded.
std::vector<std::string> char_ngrams(std::string_view text, std::size_t n_min, std::size_t n_max);

struct NgramFeatures {
  Vocabulary vocab;
  FeatureMatrix matrix;
};

// Builds the df-filtered vocabulary and per-text counts. Throws
// ValidationError("empty vocabulary") when nothing survives the filter.
NgramFeatures char_ngram_features(const std::vector<std::string_view>& texts, const NgramParams& params = {});

// Counts over an existing vocabulary; n-grams outside it are dropped.
FeatureMatrix featurize(const Vocabulary& vocab, const std::vector<std::string_view>& texts,
                        const NgramParams& params = {});

}  // namespace udgenre
