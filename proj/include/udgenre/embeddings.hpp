#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "udgenre/corpus.hpp"

namespace udgenre {

struct EmbeddingKey {
  std::string treebank_id;
  std::string sent_id;

  friend bool operator==(const EmbeddingKey&, const EmbeddingKey&) = default;
};

// Dense float32 sentence vectors with a (treebank id, sent_id) index.
//
// On disk (little-endian): "EMB1", uint32 row count N, uint32 dim d, then
// N*d float32 values row-major. The index is a UTF-8 text file with N lines
// "treebank_id<TAB>sent_id", line i describing row i. Label stores repeat the
// genre name in both fields.
class EmbeddingStore {
 public:
  static constexpr std::uint32_t kDefaultDim = 768;

  explicit EmbeddingStore(std::uint32_t dim = kDefaultDim) : dim_(dim) {}
  // Validates: dim > 0, data.size() == index.size() * dim, unique keys, finite values.
  EmbeddingStore(std::uint32_t dim, std::vector<float> data, std::vector<EmbeddingKey> index);

  std::uint32_t dim() const { return dim_; }
  std::size_t rows() const { return index_.size(); }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  const EmbeddingKey& key(std::size_t i) const { return index_[i]; }
  const std::vector<float>& data() const { return data_; }

  std::optional<std::size_t> find(std::string_view treebank_id, std::string_view sent_id) const;

  // Throws on duplicate key, wrong length or non-finite value.
  void append(EmbeddingKey key, std::span<const float> values);

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.dim_ == b.dim_ && a.index_ == b.index_ && a.data_ == b.data_;
  }

 private:
  static std::string lookup_key(std::string_view treebank_id, std::string_view sent_id);

  std::uint32_t dim_;
  std::vector<float> data_;
  std::vector<EmbeddingKey> index_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

EmbeddingStore read_embeddings(const std::filesystem::path& data_path, const std::filesystem::path& index_path);
void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& data_path,
                      const std::filesystem::path& index_path);

// Componentwise mean of the selected rows, accumulated in double in
// ascending row order. Throws ValidationError("empty cluster").
std::vector<double> centroid(const EmbeddingStore& store, std::vector<std::size_t> member_rows);

// Store row for every ref; throws ValidationError listing the missing
// sentences (first 10) when any is absent.
std::vector<std::size_t> resolve_rows(const EmbeddingStore& store, const Corpus& corpus,
                                      const std::vector<SentenceRef>& refs);

}  // namespace udgenre
