#include "udgenre/embeddings.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "udgenre/error.hpp"

namespace udgenre {
namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 12;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::uint32_t dim, std::vector<float> data, std::vector<EmbeddingKey> index)
    : dim_(dim) {
  if (dim == 0) throw ValidationError("embedding dimension must be positive");
  if (data.size() != index.size() * static_cast<std::size_t>(dim)) {
    throw ValidationError("embedding data holds " + std::to_string(data.size()) + " values, expected " +
                          std::to_string(index.size()) + " x " + std::to_string(dim));
  }
  data_.reserve(data.size());
  index_.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    append(std::move(index[i]), std::span<const float>(data.data() + i * dim, dim));
  }
}

std::string EmbeddingStore::lookup_key(std::string_view treebank_id, std::string_view sent_id) {
  std::string k(treebank_id);
  k += '\t';
  k += sent_id;
  return k;
}

std::optional<std::size_t> EmbeddingStore::find(std::string_view treebank_id, std::string_view sent_id) const {
  auto it = lookup_.find(lookup_key(treebank_id, sent_id));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingStore::append(EmbeddingKey key, std::span<const float> values) {
  if (values.size() != dim_) {
    throw ValidationError("row for " + key.treebank_id + "/" + key.sent_id + " has " +
                          std::to_string(values.size()) + " values, expected " + std::to_string(dim_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ValidationError("non-finite value in row " + std::to_string(index_.size()));
  }
  if (!lookup_.emplace(lookup_key(key.treebank_id, key.sent_id), index_.size()).second) {
    throw ValidationError("duplicate embedding key " + key.treebank_id + "/" + key.sent_id);
  }
  data_.insert(data_.end(), values.begin(), values.end());
  index_.push_back(std::move(key));
}

EmbeddingStore read_embeddings(const std::filesystem::path& data_path, const std::filesystem::path& index_path) {
  const std::string bytes = slurp(data_path);
  if (bytes.size() < kHeaderBytes || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw ParseError(data_path.string() + ": not an embedding file");
  }
  const std::uint32_t n = get_u32(bytes, 4);
  const std::uint32_t dim = get_u32(bytes, 8);
  if (dim == 0) throw ParseError(data_path.string() + ": dimension is zero");
  const std::size_t expected = kHeaderBytes + static_cast<std::size_t>(n) * dim * 4;
  if (bytes.size() != expected) {
    throw ParseError(data_path.string() + ": header declares " + std::to_string(n) + " x " + std::to_string(dim) +
                     " floats (" + std::to_string(expected) + " bytes) but file has " +
                     std::to_string(bytes.size()) + " bytes");
  }

  const std::string index_text = slurp(index_path);
  std::vector<EmbeddingKey> index;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < index_text.size()) {
    auto end = index_text.find('\n', pos);
    if (end == std::string::npos) end = index_text.size();
    std::string_view line(index_text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw ParseError(index_path.string() + ":" + std::to_string(line_no) + ": expected treebank_id<TAB>sent_id");
    }
    index.push_back({std::string(line.substr(0, tab)), std::string(line.substr(tab + 1))});
  }
  if (index.size() != n) {
    throw ParseError("embedding header declares " + std::to_string(n) + " rows but index " + index_path.string() +
                     " has " + std::to_string(index.size()) + " lines");
  }

  std::vector<float> data(static_cast<std::size_t>(n) * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes, kHeaderBytes + 4 * i));
    if (!std::isfinite(data[i])) {
      throw ParseError(data_path.string() + ": non-finite value in row " + std::to_string(i / dim));
    }
  }
  return EmbeddingStore(dim, std::move(data), std::move(index));
}

void write_embeddings(const EmbeddingStore& store, const std::filesystem::path& data_path,
                      const std::filesystem::path& index_path) {
  std::string bytes(kMagic, 4);
  bytes.reserve(kHeaderBytes + store.data().size() * 4);
  put_u32(bytes, static_cast<std::uint32_t>(store.rows()));
  put_u32(bytes, store.dim());
  for (float v : store.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  dump(data_path, bytes);

  std::string index;
  for (std::size_t i = 0; i < store.rows(); ++i) {
    index += store.key(i).treebank_id;
    index += '\t';
    index += store.key(i).sent_id;
    index += '\n';
  }
  dump(index_path, index);
}

std::vector<double> centroid(const EmbeddingStore& store, std::vector<std::size_t> member_rows) {
  if (member_rows.empty()) throw ValidationError("empty cluster");
  std::sort(member_rows.begin(), member_rows.end());
  std::vector<double> mean(store.dim(), 0.0);
  for (auto r : member_rows) {
    if (r >= store.rows()) throw ValidationError("centroid: row " + std::to_string(r) + " out of range");
    auto row = store.row(r);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += row[j];
  }
  for (auto& v : mean) v /= static_cast<double>(member_rows.size());
  return mean;
}

std::vector<std::size_t> resolve_rows(const EmbeddingStore& store, const Corpus& corpus,
                                      const std::vector<SentenceRef>& refs) {
  std::vector<std::size_t> rows;
  rows.reserve(refs.size());
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (auto ref : refs) {
    const auto& tb = corpus.treebank_of(ref);
    const auto& sid = corpus.sentence(ref).sent_id;
    if (auto r = store.find(tb.id, sid)) {
      rows.push_back(*r);
    } else {
      if (missing.size() < 10) missing.push_back(tb.id + "/" + sid);
      ++missing_count;
    }
  }
  if (missing_count > 0) {
    std::string msg = "missing embeddings for " + std::to_string(missing_count) + " sentence(s):";
    for (const auto& m : missing) msg += " " + m;
    if (missing_count > missing.size()) msg += " ...";
    throw ValidationError(msg);
  }
  return rows;
}

}  // namespace udgenre
