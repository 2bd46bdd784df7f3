#include "udgenre/features.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "udgenre/error.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {
namespace {

std::vector<std::size_t> code_point_offsets(std::string_view text) {
  std::vector<std::size_t> offsets;
  offsets.reserve(text.size() + 1);
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) offsets.push_back(i);
  }
  offsets.push_back(text.size());
  return offsets;
}

template <typename Fn>
void for_each_ngram(std::string_view text, std::size_t n_min, std::size_t n_max, Fn&& fn) {
  const auto offsets = code_point_offsets(text);
  const std::size_t chars = offsets.size() - 1;
  for (std::size_t i = 0; i < chars; ++i) {
    for (std::size_t n = n_min; n <= n_max && i + n <= chars; ++n) {
      fn(text.substr(offsets[i], offsets[i + n] - offsets[i]));
    }
  }
}

void check_params(const NgramParams& params) {
  if (params.n_min == 0 || params.n_min > params.n_max) {
    throw ValidationError("n-gram range requires 1 <= n_min <= n_max");
  }
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> entries, std::vector<std::uint32_t> df)
    : entries_(std::move(entries)), df_(std::move(df)) {
  if (entries_.size() != df_.size()) throw ValidationError("vocabulary: entries and df differ in length");
  if (!std::is_sorted(entries_.begin(), entries_.end())) throw ValidationError("vocabulary: entries not sorted");
}

std::int64_t Vocabulary::index_of(std::string_view ngram) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), ngram,
                             [](const std::string& e, std::string_view g) { return std::string_view(e) < g; });
  if (it == entries_.end() || *it != ngram) return -1;
  return it - entries_.begin();
}

std::uint64_t FeatureMatrix::row_total(std::size_t r) const {
  std::uint64_t total = 0;
  for (std::size_t i = row_begin(r); i < row_end(r); ++i) total += count[i];
  return total;
}

std::vector<std::string> char_ngrams(std::string_view text, std::size_t n_min, std::size_t n_max) {
  std::vector<std::string> out;
  for_each_ngram(text, n_min, n_max, [&](std::string_view g) { out.emplace_back(g); });
  return out;
}

NgramFeatures char_ngram_features(const std::vector<std::string_view>& texts, const NgramParams& params) {
  check_params(params);
  if (texts.empty()) throw ValidationError("no texts to featurize");

  std::vector<std::vector<std::string_view>> distinct(texts.size());
  parallel_for(texts.size(), params.threads, [&](std::size_t i) {
    auto& grams = distinct[i];
    for_each_ngram(texts[i], params.n_min, params.n_max, [&](std::string_view g) { grams.push_back(g); });
    std::sort(grams.begin(), grams.end());
    grams.erase(std::unique(grams.begin(), grams.end()), grams.end());
  });

  std::unordered_map<std::string_view, std::uint32_t> df;
  for (const auto& grams : distinct) {
    for (auto g : grams) ++df[g];
  }

  const auto max_df = static_cast<std::uint64_t>(
      std::floor(params.max_df_frac * static_cast<double>(texts.size()) + 1e-9));
  std::vector<std::pair<std::string_view, std::uint32_t>> kept;
  for (const auto& [g, n] : df) {
    if (n >= params.min_df && n <= max_df) kept.emplace_back(g, n);
  }
  if (kept.empty()) throw ValidationError("empty vocabulary");
  std::sort(kept.begin(), kept.end());

  std::vector<std::string> entries;
  std::vector<std::uint32_t> counts;
  entries.reserve(kept.size());
  counts.reserve(kept.size());
  for (const auto& [g, n] : kept) {
    entries.emplace_back(g);
    counts.push_back(n);
  }
  NgramFeatures out{Vocabulary(std::move(entries), std::move(counts)), {}};
  out.matrix = featurize(out.vocab, texts, params);
  return out;
}

FeatureMatrix featurize(const Vocabulary& vocab, const std::vector<std::string_view>& texts,
                        const NgramParams& params) {
  check_params(params);
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> rows(texts.size());
  parallel_for(texts.size(), params.threads, [&](std::size_t i) {
    std::vector<std::uint32_t> cols;
    for_each_ngram(texts[i], params.n_min, params.n_max, [&](std::string_view g) {
      auto idx = vocab.index_of(g);
      if (idx >= 0) cols.push_back(static_cast<std::uint32_t>(idx));
    });
    std::sort(cols.begin(), cols.end());
    auto& row = rows[i];
    for (std::size_t j = 0; j < cols.size();) {
      std::size_t k = j;
      while (k < cols.size() && cols[k] == cols[j]) ++k;
      row.emplace_back(cols[j], static_cast<std::uint32_t>(k - j));
      j = k;
    }
  });

  FeatureMatrix m;
  m.cols = vocab.size();
  for (const auto& row : rows) {
    for (auto [c, n] : row) {
      m.col.push_back(c);
      m.count.push_back(n);
    }
    m.row_ptr.push_back(m.col.size());
  }
  return m;
}

}  // namespace udgenre
