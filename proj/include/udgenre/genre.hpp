#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace udgenre {

// The closed set of treebank-level genre labels. Declaration order is the
// canonical order used for ties, file layouts and report columns.
enum class GenreLabel : unsigned char {
  academic,
  bible,
  blog,
  email,
  fiction,
  government,
  grammar_examples,
  learner_essays,
  legal,
  medical,
  news,
  nonfiction,
  poetry,
  reviews,
  social,
  spoken,
  web,
  wiki,
};

inline constexpr std::size_t kGenreCount = 18;

std::string_view genre_name(GenreLabel g);
std::optional<GenreLabel> parse_genre(std::string_view name);
// Throws ValidationError("unknown genre '<name>'").
GenreLabel genre_from_string(std::string_view name);

constexpr std::size_t genre_index(GenreLabel g) { return static_cast<std::size_t>(g); }
constexpr GenreLabel genre_at(std::size_t i) { return static_cast<GenreLabel>(i); }

const std::array<GenreLabel, kGenreCount>& all_genres();

// A subset of the 18 labels. Iteration follows declaration order.
class LabelSet {
 public:
  LabelSet() = default;
  LabelSet(std::initializer_list<GenreLabel> labels) {
    for (auto g : labels) insert(g);
  }

  void insert(GenreLabel g) { bits_.set(genre_index(g)); }
  void erase(GenreLabel g) { bits_.reset(genre_index(g)); }
  bool contains(GenreLabel g) const { return bits_.test(genre_index(g)); }
  std::size_t size() const { return bits_.count(); }
  bool empty() const { return bits_.none(); }

  std::vector<GenreLabel> labels() const;
  // Only meaningful when size() == 1.
  GenreLabel sole() const;

  LabelSet intersect(const LabelSet& other) const { return LabelSet(bits_ & other.bits_); }
  LabelSet minus(const LabelSet& other) const { return LabelSet(bits_ & ~other.bits_); }
  LabelSet unite(const LabelSet& other) const { return LabelSet(bits_ | other.bits_); }

  // "{news,wiki}"
  std::string to_string() const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;

 private:
  explicit LabelSet(std::bitset<kGenreCount> bits) : bits_(bits) {}
  std::bitset<kGenreCount> bits_;
};

}  // namespace udgenre
