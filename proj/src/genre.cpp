#include "udgenre/genre.hpp"

#include "udgenre/error.hpp"

namespace udgenre {
namespace {

constexpr std::array<std::string_view, kGenreCount> kNames = {
    "academic", "bible",      "blog",    "email",   "fiction", "government",
    "grammar-examples", "learner-essays", "legal", "medical", "news",
    "nonfiction", "poetry",   "reviews", "social",  "spoken",  "web",
    "wiki",
};

}  // namespace

std::string_view genre_name(GenreLabel g) { return kNames[genre_index(g)]; }

std::optional<GenreLabel> parse_genre(std::string_view name) {
  for (std::size_t i = 0; i < kGenreCount; ++i) {
    if (kNames[i] == name) return genre_at(i);
  }
  return std::nullopt;
}

GenreLabel genre_from_string(std::string_view name) {
  if (auto g = parse_genre(name)) return *g;
  throw ValidationError("unknown genre '" + std::string(name) + "'");
}

const std::array<GenreLabel, kGenreCount>& all_genres() {
  static const auto genres = [] {
    std::array<GenreLabel, kGenreCount> out{};
    for (std::size_t i = 0; i < kGenreCount; ++i) out[i] = genre_at(i);
    return out;
  }();
  return genres;
}

std::vector<GenreLabel> LabelSet::labels() const {
  std::vector<GenreLabel> out;
  out.reserve(size());
  for (std::size_t i = 0; i < kGenreCount; ++i) {
    if (bits_.test(i)) out.push_back(genre_at(i));
  }
  return out;
}

GenreLabel LabelSet::sole() const {
  for (std::size_t i = 0; i < kGenreCount; ++i) {
    if (bits_.test(i)) return genre_at(i);
  }
  throw ValidationError("empty label set has no sole label");
}

std::string LabelSet::to_string() const {
  std::string out = "{";
  bool first = true;
  for (auto g : labels()) {
    if (!first) out += ',';
    out += genre_name(g);
    first = false;
  }
  return out + "}";
}

}  // namespace udgenre
