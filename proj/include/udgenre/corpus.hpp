#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "udgenre/genre.hpp"

namespace udgenre {

struct Comment {
  std::string key;
  std::optional<std::string> value;  // nullopt for bare "# key" lines
};

struct Sentence {
  std::string sent_id;
  std::string text;
  std::vector<std::string> tokens;  // surface forms of integer-ID word lines
  std::vector<Comment> comments;

  // Value of the first comment with this key, if any.
  std::optional<std::string_view> comment(std::string_view key) const;
};

// Parses CoNLL-U content. `source` is used in error messages only.
std::vector<Sentence> parse_conllu_text(std::string_view content, std::string_view source = "<memory>");
std::vector<Sentence> parse_conllu(const std::filesystem::path& path);

// Writes comments verbatim followed by minimal 10-column word lines.
void write_conllu(std::ostream& out, const std::vector<Sentence>& sentences);

enum class DeclaredSplit : unsigned char { train, dev, test };

std::string_view split_name(DeclaredSplit s);
std::optional<DeclaredSplit> parse_split_name(std::string_view name);

struct Treebank {
  std::string id;
  std::string language;
  LabelSet genres;
  std::vector<Sentence> sentences;
  std::vector<DeclaredSplit> declared;  // parallel to sentences

  bool single_genre() const { return genres.size() == 1; }
  void add(Sentence s, DeclaredSplit split) {
    sentences.push_back(std::move(s));
    declared.push_back(split);
  }
};

// Addresses a sentence by position; stable for the lifetime of a Corpus.
struct SentenceRef {
  std::uint32_t treebank = 0;
  std::uint32_t sentence = 0;

  friend auto operator<=>(const SentenceRef&, const SentenceRef&) = default;
};

class Corpus {
 public:
  Corpus() = default;
  // Validates: unique ids, non-empty genre sets, unique sent_ids per treebank.
  explicit Corpus(std::vector<Treebank> treebanks);

  const std::vector<Treebank>& treebanks() const { return treebanks_; }
  const Treebank& treebank(std::uint32_t i) const { return treebanks_.at(i); }
  std::optional<std::uint32_t> find(std::string_view id) const;

  const Sentence& sentence(SentenceRef ref) const {
    return treebanks_.at(ref.treebank).sentences.at(ref.sentence);
  }
  const Treebank& treebank_of(SentenceRef ref) const { return treebanks_.at(ref.treebank); }
  std::optional<SentenceRef> lookup(std::string_view treebank_id, std::string_view sent_id) const;

  std::size_t sentence_count() const;
  // All sentences, ordered by (treebank position, sentence position).
  std::vector<SentenceRef> all_refs() const;

  // Orders refs by (treebank id, sent_id) byte-wise; used for every file output.
  bool key_less(SentenceRef a, SentenceRef b) const;
  void sort_by_key(std::vector<SentenceRef>& refs) const;

  // Content hash over ids, genres, sent_ids, texts and declared splits.
  std::string fingerprint() const;

 private:
  std::vector<Treebank> treebanks_;
  std::vector<std::unordered_map<std::string, std::uint32_t>> sent_index_;
};

// One manifest record; relative paths are resolved against the manifest file.
struct ManifestEntry {
  std::string id;
  std::string language;
  std::vector<std::string> genres;
  std::map<DeclaredSplit, std::vector<std::filesystem::path>> files;
};

struct CollectionManifest {
  std::vector<ManifestEntry> treebanks;
};

// JSON manifest:
//   {"treebanks": [{"id": "en_ewt", "language": "en", "genres": ["blog", ...],
//                   "files": {"train": "a.conllu", "dev": [...], "test": ...}}]}
CollectionManifest parse_manifest(std::string_view json, const std::filesystem::path& base_dir);
CollectionManifest load_manifest(const std::filesystem::path& path);

// Parses every listed file; unknown genres and empty genre lists are errors.
// Duplicate genre strings are collapsed.
Corpus load_collection(const CollectionManifest& manifest, unsigned threads = 1);
Corpus load_collection(const std::filesystem::path& manifest_path, unsigned threads = 1);

// Genres carried by at least one single-genre treebank.
LabelSet single_genre_labels(const Corpus& corpus);

enum class MatchKind : unsigned char { comment_key, sentid_prefix };

struct MappingRule {
  std::string treebank_id;
  MatchKind kind = MatchKind::comment_key;
  std::string comment_key = "genre";  // only for comment_key rules
  std::string raw;                    // comment value, or sent_id prefix
  GenreLabel genre = GenreLabel::news;
};

// Tab-separated, one rule per line, '#' starts a comment line:
//   treebank_id  kind  raw  genre
// kind is "comment-key" (key "genre"), "comment-key:<key>", or "sentid-prefix".
struct LabelMapping {
  std::vector<MappingRule> rules;

  std::vector<const MappingRule*> rules_for(std::string_view treebank_id) const;
};

LabelMapping parse_label_mapping(std::string_view content);
LabelMapping load_label_mapping(const std::filesystem::path& path);

// Every rule's genre must be in its treebank's metadata genres. Rules naming
// treebanks absent from the corpus are ignored.
void validate_mapping(const LabelMapping& mapping, const Corpus& corpus);

struct UnmappedLabel {
  std::string sent_id;
  std::string raw;
};

struct InstanceLabels {
  std::map<std::string, GenreLabel> by_sent_id;
  std::vector<UnmappedLabel> unmapped;
};

// Comment rules take precedence over sent_id prefix rules; among prefix rules
// the longest matching prefix wins. Labels outside the treebank's metadata
// are reported as unmapped and never emitted.
InstanceLabels extract_instance_labels(const Treebank& treebank, const LabelMapping& mapping);

// Gold labels for the whole corpus keyed by sentence.
std::map<SentenceRef, GenreLabel> extract_gold(const Corpus& corpus, const LabelMapping& mapping,
                                               std::vector<UnmappedLabel>* unmapped = nullptr);

inline constexpr std::size_t kDefaultCharCap = 10000;

// Truncates to at most `cap` code points without splitting a UTF-8 sequence.
std::string_view featurization_text(std::string_view text, std::size_t cap = kDefaultCharCap);

}  // namespace udgenre
