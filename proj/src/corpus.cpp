#include "udgenre/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "udgenre/error.hpp"
#include "udgenre/hash.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

bool misc_has_no_space(std::string_view misc) {
  std::size_t start = 0;
  while (start <= misc.size()) {
    auto end = misc.find('|', start);
    if (end == std::string_view::npos) end = misc.size();
    if (misc.substr(start, end - start) == "SpaceAfter=No") return true;
    start = end + 1;
  }
  return false;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Block {
  std::vector<Comment> comments;
  std::vector<std::string> tokens;
  std::string reconstructed;
  bool pending_space = false;
  std::size_t multiword_end = 0;  // last word id covered by an open range line
  std::size_t first_line = 0;
  bool has_tokens = false;

  void append_surface(std::string_view form, std::string_view misc) {
    if (pending_space) reconstructed += ' ';
    reconstructed += form;
    pending_space = !misc_has_no_space(misc);
  }
};

}  // namespace

std::optional<std::string_view> Sentence::comment(std::string_view key) const {
  for (const auto& c : comments) {
    if (c.key == key && c.value) return std::string_view(*c.value);
  }
  return std::nullopt;
}

std::vector<Sentence> parse_conllu_text(std::string_view content, std::string_view source) {
  std::vector<Sentence> out;
  std::unordered_map<std::string, std::size_t> seen;  // sent_id -> line
  Block block;
  std::size_t line_no = 0;

  auto error_at = [&](std::size_t line, const std::string& msg) {
    return ParseError(std::string(source) + ":" + std::to_string(line) + ": " + msg);
  };

  auto finish = [&]() {
    if (block.comments.empty() && !block.has_tokens) return;
    if (!block.has_tokens) throw error_at(block.first_line, "sentence has no token lines");
    Sentence s;
    s.comments = std::move(block.comments);
    s.tokens = std::move(block.tokens);
    if (auto id = s.comment("sent_id")) s.sent_id = std::string(*id);
    if (s.sent_id.empty()) throw error_at(block.first_line, "sentence without sent_id");
    if (auto text = s.comment("text"); text && !text->empty()) {
      s.text = std::string(*text);
    } else {
      s.text = std::move(block.reconstructed);
    }
    if (auto [it, inserted] = seen.emplace(s.sent_id, block.first_line); !inserted) {
      throw error_at(block.first_line, "duplicate sent_id '" + s.sent_id + "' (first at line " +
                                           std::to_string(it->second) + ", again at line " +
                                           std::to_string(block.first_line) + ")");
    }
    out.push_back(std::move(s));
    block = Block{};
  };

  std::size_t pos = 0;
  while (pos <= content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (trim(line).empty()) {
      finish();
      if (end == content.size()) break;
      continue;
    }
    if (block.first_line == 0) block.first_line = line_no;

    if (line.front() == '#') {
      std::string_view body = trim(line.substr(1));
      Comment c;
      if (auto eq = body.find('='); eq != std::string_view::npos) {
        c.key = std::string(trim(body.substr(0, eq)));
        c.value = std::string(trim(body.substr(eq + 1)));
      } else {
        c.key = std::string(body);
      }
      block.comments.push_back(std::move(c));
      continue;
    }

    auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw error_at(line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));
    }
    block.has_tokens = true;
    std::string_view id = cols[0];
    std::string_view form = cols[1];
    std::string_view misc = cols[9];
    if (auto dash = id.find('-'); dash != std::string_view::npos) {
      // Multiword range: its form is the surface string for the covered words.
      block.append_surface(form, misc);
      try {
        block.multiword_end = std::stoul(std::string(id.substr(dash + 1)));
      } catch (const std::exception&) {
        throw error_at(line_no, "malformed range id '" + std::string(id) + "'");
      }
      continue;
    }
    if (id.find('.') != std::string_view::npos) continue;  // empty node: no surface form

    std::size_t word_id = 0;
    try {
      word_id = std::stoul(std::string(id));
    } catch (const std::exception&) {
      throw error_at(line_no, "malformed token id '" + std::string(id) + "'");
    }
    block.tokens.emplace_back(form);
    if (word_id > block.multiword_end) block.append_surface(form, misc);
  }
  finish();
  return out;
}

std::vector<Sentence> parse_conllu(const std::filesystem::path& path) {
  return parse_conllu_text(read_file(path), path.string());
}

void write_conllu(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) {
    for (const auto& c : s.comments) {
      out << "# " << c.key;
      if (c.value) out << " = " << *c.value;
      out << '\n';
    }
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out << (i + 1) << '\t' << s.tokens[i] << "\t_\t_\t_\t_\t_\t_\t_\t_\n";
    }
    out << '\n';
  }
}

std::string_view split_name(DeclaredSplit s) {
  switch (s) {
    case DeclaredSplit::train: return "train";
    case DeclaredSplit::dev: return "dev";
    case DeclaredSplit::test: return "test";
  }
  return "?";
}

std::optional<DeclaredSplit> parse_split_name(std::string_view name) {
  if (name == "train") return DeclaredSplit::train;
  if (name == "dev") return DeclaredSplit::dev;
  if (name == "test") return DeclaredSplit::test;
  return std::nullopt;
}

Corpus::Corpus(std::vector<Treebank> treebanks) : treebanks_(std::move(treebanks)) {
  std::set<std::string_view> ids;
  sent_index_.resize(treebanks_.size());
  for (std::size_t t = 0; t < treebanks_.size(); ++t) {
    const auto& tb = treebanks_[t];
    if (tb.id.empty()) throw ValidationError("treebank with empty id");
    if (!ids.insert(tb.id).second) throw ValidationError("duplicate treebank id '" + tb.id + "'");
    if (tb.genres.empty()) throw ValidationError("treebank '" + tb.id + "' has an empty genre list");
    if (tb.declared.size() != tb.sentences.size()) {
      throw ValidationError("treebank '" + tb.id + "': split tags do not match sentences");
    }
    auto& index = sent_index_[t];
    for (std::size_t i = 0; i < tb.sentences.size(); ++i) {
      const auto& s = tb.sentences[i];
      if (s.sent_id.empty()) throw ValidationError("treebank '" + tb.id + "': empty sent_id");
      if (!index.emplace(s.sent_id, static_cast<std::uint32_t>(i)).second) {
        throw ValidationError("treebank '" + tb.id + "': duplicate sent_id '" + s.sent_id + "'");
      }
    }
  }
}

std::optional<std::uint32_t> Corpus::find(std::string_view id) const {
  for (std::size_t t = 0; t < treebanks_.size(); ++t) {
    if (treebanks_[t].id == id) return static_cast<std::uint32_t>(t);
  }
  return std::nullopt;
}

std::optional<SentenceRef> Corpus::lookup(std::string_view treebank_id, std::string_view sent_id) const {
  auto t = find(treebank_id);
  if (!t) return std::nullopt;
  const auto& index = sent_index_[*t];
  auto it = index.find(std::string(sent_id));
  if (it == index.end()) return std::nullopt;
  return SentenceRef{*t, it->second};
}

std::size_t Corpus::sentence_count() const {
  std::size_t n = 0;
  for (const auto& tb : treebanks_) n += tb.sentences.size();
  return n;
}

std::vector<SentenceRef> Corpus::all_refs() const {
  std::vector<SentenceRef> out;
  out.reserve(sentence_count());
  for (std::uint32_t t = 0; t < treebanks_.size(); ++t) {
    for (std::uint32_t i = 0; i < treebanks_[t].sentences.size(); ++i) out.push_back({t, i});
  }
  return out;
}

bool Corpus::key_less(SentenceRef a, SentenceRef b) const {
  const auto& ta = treebanks_[a.treebank].id;
  const auto& tb = treebanks_[b.treebank].id;
  if (ta != tb) return ta < tb;
  return sentence(a).sent_id < sentence(b).sent_id;
}

void Corpus::sort_by_key(std::vector<SentenceRef>& refs) const {
  std::sort(refs.begin(), refs.end(), [this](SentenceRef a, SentenceRef b) { return key_less(a, b); });
}

std::string Corpus::fingerprint() const {
  Fnv1a h;
  for (const auto& tb : treebanks_) {
    h.field(tb.id).field(tb.language).field(tb.genres.to_string());
    for (std::size_t i = 0; i < tb.sentences.size(); ++i) {
      h.field(tb.sentences[i].sent_id).field(tb.sentences[i].text).field(split_name(tb.declared[i]));
    }
  }
  return h.hex();
}

CollectionManifest parse_manifest(std::string_view json_text, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  if (!doc.contains("treebanks") || !doc["treebanks"].is_array()) {
    throw ParseError("manifest: missing 'treebanks' array");
  }
  CollectionManifest manifest;
  for (const auto& item : doc["treebanks"]) {
    ManifestEntry entry;
    try {
      entry.id = item.at("id").get<std::string>();
      entry.language = item.value("language", std::string());
      entry.genres = item.at("genres").get<std::vector<std::string>>();
      if (item.contains("files")) {
        for (const auto& [split, value] : item["files"].items()) {
          auto which = parse_split_name(split);
          if (!which) throw ParseError("manifest: treebank '" + entry.id + "': unknown split '" + split + "'");
          std::vector<std::string> paths;
          if (value.is_string()) {
            paths.push_back(value.get<std::string>());
          } else {
            paths = value.get<std::vector<std::string>>();
          }
          for (const auto& p : paths) {
            std::filesystem::path path(p);
            entry.files[*which].push_back(path.is_absolute() ? path : base_dir / path);
          }
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("manifest: ") + e.what());
    }
    manifest.treebanks.push_back(std::move(entry));
  }
  return manifest;
}

CollectionManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

Corpus load_collection(const CollectionManifest& manifest, unsigned threads) {
  std::vector<Treebank> treebanks(manifest.treebanks.size());
  for (std::size_t t = 0; t < manifest.treebanks.size(); ++t) {
    const auto& entry = manifest.treebanks[t];
    auto& tb = treebanks[t];
    tb.id = entry.id;
    tb.language = entry.language;
    if (entry.genres.empty()) throw ValidationError("treebank '" + entry.id + "' has an empty genre list");
    for (const auto& g : entry.genres) {
      auto label = parse_genre(g);
      if (!label) throw ValidationError("treebank '" + entry.id + "': unknown genre '" + g + "'");
      tb.genres.insert(*label);
    }
  }

  struct Job {
    std::size_t treebank;
    DeclaredSplit split;
    std::filesystem::path path;
  };
  std::vector<Job> jobs;
  for (std::size_t t = 0; t < manifest.treebanks.size(); ++t) {
    for (const auto& [split, paths] : manifest.treebanks[t].files) {
      for (const auto& p : paths) jobs.push_back({t, split, p});
    }
  }
  std::vector<std::vector<Sentence>> parsed(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t j) { parsed[j] = parse_conllu(jobs[j].path); });
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (auto& s : parsed[j]) treebanks[jobs[j].treebank].add(std::move(s), jobs[j].split);
  }
  return Corpus(std::move(treebanks));
}

Corpus load_collection(const std::filesystem::path& manifest_path, unsigned threads) {
  return load_collection(load_manifest(manifest_path), threads);
}

LabelSet single_genre_labels(const Corpus& corpus) {
  LabelSet out;
  for (const auto& tb : corpus.treebanks()) {
    if (tb.single_genre()) out.insert(tb.genres.sole());
  }
  return out;
}

std::vector<const MappingRule*> LabelMapping::rules_for(std::string_view treebank_id) const {
  std::vector<const MappingRule*> out;
  for (const auto& r : rules) {
    if (r.treebank_id == treebank_id) out.push_back(&r);
  }
  return out;
}

LabelMapping parse_label_mapping(std::string_view content) {
  LabelMapping mapping;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    auto end = content.find('\n', pos);
    if (end == std::string_view::npos) end = content.size();
    std::string_view line = content.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || line.front() == '#') continue;

    auto cols = split_tabs(line);
    auto fail = [&](const std::string& msg) {
      return ParseError("mapping line " + std::to_string(line_no) + ": " + msg);
    };
    if (cols.size() != 4) throw fail("expected 4 tab-separated columns, found " + std::to_string(cols.size()));
    MappingRule rule;
    rule.treebank_id = std::string(cols[0]);
    std::string_view kind = cols[1];
    if (kind == "sentid-prefix") {
      rule.kind = MatchKind::sentid_prefix;
      rule.comment_key.clear();
    } else if (kind == "comment-key") {
      rule.kind = MatchKind::comment_key;
    } else if (kind.starts_with("comment-key:") && kind.size() > 12) {
      rule.kind = MatchKind::comment_key;
      rule.comment_key = std::string(kind.substr(12));
    } else {
      throw fail("unknown match kind '" + std::string(kind) + "'");
    }
    rule.raw = std::string(cols[2]);
    if (rule.raw.empty()) throw fail("empty raw label");
    auto genre = parse_genre(cols[3]);
    if (!genre) throw fail("unknown genre '" + std::string(cols[3]) + "'");
    rule.genre = *genre;
    mapping.rules.push_back(std::move(rule));
  }
  return mapping;
}

LabelMapping load_label_mapping(const std::filesystem::path& path) {
  return parse_label_mapping(read_file(path));
}

void validate_mapping(const LabelMapping& mapping, const Corpus& corpus) {
  for (const auto& rule : mapping.rules) {
    auto t = corpus.find(rule.treebank_id);
    if (!t) continue;
    const auto& tb = corpus.treebank(*t);
    if (!tb.genres.contains(rule.genre)) {
      throw ValidationError("mapping (" + rule.treebank_id + ", " + rule.raw + ") -> " +
                            std::string(genre_name(rule.genre)) + " is outside the treebank genres " +
                            tb.genres.to_string());
    }
  }
}

InstanceLabels extract_instance_labels(const Treebank& treebank, const LabelMapping& mapping) {
  InstanceLabels out;
  auto rules = mapping.rules_for(treebank.id);

  std::set<std::string> keys = {"genre"};
  for (const auto* r : rules) {
    if (r->kind == MatchKind::comment_key) keys.insert(r->comment_key);
  }

  for (const auto& s : treebank.sentences) {
    std::optional<GenreLabel> label;
    bool matched_comment = false;
    for (const auto& key : keys) {
      auto raw = s.comment(key);
      if (!raw) continue;
      matched_comment = true;
      const MappingRule* hit = nullptr;
      for (const auto* r : rules) {
        if (r->kind == MatchKind::comment_key && r->comment_key == key && r->raw == *raw) {
          hit = r;
          break;
        }
      }
      if (hit && treebank.genres.contains(hit->genre)) {
        label = hit->genre;
      } else {
        out.unmapped.push_back({s.sent_id, std::string(*raw)});
      }
      break;
    }
    if (!label && !matched_comment) {
      const MappingRule* best = nullptr;
      for (const auto* r : rules) {
        if (r->kind != MatchKind::sentid_prefix || !s.sent_id.starts_with(r->raw)) continue;
        if (!best || r->raw.size() > best->raw.size()) best = r;
      }
      if (best) {
        if (treebank.genres.contains(best->genre)) {
          label = best->genre;
        } else {
          out.unmapped.push_back({s.sent_id, best->raw});
        }
      }
    }
    if (label) out.by_sent_id.emplace(s.sent_id, *label);
  }
  return out;
}

std::map<SentenceRef, GenreLabel> extract_gold(const Corpus& corpus, const LabelMapping& mapping,
                                               std::vector<UnmappedLabel>* unmapped) {
  std::map<SentenceRef, GenreLabel> gold;
  for (std::uint32_t t = 0; t < corpus.treebanks().size(); ++t) {
    const auto& tb = corpus.treebank(t);
    auto labels = extract_instance_labels(tb, mapping);
    for (const auto& [sent_id, genre] : labels.by_sent_id) {
      gold.emplace(*corpus.lookup(tb.id, sent_id), genre);
    }
    if (unmapped) {
      for (auto& u : labels.unmapped) {
        unmapped->push_back({tb.id + "/" + u.sent_id, std::move(u.raw)});
      }
    }
  }
  return gold;
}

std::string_view featurization_text(std::string_view text, std::size_t cap) {
  std::size_t points = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (points == cap) return text.substr(0, i);
      ++points;
    }
  }
  return text;
}

}  // namespace udgenre
