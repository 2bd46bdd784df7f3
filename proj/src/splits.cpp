#include "udgenre/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "udgenre/error.hpp"
#include "udgenre/hash.hpp"
#include "udgenre/random.hpp"

namespace udgenre {

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::test: return "test";
    case Partition::probe_train: return "probe_train";
    case Partition::probe_heldout: return "probe_heldout";
    case Partition::dev: return "dev";
  }
  return "?";
}

std::optional<Partition> parse_partition(std::string_view name) {
  for (auto p : kPartitions) {
    if (partition_name(p) == name) return p;
  }
  return std::nullopt;
}

const std::vector<SentenceRef>& SplitSpec::members(Partition p) const {
  switch (p) {
    case Partition::test: return global_test;
    case Partition::probe_train: return probe_train;
    case Partition::probe_heldout: return probe_heldout;
    case Partition::dev: return global_dev;
  }
  return global_dev;
}

std::vector<SentenceRef>& SplitSpec::members(Partition p) {
  return const_cast<std::vector<SentenceRef>&>(std::as_const(*this).members(p));
}

std::pair<std::size_t, std::size_t> split_counts(std::size_t n, SplitRatios ratios) {
  if (n == 0) return {0, 0};
  auto pool = static_cast<std::size_t>(std::llround(ratios.train_frac * static_cast<double>(n)));
  if (n >= 10) pool = std::max<std::size_t>(pool, 1);
  pool = std::min(pool, n);
  auto train = static_cast<std::size_t>(std::llround(ratios.probe_frac * static_cast<double>(pool)));
  if (n >= 10) train = std::max<std::size_t>(train, 1);
  train = std::min(train, pool);
  return {pool, train};
}

SplitSpec make_splits(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train_frac > 0.0 && ratios.train_frac < 1.0)) {
    throw ValidationError("train_frac must lie in (0, 1)");
  }
  if (!(ratios.probe_frac > 0.0 && ratios.probe_frac < 1.0)) {
    throw ValidationError("probe_frac must lie in (0, 1)");
  }
  SplitSpec spec;
  spec.seed = seed;
  for (std::uint32_t t = 0; t < corpus.treebanks().size(); ++t) {
    const auto& tb = corpus.treebank(t);
    std::vector<SentenceRef> pool;
    for (std::uint32_t i = 0; i < tb.sentences.size(); ++i) {
      if (tb.declared[i] == DeclaredSplit::test) {
        spec.global_test.push_back({t, i});
      } else {
        pool.push_back({t, i});
      }
    }
    std::mt19937_64 rng(mix_seed(seed, Fnv1a().update(tb.id).value()));
    for (std::size_t i = pool.size(); i > 1; --i) {
      std::swap(pool[i - 1], pool[uniform_below(rng, i)]);
    }
    auto [pool_size, train_size] = split_counts(pool.size(), ratios);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (i < train_size) {
        spec.probe_train.push_back(pool[i]);
      } else if (i < pool_size) {
        spec.probe_heldout.push_back(pool[i]);
      } else {
        spec.global_dev.push_back(pool[i]);
      }
    }
  }
  for (auto p : kPartitions) std::sort(spec.members(p).begin(), spec.members(p).end());
  return spec;
}

void write_split_manifest(std::ostream& out, const Corpus& corpus, const SplitSpec& spec) {
  std::vector<std::string> lines;
  for (auto p : kPartitions) {
    for (auto ref : spec.members(p)) {
      std::string line = corpus.treebank_of(ref).id;
      line += '\t';
      line += corpus.sentence(ref).sent_id;
      line += '\t';
      line += partition_name(p);
      lines.push_back(std::move(line));
    }
  }
  std::sort(lines.begin(), lines.end());
  for (const auto& l : lines) out << l << '\n';
}

std::string split_manifest_text(const Corpus& corpus, const SplitSpec& spec) {
  std::ostringstream ss;
  write_split_manifest(ss, corpus, spec);
  return ss.str();
}

SplitSpec read_split_manifest(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open split manifest " + path.string());
  SplitSpec spec;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto a = line.find('\t');
    auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
    }
    auto ref = corpus.lookup(std::string_view(line).substr(0, a), std::string_view(line).substr(a + 1, b - a - 1));
    auto part = parse_partition(std::string_view(line).substr(b + 1));
    if (!ref || !part) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown sentence or partition");
    }
    spec.members(*part).push_back(*ref);
  }
  for (auto p : kPartitions) std::sort(spec.members(p).begin(), spec.members(p).end());
  return spec;
}

std::string split_fingerprint(const Corpus& corpus, const SplitSpec& spec) {
  return Fnv1a().update(split_manifest_text(corpus, spec)).hex();
}

}  // namespace udgenre
