#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udgenre/corpus.hpp"

namespace udgenre {

enum class Partition : unsigned char { test, probe_train, probe_heldout, dev };

inline constexpr std::array<Partition, 4> kPartitions = {Partition::test, Partition::probe_train,
                                                         Partition::probe_heldout, Partition::dev};

std::string_view partition_name(Partition p);
std::optional<Partition> parse_partition(std::string_view name);

struct SplitRatios {
  double train_frac = 0.10;  // share of train+dev feeding the probe pool
  double probe_frac = 0.70;  // share of that pool used for probe training
};

// Four disjoint sentence sets, each sorted by SentenceRef.
struct SplitSpec {
  std::vector<SentenceRef> global_test;
  std::vector<SentenceRef> probe_train;
  std::vector<SentenceRef> probe_heldout;
  std::vector<SentenceRef> global_dev;
  std::uint64_t seed = 0;

  const std::vector<SentenceRef>& members(Partition p) const;
  std::vector<SentenceRef>& members(Partition p);
};

// Declared test splits pass through. Each treebank's train+dev sentences are
// shuffled with a generator seeded from (seed, treebank id), then
// round(train_frac * n) go to the probe pool (at least 1 when n >= 10), which
// is split round(probe_frac * pool) / rest into probe_train / probe_heldout.
SplitSpec make_splits(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed);

// Per-treebank allocation used by make_splits: {pool, probe_train}.
std::pair<std::size_t, std::size_t> split_counts(std::size_t n, SplitRatios ratios);

// "treebank_id<TAB>sent_id<TAB>partition" lines, sorted lexicographically.
void write_split_manifest(std::ostream& out, const Corpus& corpus, const SplitSpec& spec);
std::string split_manifest_text(const Corpus& corpus, const SplitSpec& spec);
SplitSpec read_split_manifest(const std::filesystem::path& path, const Corpus& corpus);

std::string split_fingerprint(const Corpus& corpus, const SplitSpec& spec);

}  // namespace udgenre
