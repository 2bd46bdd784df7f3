#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "udgenre/classify.hpp"
#include "udgenre/error.hpp"
#include "udgenre/features.hpp"
#include "udgenre/gmm.hpp"
#include "udgenre/labelprop.hpp"
#include "udgenre/lda.hpp"
#include "udgenre/metrics.hpp"
#include "udgenre/probe.hpp"
#include "udgenre/splits.hpp"

namespace udgenre {

enum class Method : unsigned char { freq, zero, class_probe, boot, gmm, lda, gmm_l, lda_l };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);
bool method_needs_embeddings(Method m);
// Methods that output genre labels (everything except plain gmm/lda).
bool method_is_labeled(Method m);

// Which sentences the clustering methods see.
enum class ClusterScope : unsigned char {
  all,         // every sentence of every treebank
  eval_split,  // only the evaluation split
};

struct EmbeddingPaths {
  std::filesystem::path data;
  std::filesystem::path index;
};

struct RunConfig {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> mapping;
  std::optional<EmbeddingPaths> embeddings;
  std::optional<EmbeddingPaths> label_embeddings;
  std::vector<Method> methods;
  std::vector<std::uint64_t> seeds{41, 42, 43};

  SplitRatios ratios;
  std::uint64_t split_seed = 41;
  Partition eval_split = Partition::test;
  ClusterScope cluster_scope = ClusterScope::all;

  bool restrict_to_metadata = false;
  FreqRanking freq_ranking = FreqRanking::treebanks;
  ProbeHyper probe;
  double boot_tau = 0.99;
  int boot_max_rounds = 5;
  GmmParams gmm;
  LdaParams lda;
  NgramParams ngrams;
  std::size_t char_cap = kDefaultCharCap;
  PropagationOptions propagation;

  // Execution only; never part of the report or cache keys.
  std::filesystem::path output_dir = "out";
  std::string run_id;  // derived from the config hash when empty
  unsigned workers = 1;
  unsigned threads = 1;
  bool use_cache = true;
};

// JSON config; relative paths resolve against `base_dir`. Unknown keys are
// rejected. Throws ValidationError.
RunConfig parse_run_config(std::string_view json, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Checks method/seed lists, required inputs per method and that every input
// path exists. Throws ValidationError.
void validate_config(const RunConfig& config);

// JSON of every field that affects results (no output dir, workers, threads
// or cache switch).
std::string config_echo(const RunConfig& config);
std::string effective_run_id(const RunConfig& config);

// A pipeline stage failed after validation.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& message)
      : Error(stage + ": " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RunResult {
  std::filesystem::path run_dir;
  std::filesystem::path report;
  std::size_t cache_hits = 0;
  std::size_t cache_misses = 0;
};

// Cache directory: $UDGENRE_CACHE_DIR, else <output_dir>/.cache.
std::filesystem::path cache_dir(const RunConfig& config);

// ingest -> split -> prepare -> methods x seeds -> evaluate -> report -> plots.
// Everything is written under <output_dir>/<run_id>/. Validation problems
// throw ValidationError before any output is written; later failures leave a
// failed/ marker next to the partial outputs and throw StageError. `log`
// receives one line per stage when given.
RunResult run_pipeline(const RunConfig& config, std::ostream* log = nullptr);

// Writes plots/distribution-<method>.csv (genre, tb_count, min, uniform, max,
// method_mean, method_sd) for labeled methods and plots/confusion-<method>.csv
// when gold labels exist, from a report.json. Returns the files written.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& report_path);

// Metrics of one labeled prediction set on a split, as computed per seed.
struct SeedMetrics {
  std::optional<double> purity;
  std::optional<double> agreement;
  std::optional<double> delta_bc;
  std::optional<double> micro_f1;
};

SeedMetrics evaluate_groups(const GroupAssignment& groups, const Corpus& corpus,
                            const std::vector<SentenceRef>& split);
SeedMetrics evaluate_predictions(const PredictionSet& predictions, const Corpus& corpus,
                                 const std::vector<SentenceRef>& split,
                                 const std::map<SentenceRef, GenreLabel>* gold);

// Keeps the items whose ref is in `sorted_refs`; probabilities are dropped.
PredictionSet restrict_predictions(const PredictionSet& predictions, const std::vector<SentenceRef>& sorted_refs);

// Reads "treebank_id<TAB>sent_id<TAB>cluster" lines.
GroupAssignment read_cluster_groups(const std::filesystem::path& path, const Corpus& corpus, std::size_t k);

}  // namespace udgenre
