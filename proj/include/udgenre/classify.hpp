#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "udgenre/corpus.hpp"
#include "udgenre/embeddings.hpp"
#include "udgenre/predictions.hpp"
#include "udgenre/probe.hpp"
#include "udgenre/splits.hpp"

namespace udgenre {

struct ClassifyOptions {
  ProbeHyper hyper;
  bool restrict_to_metadata = false;  // argmax over the treebank's genres only
  unsigned threads = 1;               // inference
};

// One example per (sentence, genre in its treebank's metadata).
std::vector<ProbeExample> class_examples(const Corpus& corpus, const EmbeddingStore& embeddings,
                                         const std::vector<SentenceRef>& refs);

// Probe inference for every ref; confidence is the winning probability.
PredictionSet predict_with_probe(const ProbeModel& model, const Corpus& corpus, const EmbeddingStore& embeddings,
                                 const std::vector<SentenceRef>& refs, bool restrict_to_metadata,
                                 const std::string& method, std::uint64_t seed, unsigned threads = 1);

struct ClassRun {
  PredictionSet predictions;
  std::size_t training_size = 0;
  std::vector<std::string> warnings;
};

// Trains on probe_train with metadata duplication (early stopping on
// probe_heldout built the same way) and predicts `targets`.
ClassRun run_class(const Corpus& corpus, const EmbeddingStore& embeddings, const SplitSpec& split,
                   const std::vector<SentenceRef>& targets, const ClassifyOptions& options);

struct BootOptions {
  double tau = 0.99;
  int max_rounds = 5;
  ClassifyOptions classify;
};

struct BootRound {
  int round = 0;
  std::size_t pool_size = 0;
  LabelSet known;
  std::size_t pooled_by_confidence = 0;
  std::size_t pooled_by_inference = 0;
};

struct BootRun {
  PredictionSet predictions;
  std::map<SentenceRef, GenreLabel> pool;
  std::vector<BootRound> trace;  // entry 0 is the seed pool
  std::vector<std::string> warnings;
};

// The label a confident prediction would be pooled under: the argmax of
// `probs` when it lies in `allowed` with probability >= tau.
std::optional<GenreLabel> boot_pool_label(const Eigen::VectorXd& probs, const LabelSet& allowed, double tau);

// Self-training from single-genre treebanks. Each round retrains from a
// fresh initialization on the pool, pools confident in-metadata predictions
// for known genres, then pools the rest of any treebank with exactly one
// unknown genre under that genre. Stops when the pool stops growing or after
// max_rounds. Throws ValidationError without single-genre seeds.
BootRun run_boot(const Corpus& corpus, const EmbeddingStore& embeddings, const SplitSpec& split,
                 const std::vector<SentenceRef>& targets, const BootOptions& options);

enum class FreqRanking : unsigned char {
  treebanks,       // number of treebanks listing the genre
  sentence_share,  // sum of |X_s| / |L_s| over treebanks listing the genre
};

std::array<double, kGenreCount> genre_frequency(const Corpus& corpus, FreqRanking ranking);

// Every sentence gets the highest-ranked genre of its treebank's metadata;
// ties follow label order.
PredictionSet baseline_freq(const Corpus& corpus, const std::vector<SentenceRef>& targets,
                            FreqRanking ranking = FreqRanking::treebanks, std::uint64_t seed = 0);

// Argmax cosine similarity to the embedded label strings (18 rows keyed by
// genre name); ties follow label order.
PredictionSet baseline_zero(const Corpus& corpus, const EmbeddingStore& embeddings,
                            const EmbeddingStore& label_embeddings, const std::vector<SentenceRef>& targets,
                            std::uint64_t seed = 0);

}  // namespace udgenre
