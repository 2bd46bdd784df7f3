#include "udgenre/classify.hpp"

#include <algorithm>
#include <cmath>

#include "udgenre/error.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {
namespace {

std::vector<ProbeExample> pool_examples(const Corpus& corpus, const EmbeddingStore& embeddings,
                                        const std::map<SentenceRef, GenreLabel>& pool) {
  std::vector<SentenceRef> refs;
  refs.reserve(pool.size());
  for (const auto& [ref, label] : pool) refs.push_back(ref);
  auto rows = resolve_rows(embeddings, corpus, refs);
  std::vector<ProbeExample> out;
  out.reserve(pool.size());
  std::size_t i = 0;
  for (const auto& [ref, label] : pool) out.push_back({embeddings.row(rows[i++]), label});
  return out;
}

void append_warnings(std::vector<std::string>& into, std::vector<std::string> more) {
  into.insert(into.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

}  // namespace

std::vector<ProbeExample> class_examples(const Corpus& corpus, const EmbeddingStore& embeddings,
                                         const std::vector<SentenceRef>& refs) {
  auto rows = resolve_rows(embeddings, corpus, refs);
  std::vector<ProbeExample> out;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    for (auto g : corpus.treebank_of(refs[i]).genres.labels()) out.push_back({embeddings.row(rows[i]), g});
  }
  return out;
}

PredictionSet predict_with_probe(const ProbeModel& model, const Corpus& corpus, const EmbeddingStore& embeddings,
                                 const std::vector<SentenceRef>& refs, bool restrict_to_metadata,
                                 const std::string& method, std::uint64_t seed, unsigned threads) {
  auto rows = resolve_rows(embeddings, corpus, refs);
  PredictionSet out;
  out.method = method;
  out.seed = seed;
  out.items.resize(refs.size());
  out.probabilities.resize(static_cast<Eigen::Index>(refs.size()), kGenreCount);
  parallel_for(refs.size(), threads, [&](std::size_t i) {
    Eigen::VectorXd probs = model.predict(embeddings.row(rows[i]));
    out.probabilities.row(static_cast<Eigen::Index>(i)) = probs.transpose();
    const auto& allowed = corpus.treebank_of(refs[i]).genres;
    std::size_t best = kGenreCount;
    for (std::size_t g = 0; g < kGenreCount; ++g) {
      if (restrict_to_metadata && !allowed.contains(genre_at(g))) continue;
      if (best == kGenreCount || probs(static_cast<Eigen::Index>(g)) > probs(static_cast<Eigen::Index>(best))) best = g;
    }
    out.items[i] = {refs[i], genre_at(best), probs(static_cast<Eigen::Index>(best))};
  });
  return out;
}

ClassRun run_class(const Corpus& corpus, const EmbeddingStore& embeddings, const SplitSpec& split,
                   const std::vector<SentenceRef>& targets, const ClassifyOptions& options) {
  auto train = class_examples(corpus, embeddings, split.probe_train);
  auto heldout = class_examples(corpus, embeddings, split.probe_heldout);
  if (train.empty()) throw ValidationError("Class has no probe_train sentences");
  auto trained = train_probe(train, heldout, embeddings.dim(), options.hyper);
  ClassRun run;
  run.training_size = train.size();
  run.warnings = std::move(trained.warnings);
  run.predictions = predict_with_probe(trained.model, corpus, embeddings, targets, options.restrict_to_metadata,
                                       "class", options.hyper.seed, options.threads);
  return run;
}

std::optional<GenreLabel> boot_pool_label(const Eigen::VectorXd& probs, const LabelSet& allowed, double tau) {
  Eigen::Index best = 0;
  probs.maxCoeff(&best);
  const GenreLabel label = genre_at(static_cast<std::size_t>(best));
  if (allowed.contains(label) && probs(best) >= tau) return label;
  return std::nullopt;
}

BootRun run_boot(const Corpus& corpus, const EmbeddingStore& embeddings, const SplitSpec& split,
                 const std::vector<SentenceRef>& targets, const BootOptions& options) {
  BootRun run;
  LabelSet known;
  for (auto ref : split.probe_train) {
    const auto& tb = corpus.treebank_of(ref);
    if (!tb.single_genre()) continue;
    run.pool.emplace(ref, tb.genres.sole());
    known.insert(tb.genres.sole());
  }
  if (run.pool.empty()) throw ValidationError("Boot requires single-genre seeds");

  std::vector<ProbeExample> heldout;
  {
    std::map<SentenceRef, GenreLabel> exact;
    for (auto ref : split.probe_heldout) {
      const auto& tb = corpus.treebank_of(ref);
      if (tb.single_genre()) exact.emplace(ref, tb.genres.sole());
    }
    heldout = pool_examples(corpus, embeddings, exact);
  }

  auto train = [&] {
    auto examples = pool_examples(corpus, embeddings, run.pool);
    auto trained = train_probe(examples, heldout, embeddings.dim(), options.classify.hyper);
    append_warnings(run.warnings, std::move(trained.warnings));
    return std::move(trained.model);
  };

  run.trace.push_back({0, run.pool.size(), known, 0, 0});
  ProbeModel model = train();

  for (int round = 1; round <= options.max_rounds; ++round) {
    BootRound step{round, 0, known, 0, 0};

    std::vector<SentenceRef> candidates;
    for (auto ref : split.probe_train) {
      const auto& tb = corpus.treebank_of(ref);
      if (run.pool.count(ref) || tb.genres.intersect(known).empty()) continue;
      candidates.push_back(ref);
    }
    if (!candidates.empty()) {
      auto rows = resolve_rows(embeddings, corpus, candidates);
      std::vector<std::optional<GenreLabel>> decided(candidates.size());
      parallel_for(candidates.size(), options.classify.threads, [&](std::size_t i) {
        const auto allowed = corpus.treebank_of(candidates[i]).genres.intersect(known);
        decided[i] = boot_pool_label(model.predict(embeddings.row(rows[i])), allowed, options.tau);
      });
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (decided[i]) {
          run.pool.emplace(candidates[i], *decided[i]);
          ++step.pooled_by_confidence;
        }
      }
    }

    // A treebank with exactly one genre outside G contributes its remaining
    // sentences under that genre. Repeat until no treebank qualifies.
    std::vector<std::uint32_t> order(corpus.treebanks().size());
    for (std::uint32_t t = 0; t < order.size(); ++t) order[t] = t;
    std::sort(order.begin(), order.end(),
              [&](auto a, auto b) { return corpus.treebank(a).id < corpus.treebank(b).id; });
    for (bool changed = true; changed;) {
      changed = false;
      for (auto t : order) {
        const auto& tb = corpus.treebank(t);
        LabelSet unknown = tb.genres.minus(known);
        if (unknown.size() != 1) continue;
        const GenreLabel g = unknown.sole();
        std::size_t added = 0;
        for (auto ref : split.probe_train) {
          if (ref.treebank == t && run.pool.emplace(ref, g).second) ++added;
        }
        if (added == 0) continue;
        step.pooled_by_inference += added;
        known.insert(g);
        changed = true;
      }
    }

    step.pool_size = run.pool.size();
    step.known = known;
    run.trace.push_back(step);
    if (step.pooled_by_confidence + step.pooled_by_inference == 0) break;
    model = train();
  }

  run.predictions = predict_with_probe(model, corpus, embeddings, targets, options.classify.restrict_to_metadata,
                                       "boot", options.classify.hyper.seed, options.classify.threads);
  return run;
}

std::array<double, kGenreCount> genre_frequency(const Corpus& corpus, FreqRanking ranking) {
  std::array<double, kGenreCount> freq{};
  for (const auto& tb : corpus.treebanks()) {
    const double weight = ranking == FreqRanking::treebanks
                              ? 1.0
                              : static_cast<double>(tb.sentences.size()) / static_cast<double>(tb.genres.size());
    for (auto g : tb.genres.labels()) freq[genre_index(g)] += weight;
  }
  return freq;
}

PredictionSet baseline_freq(const Corpus& corpus, const std::vector<SentenceRef>& targets, FreqRanking ranking,
                            std::uint64_t seed) {
  const auto freq = genre_frequency(corpus, ranking);
  std::vector<GenreLabel> top(corpus.treebanks().size());
  for (std::size_t t = 0; t < top.size(); ++t) {
    auto labels = corpus.treebank(static_cast<std::uint32_t>(t)).genres.labels();
    GenreLabel best = labels.front();
    for (auto g : labels) {
      if (freq[genre_index(g)] > freq[genre_index(best)]) best = g;
    }
    top[t] = best;
  }
  PredictionSet out;
  out.method = "freq";
  out.seed = seed;
  out.items.reserve(targets.size());
  for (auto ref : targets) out.items.push_back({ref, top[ref.treebank], 1.0});
  return out;
}

PredictionSet baseline_zero(const Corpus& corpus, const EmbeddingStore& embeddings,
                            const EmbeddingStore& label_embeddings, const std::vector<SentenceRef>& targets,
                            std::uint64_t seed) {
  if (label_embeddings.rows() != kGenreCount) {
    throw ValidationError("label embeddings must have exactly 18 rows, found " +
                          std::to_string(label_embeddings.rows()));
  }
  if (label_embeddings.dim() != embeddings.dim()) {
    throw ValidationError("label embedding dimension " + std::to_string(label_embeddings.dim()) +
                          " differs from sentence dimension " + std::to_string(embeddings.dim()));
  }
  std::vector<Eigen::VectorXd> labels(kGenreCount);
  for (auto g : all_genres()) {
    auto row = label_embeddings.find(genre_name(g), genre_name(g));
    if (!row) throw ValidationError("label embeddings lack a row for '" + std::string(genre_name(g)) + "'");
    auto values = label_embeddings.row(*row);
    Eigen::VectorXd v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v(static_cast<Eigen::Index>(i)) = values[i];
    if (v.norm() == 0.0) throw ValidationError("label embedding for '" + std::string(genre_name(g)) + "' has zero norm");
    labels[genre_index(g)] = v / v.norm();
  }

  auto rows = resolve_rows(embeddings, corpus, targets);
  PredictionSet out;
  out.method = "zero";
  out.seed = seed;
  out.items.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    auto values = embeddings.row(rows[i]);
    Eigen::VectorXd x(static_cast<Eigen::Index>(values.size()));
    for (std::size_t j = 0; j < values.size(); ++j) x(static_cast<Eigen::Index>(j)) = values[j];
    const double norm = x.norm();
    if (norm == 0.0) {
      throw ValidationError("zero-norm embedding for " + corpus.treebank_of(targets[i]).id + "/" +
                            corpus.sentence(targets[i]).sent_id);
    }
    std::size_t best = 0;
    double best_sim = -2.0;
    for (std::size_t g = 0; g < kGenreCount; ++g) {
      const double sim = labels[g].dot(x) / norm;
      if (sim > best_sim) {
        best_sim = sim;
        best = g;
      }
    }
    out.items.push_back({targets[i], genre_at(best), best_sim});
  }
  return out;
}

}  // namespace udgenre
