// Command-line front end: validate, split, features, run, eval, plots.
// Exit codes: 0 success, 2 validation failure, 3 stage failure.

#include <fstream>
#include <iostream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "udgenre/corpus.hpp"
#include "udgenre/embeddings.hpp"
#include "udgenre/features.hpp"
#include "udgenre/pipeline.hpp"
#include "udgenre/splits.hpp"

namespace fs = std::filesystem;
using namespace udgenre;

namespace {

constexpr int kValidationFailure = 2;
constexpr int kStageFailure = 3;

struct CorpusArgs {
  std::string manifest;
  unsigned threads = 1;
};

void add_corpus_args(CLI::App* cmd, CorpusArgs& a) {
  cmd->add_option("--manifest", a.manifest, "Collection manifest (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--threads", a.threads, "Parser threads")->check(CLI::PositiveNumber);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  return out;
}

int cmd_validate(const CorpusArgs& a, const std::string& mapping_path, const std::string& data,
                 const std::string& index) {
  const Corpus corpus = load_collection(fs::path(a.manifest), a.threads);
  std::size_t single = 0;
  for (const auto& tb : corpus.treebanks()) single += tb.single_genre() ? 1 : 0;
  std::cout << fmt::format("treebanks\t{}\nsingle_genre\t{}\nsentences\t{}\nfingerprint\t{}\n",
                           corpus.treebanks().size(), single, corpus.sentence_count(), corpus.fingerprint());
  if (!mapping_path.empty()) {
    const auto mapping = load_label_mapping(mapping_path);
    validate_mapping(mapping, corpus);
    std::vector<UnmappedLabel> unmapped;
    const auto gold = extract_gold(corpus, mapping, &unmapped);
    std::cout << fmt::format("gold_sentences\t{}\nunmapped_labels\t{}\n", gold.size(), unmapped.size());
  }
  if (!data.empty()) {
    const auto store = read_embeddings(data, index);
    resolve_rows(store, corpus, corpus.all_refs());
    std::cout << fmt::format("embedding_rows\t{}\nembedding_dim\t{}\n", store.rows(), store.dim());
  }
  return 0;
}

int cmd_split(const CorpusArgs& a, SplitRatios ratios, std::uint64_t seed, const std::string& out_path) {
  const Corpus corpus = load_collection(fs::path(a.manifest), a.threads);
  const SplitSpec spec = make_splits(corpus, ratios, seed);
  if (out_path.empty() || out_path == "-") {
    write_split_manifest(std::cout, corpus, spec);
  } else {
    auto out = open_out(out_path);
    write_split_manifest(out, corpus, spec);
  }
  for (auto p : kPartitions) std::cerr << partition_name(p) << '\t' << spec.members(p).size() << '\n';
  return 0;
}

int cmd_features(const CorpusArgs& a, const std::string& treebank, NgramParams params, std::size_t char_cap,
                 const std::string& vocab_path, const std::string& matrix_path) {
  const Corpus corpus = load_collection(fs::path(a.manifest), a.threads);
  std::vector<SentenceRef> refs;
  if (treebank.empty()) {
    refs = corpus.all_refs();
  } else {
    auto t = corpus.find(treebank);
    if (!t) throw ValidationError("unknown treebank '" + treebank + "'");
    for (std::uint32_t s = 0; s < corpus.treebank(*t).sentences.size(); ++s) refs.push_back({*t, s});
  }
  std::vector<std::string_view> texts;
  for (auto r : refs) texts.push_back(featurization_text(corpus.sentence(r).text, char_cap));
  params.threads = a.threads;
  const auto features = char_ngram_features(texts, params);
  {
    auto out = open_out(vocab_path);
    for (std::size_t i = 0; i < features.vocab.size(); ++i) {
      out << features.vocab.entries()[i] << '\t' << features.vocab.df()[i] << '\n';
    }
  }
  if (!matrix_path.empty()) {
    // One line per sentence: treebank, sent_id, then column:count pairs.
    auto out = open_out(matrix_path);
    const auto& m = features.matrix;
    for (std::size_t r = 0; r < m.rows(); ++r) {
      out << corpus.treebank_of(refs[r]).id << '\t' << corpus.sentence(refs[r]).sent_id;
      for (auto i = m.row_begin(r); i < m.row_end(r); ++i) out << '\t' << m.col[i] << ':' << m.count[i];
      out << '\n';
    }
  }
  std::cerr << fmt::format("{} sentences, {} n-grams\n", refs.size(), features.vocab.size());
  return 0;
}

int cmd_eval(const CorpusArgs& a, const std::string& splits_path, const std::string& split_name,
             const std::string& predictions_path, const std::string& clusters_path, std::size_t k,
             const std::string& mapping_path) {
  const Corpus corpus = load_collection(fs::path(a.manifest), a.threads);
  const SplitSpec spec = read_split_manifest(splits_path, corpus);
  auto partition = parse_partition(split_name);
  if (!partition) throw ValidationError("unknown split '" + split_name + "'");
  const auto& split = spec.members(*partition);

  std::optional<std::map<SentenceRef, GenreLabel>> gold;
  if (!mapping_path.empty()) {
    const auto mapping = load_label_mapping(mapping_path);
    validate_mapping(mapping, corpus);
    gold = extract_gold(corpus, mapping);
  }
  SeedMetrics m;
  if (!predictions_path.empty()) {
    m = evaluate_predictions(read_predictions(predictions_path, corpus), corpus, split, gold ? &*gold : nullptr);
  } else {
    m = evaluate_groups(read_cluster_groups(clusters_path, corpus, k), corpus, split);
  }
  auto value = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::ordered_json out = {{"split", split_name},
                                {"sentences", split.size()},
                                {"purity", value(m.purity)},
                                {"agreement", value(m.agreement)},
                                {"delta_bc", value(m.delta_bc)},
                                {"micro_f1", value(m.micro_f1)}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Instance-level genre labelling for UD treebanks from treebank metadata"};
  app.require_subcommand(1);

  CorpusArgs validate_args, split_args, feature_args, eval_args;

  auto* validate = app.add_subcommand("validate", "Load a collection and check mapping/embedding coverage");
  add_corpus_args(validate, validate_args);
  std::string validate_mapping_path, validate_data, validate_index;
  validate->add_option("--mapping", validate_mapping_path, "Label mapping TSV")->check(CLI::ExistingFile);
  auto* vdata = validate->add_option("--embeddings", validate_data, "Embedding data file")->check(CLI::ExistingFile);
  validate->add_option("--embeddings-index", validate_index, "Embedding index file")
      ->check(CLI::ExistingFile)
      ->needs(vdata);
  vdata->needs(validate->get_option("--embeddings-index"));

  auto* split = app.add_subcommand("split", "Write the deterministic split manifest");
  add_corpus_args(split, split_args);
  SplitRatios ratios;
  std::uint64_t split_seed = 41;
  std::string split_out;
  split->add_option("--train-frac", ratios.train_frac, "Share of train+dev in the probe pool")
      ->check(CLI::Range(0.0, 1.0));
  split->add_option("--probe-frac", ratios.probe_frac, "Share of the pool used for probe training")
      ->check(CLI::Range(0.0, 1.0));
  split->add_option("--seed", split_seed, "Shuffle seed");
  split->add_option("--out", split_out, "Output file ('-' for stdout)");

  auto* features = app.add_subcommand("features", "Extract character n-gram features");
  add_corpus_args(features, feature_args);
  std::string feature_tb, vocab_out, matrix_out;
  NgramParams ngrams;
  std::size_t char_cap = kDefaultCharCap;
  features->add_option("--treebank", feature_tb, "Restrict to one treebank id");
  features->add_option("--n-min", ngrams.n_min, "Shortest n-gram")->check(CLI::PositiveNumber);
  features->add_option("--n-max", ngrams.n_max, "Longest n-gram")->check(CLI::PositiveNumber);
  features->add_option("--min-df", ngrams.min_df, "Minimum document frequency");
  features->add_option("--max-df-frac", ngrams.max_df_frac, "Maximum document frequency fraction")
      ->check(CLI::Range(0.0, 1.0));
  features->add_option("--char-cap", char_cap, "Characters per sentence");
  features->add_option("--vocab-out", vocab_out, "Vocabulary TSV (ngram, df)")->required();
  features->add_option("--matrix-out", matrix_out, "Sparse count rows");

  auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
  std::string config_path, run_output_dir, run_id, run_methods, run_seeds, run_eval_split;
  unsigned run_workers = 0, run_threads = 0;
  bool no_cache = false, quiet = false;
  run->add_option("--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--output-dir", run_output_dir, "Override output_dir");
  run->add_option("--run-id", run_id, "Override run_id");
  run->add_option("--methods", run_methods, "Override methods (comma separated)");
  run->add_option("--seeds", run_seeds, "Override seeds (comma separated)");
  run->add_option("--eval-split", run_eval_split, "Override eval_split");
  run->add_option("--workers", run_workers, "Parallel (method, seed) runs")->check(CLI::PositiveNumber);
  run->add_option("--threads", run_threads, "Threads inside each run")->check(CLI::PositiveNumber);
  run->add_flag("--no-cache", no_cache, "Ignore and do not fill the stage cache");
  run->add_flag("--quiet", quiet, "No progress lines");

  auto* eval = app.add_subcommand("eval", "Score a prediction or cluster file on a split");
  add_corpus_args(eval, eval_args);
  std::string eval_splits, eval_split_name = "test", eval_predictions, eval_clusters, eval_mapping;
  std::size_t eval_k = kGenreCount;
  eval->add_option("--splits", eval_splits, "Split manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split_name, "Partition to score");
  auto* pred_opt = eval->add_option("--predictions", eval_predictions, "Prediction TSV")->check(CLI::ExistingFile);
  auto* clus_opt = eval->add_option("--clusters", eval_clusters, "Cluster assignment TSV")->check(CLI::ExistingFile);
  pred_opt->excludes(clus_opt);
  eval->add_option("--k", eval_k, "Cluster count for --clusters")->check(CLI::PositiveNumber);
  eval->add_option("--mapping", eval_mapping, "Label mapping TSV for micro-F1")->check(CLI::ExistingFile);

  auto* plots = app.add_subcommand("plots", "Regenerate plot CSVs from a report");
  std::string report_path;
  plots->add_option("--report", report_path, "report.json")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationFailure;
  }

  try {
    if (*validate) return cmd_validate(validate_args, validate_mapping_path, validate_data, validate_index);
    if (*split) return cmd_split(split_args, ratios, split_seed, split_out);
    if (*features) return cmd_features(feature_args, feature_tb, ngrams, char_cap, vocab_out, matrix_out);
    if (*eval) {
      if (eval_predictions.empty() && eval_clusters.empty()) {
        throw ValidationError("eval needs --predictions or --clusters");
      }
      return cmd_eval(eval_args, eval_splits, eval_split_name, eval_predictions, eval_clusters, eval_k, eval_mapping);
    }
    if (*plots) {
      for (const auto& p : emit_plots(report_path)) std::cout << p.string() << '\n';
      return 0;
    }
    if (*run) {
      RunConfig config = load_run_config(config_path);
      if (!run_output_dir.empty()) config.output_dir = run_output_dir;
      if (!run_id.empty()) config.run_id = run_id;
      if (!run_methods.empty()) {
        config.methods.clear();
        for (const auto& name : split_list(run_methods)) {
          auto m = parse_method(name);
          if (!m) throw ValidationError("unknown method '" + name + "'");
          config.methods.push_back(*m);
        }
      }
      if (!run_seeds.empty()) {
        config.seeds.clear();
        for (const auto& s : split_list(run_seeds)) config.seeds.push_back(std::stoull(s));
      }
      if (!run_eval_split.empty()) {
        auto p = parse_partition(run_eval_split);
        if (!p) throw ValidationError("unknown eval split '" + run_eval_split + "'");
        config.eval_split = *p;
      }
      if (run_workers) config.workers = run_workers;
      if (run_threads) config.threads = run_threads;
      if (no_cache) config.use_cache = false;
      const auto result = run_pipeline(config, quiet ? nullptr : &std::cerr);
      std::cout << result.report.string() << '\n';
      if (!quiet) std::cerr << fmt::format("cache: {} hit, {} run\n", result.cache_hits, result.cache_misses);
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: stage " << e.what() << '\n';
    return kStageFailure;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: bad number: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kStageFailure;
  }
  return 0;
}
