#include "udgenre/pipeline.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "udgenre/embeddings.hpp"
#include "udgenre/hash.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kReportFormat = "udgenre-report/1";
constexpr std::string_view kCacheFormat = "udgenre-cache/1";

constexpr std::array<std::pair<Method, std::string_view>, 8> kMethodNames = {{
    {Method::freq, "freq"},
    {Method::zero, "zero"},
    {Method::class_probe, "class"},
    {Method::boot, "boot"},
    {Method::gmm, "gmm"},
    {Method::lda, "lda"},
    {Method::gmm_l, "gmm+l"},
    {Method::lda_l, "lda+l"},
}};

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!obj.is_object()) throw ValidationError(fmt::format("config: {} must be an object", where));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ValidationError(fmt::format("config: unknown key '{}' in {}", it.key(), where));
    }
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

EmbeddingPaths read_embedding_paths(const json& obj, const fs::path& base, std::string_view where) {
  check_keys(obj, {"data", "index"}, where);
  if (!obj.contains("data") || !obj.contains("index")) {
    throw ValidationError(fmt::format("config: {} needs 'data' and 'index'", where));
  }
  return {resolve(base, obj.at("data").get<std::string>()), resolve(base, obj.at("index").get<std::string>())};
}

std::string_view scope_name(ClusterScope s) { return s == ClusterScope::all ? "all" : "eval"; }
std::string_view ranking_name(FreqRanking r) {
  return r == FreqRanking::treebanks ? "treebanks" : "sentence-share";
}
std::string_view distance_name(CentroidDistance d) { return d == CentroidDistance::cosine ? "cosine" : "euclidean"; }

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json echo_json(const RunConfig& c) {
  json out;
  out["run_id"] = c.run_id;
  out["manifest"] = c.manifest.generic_string();
  out["mapping"] = c.mapping ? json(c.mapping->generic_string()) : json(nullptr);
  auto paths = [](const std::optional<EmbeddingPaths>& p) {
    return p ? json{{"data", p->data.generic_string()}, {"index", p->index.generic_string()}} : json(nullptr);
  };
  out["embeddings"] = paths(c.embeddings);
  out["label_embeddings"] = paths(c.label_embeddings);
  json methods = json::array();
  for (auto m : c.methods) methods.push_back(method_name(m));
  out["methods"] = methods;
  out["seeds"] = c.seeds;
  out["split"] = {{"train_frac", c.ratios.train_frac}, {"probe_frac", c.ratios.probe_frac}, {"seed", c.split_seed}};
  out["eval_split"] = partition_name(c.eval_split);
  out["cluster_scope"] = scope_name(c.cluster_scope);
  out["restrict_to_metadata"] = c.restrict_to_metadata;
  out["freq_ranking"] = ranking_name(c.freq_ranking);
  out["probe"] = {{"lr", c.probe.lr},           {"batch", c.probe.batch},
                  {"max_epochs", c.probe.max_epochs}, {"patience", c.probe.patience},
                  {"weight_decay", c.probe.weight_decay}};
  out["boot"] = {{"tau", c.boot_tau}, {"max_rounds", c.boot_max_rounds}};
  out["gmm"] = {{"max_iter", c.gmm.max_iter}, {"tol", c.gmm.tol}, {"reg", c.gmm.reg}};
  out["lda"] = {{"max_iter", c.lda.max_iter},
                {"alpha", optional_number(c.lda.alpha)},
                {"eta", optional_number(c.lda.eta)},
                {"max_doc_iter", c.lda.max_doc_iter},
                {"doc_tol", c.lda.doc_tol}};
  out["ngrams"] = {{"n_min", c.ngrams.n_min},     {"n_max", c.ngrams.n_max},
                   {"min_df", c.ngrams.min_df},   {"max_df_frac", c.ngrams.max_df_frac},
                   {"char_cap", c.char_cap}};
  out["propagation"] = {{"rounds", c.propagation.rounds}, {"distance", distance_name(c.propagation.distance)}};
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string hash_store(const EmbeddingStore& store) {
  Fnv1a h;
  h.field(std::to_string(store.dim()));
  for (std::size_t i = 0; i < store.rows(); ++i) h.field(store.key(i).treebank_id).field(store.key(i).sent_id);
  const auto& data = store.data();
  h.update({reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float)});
  return h.hex();
}

bool in_sorted(const std::vector<SentenceRef>& sorted, SentenceRef r) {
  return std::binary_search(sorted.begin(), sorted.end(), r);
}

ClusterAssignment restrict_assignment(const ClusterAssignment& a, const std::vector<SentenceRef>& sorted) {
  ClusterAssignment out;
  out.scope = a.scope;
  out.k = a.k;
  for (std::size_t i = 0; i < a.refs.size(); ++i) {
    if (!in_sorted(sorted, a.refs[i])) continue;
    out.refs.push_back(a.refs[i]);
    out.cluster.push_back(a.cluster[i]);
  }
  return out;
}

struct Task {
  Method method;
  std::uint64_t seed;
  std::string rel_dir;  // relative to the run directory
};

struct Context {
  const RunConfig& config;
  const Corpus& corpus;
  const SplitSpec& split;
  const std::vector<SentenceRef>& eval;
  const std::vector<SentenceRef>& scope;
  const EmbeddingStore* embeddings;
  const EmbeddingStore* label_embeddings;
  fs::path run_dir;
  std::string corpus_fp;
  std::string split_fp;
  std::string embeddings_fp;
  std::string label_embeddings_fp;
};

std::string task_key(const Context& ctx, const Task& task) {
  json hyper = echo_json(ctx.config);
  for (auto key : {"run_id", "manifest", "mapping", "embeddings", "label_embeddings", "methods", "seeds"}) {
    hyper.erase(key);
  }
  Fnv1a h;
  h.field(kCacheFormat).field(ctx.corpus_fp).field(ctx.split_fp).field(partition_name(ctx.config.eval_split));
  h.field(hyper.dump()).field(method_name(task.method)).field(std::to_string(task.seed));
  if (method_needs_embeddings(task.method)) h.field(ctx.embeddings_fp);
  if (task.method == Method::zero) h.field(ctx.label_embeddings_fp);
  return h.hex();
}

ClassifyOptions classify_options(const RunConfig& c, std::uint64_t seed) {
  ClassifyOptions o;
  o.hyper = c.probe;
  o.hyper.seed = seed;
  o.restrict_to_metadata = c.restrict_to_metadata;
  o.threads = c.threads;
  return o;
}

void write_cluster_file(const fs::path& path, const Corpus& corpus, const ClusterAssignment& a) {
  std::ostringstream out;
  write_cluster_assignment(out, corpus, a);
  write_text(path, out.str());
}

// Runs one (method, seed) into its directory. meta.json is written last and
// marks the directory complete.
void run_task(const Context& ctx, const Task& task) {
  const auto& cfg = ctx.config;
  const auto& corpus = ctx.corpus;
  const fs::path dir = ctx.run_dir / task.rel_dir;
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string name(method_name(task.method));

  json meta;
  meta["method"] = name;
  meta["seed"] = task.seed;
  json warnings = json::array();
  std::optional<PredictionSet> predictions;

  switch (task.method) {
    case Method::freq:
      predictions = baseline_freq(corpus, ctx.eval, cfg.freq_ranking, task.seed);
      break;
    case Method::zero:
      predictions = baseline_zero(corpus, *ctx.embeddings, *ctx.label_embeddings, ctx.eval, task.seed);
      break;
    case Method::class_probe: {
      auto run = run_class(corpus, *ctx.embeddings, ctx.split, ctx.eval, classify_options(cfg, task.seed));
      for (auto& w : run.warnings) warnings.push_back(w);
      meta["training_size"] = run.training_size;
      predictions = std::move(run.predictions);
      break;
    }
    case Method::boot: {
      BootOptions o;
      o.tau = cfg.boot_tau;
      o.max_rounds = cfg.boot_max_rounds;
      o.classify = classify_options(cfg, task.seed);
      auto run = run_boot(corpus, *ctx.embeddings, ctx.split, ctx.eval, o);
      for (auto& w : run.warnings) warnings.push_back(w);
      json trace = json::array();
      for (const auto& r : run.trace) {
        trace.push_back({{"round", r.round},
                         {"pool_size", r.pool_size},
                         {"known", r.known.to_string()},
                         {"pooled_by_confidence", r.pooled_by_confidence},
                         {"pooled_by_inference", r.pooled_by_inference}});
      }
      meta["rounds"] = trace;
      predictions = std::move(run.predictions);
      break;
    }
    case Method::gmm: {
      auto x = gather_samples(*ctx.embeddings, resolve_rows(*ctx.embeddings, corpus, ctx.scope));
      GmmParams p = cfg.gmm;
      p.k = kGenreCount;
      p.seed = task.seed;
      p.threads = cfg.threads;
      auto model = gmm_fit(x, p);
      auto a = gmm_assign(model, x, cfg.threads);
      a.refs = ctx.scope;
      write_cluster_file(dir / "clusters.tsv", corpus, restrict_assignment(a, ctx.eval));
      meta["k"] = kGenreCount;
      meta["iterations"] = model.log_likelihood_trace.size();
      meta["converged"] = model.converged;
      meta["log_likelihood"] = model.log_likelihood_trace.back();
      break;
    }
    case Method::lda: {
      std::vector<std::string_view> texts;
      texts.reserve(ctx.scope.size());
      for (auto r : ctx.scope) texts.push_back(featurization_text(corpus.sentence(r).text, cfg.char_cap));
      NgramParams np = cfg.ngrams;
      np.threads = cfg.threads;
      auto features = char_ngram_features(texts, np);
      LdaParams p = cfg.lda;
      p.k = kGenreCount;
      p.seed = task.seed;
      p.threads = cfg.threads;
      auto model = lda_fit(features.matrix, p);
      auto a = lda_assign(model, features.matrix, p.max_doc_iter, p.doc_tol, cfg.threads);
      a.refs = ctx.scope;
      write_cluster_file(dir / "clusters.tsv", corpus, restrict_assignment(a, ctx.eval));
      meta["k"] = kGenreCount;
      meta["vocabulary"] = features.vocab.size();
      meta["iterations"] = model.elbo_trace.size();
      meta["empty_documents"] = a.flagged.size();
      break;
    }
    case Method::gmm_l:
    case Method::lda_l: {
      ClusterOptions o;
      o.method = task.method == Method::gmm_l ? ClusterMethod::gmm : ClusterMethod::lda;
      o.seed = task.seed;
      o.gmm = cfg.gmm;
      o.lda = cfg.lda;
      o.ngrams = cfg.ngrams;
      o.char_cap = cfg.char_cap;
      o.threads = cfg.threads;
      auto result = propagate_labels(cluster_all_treebanks(corpus, ctx.scope, *ctx.embeddings, o), cfg.propagation);
      {
        std::ostringstream out;
        write_residue_report(out, result);
        write_text(dir / "residue.tsv", out.str());
      }
      meta["residue_clusters"] = result.residue.size();
      if (!result.unreachable.empty()) {
        warnings.push_back("genres never reached by propagation: " + result.unreachable.to_string());
      }
      if (!result.residue.empty()) {
        warnings.push_back(fmt::format("{} residue clusters labeled in label order", result.residue.size()));
      }
      fill_residue_in_label_order(result);
      std::ostringstream clusters, labels;
      json flagged = json::array();
      for (const auto& tc : result.clusters) {
        write_cluster_assignment(clusters, corpus, tc.assignment);
        if (tc.flagged) flagged.push_back(tc.treebank_id);
      }
      write_label_report(labels, result);
      write_text(dir / "clusters.tsv", clusters.str());
      write_text(dir / "labels.tsv", labels.str());
      meta["flagged_treebanks"] = flagged;
      predictions = to_predictions(result.clusters, name, task.seed);
      break;
    }
  }

  if (predictions) {
    predictions->method = name;
    predictions->seed = task.seed;
    write_predictions(dir / "predictions.tsv", corpus, restrict_predictions(*predictions, ctx.eval));
  }
  meta["warnings"] = warnings;
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

bool cache_lookup(const fs::path& cache, const std::string& key, const fs::path& dir) {
  const fs::path entry = cache / key;
  if (!fs::exists(entry / "meta.json")) return false;
  fs::remove_all(dir);
  fs::create_directories(dir.parent_path());
  fs::copy(entry, dir, fs::copy_options::recursive);
  return true;
}

void cache_store(const fs::path& cache, const std::string& key, const fs::path& dir) {
  fs::create_directories(cache);
  const auto tag = std::hash<std::thread::id>{}(std::this_thread::get_id());
  const fs::path tmp = cache / fmt::format("{}.tmp-{}-{:x}", key, ::getpid(), tag);
  fs::remove_all(tmp);
  fs::copy(dir, tmp, fs::copy_options::recursive);
  std::error_code ec;
  fs::rename(tmp, cache / key, ec);
  if (ec) fs::remove_all(tmp);
}

json aggregate_json(const Aggregate& a) {
  json per_seed = json::array();
  for (const auto& v : a.per_seed) per_seed.push_back(optional_number(v));
  return {{"per_seed", per_seed}, {"mean", optional_number(a.mean)}, {"sd", optional_number(a.sd)}};
}

std::string safe_name(std::string_view method) {
  std::string s(method);
  std::replace(s.begin(), s.end(), '+', '-');
  return s;
}

}  // namespace

std::string_view method_name(Method m) {
  for (const auto& [method, name] : kMethodNames) {
    if (method == m) return name;
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  for (const auto& [method, n] : kMethodNames) {
    if (n == name) return method;
  }
  return std::nullopt;
}

bool method_needs_embeddings(Method m) { return m != Method::freq && m != Method::lda; }
bool method_is_labeled(Method m) { return m != Method::gmm && m != Method::lda; }

RunConfig parse_run_config(std::string_view text, const fs::path& base_dir) {
  RunConfig c;
  try {
    const json doc = json::parse(text);
    check_keys(doc,
               {"run_id", "manifest", "mapping", "embeddings", "label_embeddings", "methods", "seeds", "split",
                "eval_split", "cluster_scope", "restrict_to_metadata", "freq_ranking", "probe", "boot", "gmm", "lda",
                "ngrams", "propagation", "output_dir", "workers", "threads", "cache"},
               "config");
    if (!doc.contains("manifest")) throw ValidationError("config: 'manifest' is required");
    c.manifest = resolve(base_dir, doc.at("manifest").get<std::string>());
    if (doc.contains("mapping") && !doc.at("mapping").is_null()) {
      c.mapping = resolve(base_dir, doc.at("mapping").get<std::string>());
    }
    if (doc.contains("embeddings") && !doc.at("embeddings").is_null()) {
      c.embeddings = read_embedding_paths(doc.at("embeddings"), base_dir, "embeddings");
    }
    if (doc.contains("label_embeddings") && !doc.at("label_embeddings").is_null()) {
      c.label_embeddings = read_embedding_paths(doc.at("label_embeddings"), base_dir, "label_embeddings");
    }
    if (doc.contains("methods")) {
      for (const auto& m : doc.at("methods")) {
        auto name = m.get<std::string>();
        auto method = parse_method(name);
        if (!method) throw ValidationError("config: unknown method '" + name + "'");
        c.methods.push_back(*method);
      }
    }
    read_field(doc, "seeds", c.seeds);
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      check_keys(s, {"train_frac", "probe_frac", "seed"}, "split");
      read_field(s, "train_frac", c.ratios.train_frac);
      read_field(s, "probe_frac", c.ratios.probe_frac);
      read_field(s, "seed", c.split_seed);
    }
    if (doc.contains("eval_split")) {
      auto name = doc.at("eval_split").get<std::string>();
      auto p = parse_partition(name);
      if (!p) throw ValidationError("config: unknown eval_split '" + name + "'");
      c.eval_split = *p;
    }
    if (doc.contains("cluster_scope")) {
      auto s = doc.at("cluster_scope").get<std::string>();
      if (s == "all") {
        c.cluster_scope = ClusterScope::all;
      } else if (s == "eval") {
        c.cluster_scope = ClusterScope::eval_split;
      } else {
        throw ValidationError("config: cluster_scope must be 'all' or 'eval'");
      }
    }
    read_field(doc, "restrict_to_metadata", c.restrict_to_metadata);
    if (doc.contains("freq_ranking")) {
      auto r = doc.at("freq_ranking").get<std::string>();
      if (r == "treebanks") {
        c.freq_ranking = FreqRanking::treebanks;
      } else if (r == "sentence-share") {
        c.freq_ranking = FreqRanking::sentence_share;
      } else {
        throw ValidationError("config: freq_ranking must be 'treebanks' or 'sentence-share'");
      }
    }
    if (doc.contains("probe")) {
      const auto& p = doc.at("probe");
      check_keys(p, {"lr", "batch", "max_epochs", "patience", "weight_decay"}, "probe");
      read_field(p, "lr", c.probe.lr);
      read_field(p, "batch", c.probe.batch);
      read_field(p, "max_epochs", c.probe.max_epochs);
      read_field(p, "patience", c.probe.patience);
      read_field(p, "weight_decay", c.probe.weight_decay);
    }
    if (doc.contains("boot")) {
      const auto& b = doc.at("boot");
      check_keys(b, {"tau", "max_rounds"}, "boot");
      read_field(b, "tau", c.boot_tau);
      read_field(b, "max_rounds", c.boot_max_rounds);
    }
    if (doc.contains("gmm")) {
      const auto& g = doc.at("gmm");
      check_keys(g, {"max_iter", "tol", "reg"}, "gmm");
      read_field(g, "max_iter", c.gmm.max_iter);
      read_field(g, "tol", c.gmm.tol);
      read_field(g, "reg", c.gmm.reg);
    }
    if (doc.contains("lda")) {
      const auto& l = doc.at("lda");
      check_keys(l, {"max_iter", "alpha", "eta", "max_doc_iter", "doc_tol"}, "lda");
      read_field(l, "max_iter", c.lda.max_iter);
      if (l.contains("alpha") && !l.at("alpha").is_null()) c.lda.alpha = l.at("alpha").get<double>();
      if (l.contains("eta") && !l.at("eta").is_null()) c.lda.eta = l.at("eta").get<double>();
      read_field(l, "max_doc_iter", c.lda.max_doc_iter);
      read_field(l, "doc_tol", c.lda.doc_tol);
    }
    if (doc.contains("ngrams")) {
      const auto& n = doc.at("ngrams");
      check_keys(n, {"n_min", "n_max", "min_df", "max_df_frac", "char_cap"}, "ngrams");
      read_field(n, "n_min", c.ngrams.n_min);
      read_field(n, "n_max", c.ngrams.n_max);
      read_field(n, "min_df", c.ngrams.min_df);
      read_field(n, "max_df_frac", c.ngrams.max_df_frac);
      read_field(n, "char_cap", c.char_cap);
    }
    if (doc.contains("propagation")) {
      const auto& p = doc.at("propagation");
      check_keys(p, {"rounds", "distance"}, "propagation");
      read_field(p, "rounds", c.propagation.rounds);
      if (p.contains("distance")) {
        auto d = p.at("distance").get<std::string>();
        if (d == "cosine") {
          c.propagation.distance = CentroidDistance::cosine;
        } else if (d == "euclidean") {
          c.propagation.distance = CentroidDistance::euclidean;
        } else {
          throw ValidationError("config: propagation.distance must be 'cosine' or 'euclidean'");
        }
      }
    }
    if (doc.contains("output_dir")) c.output_dir = resolve(base_dir, doc.at("output_dir").get<std::string>());
    read_field(doc, "run_id", c.run_id);
    read_field(doc, "workers", c.workers);
    read_field(doc, "threads", c.threads);
    read_field(doc, "cache", c.use_cache);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

void validate_config(const RunConfig& c) {
  if (c.methods.empty()) throw ValidationError("config: no methods selected");
  if (c.seeds.empty()) throw ValidationError("config: no seeds given");
  if (std::set<Method>(c.methods.begin(), c.methods.end()).size() != c.methods.size()) {
    throw ValidationError("config: duplicate method");
  }
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    throw ValidationError("config: duplicate seed");
  }
  auto require_file = [](const fs::path& p, std::string_view what) {
    if (!fs::is_regular_file(p)) throw ValidationError(fmt::format("config: {} '{}' does not exist", what, p.string()));
  };
  require_file(c.manifest, "manifest");
  if (c.mapping) require_file(*c.mapping, "mapping");
  for (auto m : c.methods) {
    if (method_needs_embeddings(m) && !c.embeddings) {
      throw ValidationError(fmt::format("config: method {} needs sentence embeddings", method_name(m)));
    }
    if (m == Method::zero && !c.label_embeddings) {
      throw ValidationError("config: method zero needs label embeddings");
    }
  }
  if (c.embeddings) {
    require_file(c.embeddings->data, "embedding data");
    require_file(c.embeddings->index, "embedding index");
  }
  if (c.label_embeddings) {
    require_file(c.label_embeddings->data, "label embedding data");
    require_file(c.label_embeddings->index, "label embedding index");
  }
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(c.ratios.train_frac) || !open_unit(c.ratios.probe_frac)) {
    throw ValidationError("config: split fractions must lie in (0, 1)");
  }
  if (!(c.boot_tau > 0.0 && c.boot_tau <= 1.0)) throw ValidationError("config: boot.tau must lie in (0, 1]");
  if (c.boot_max_rounds < 1) throw ValidationError("config: boot.max_rounds must be positive");
  if (c.probe.batch == 0 || c.probe.max_epochs < 1 || c.probe.patience < 1 || !(c.probe.lr > 0.0)) {
    throw ValidationError("config: probe hyperparameters out of range");
  }
  if (c.ngrams.n_min == 0 || c.ngrams.n_min > c.ngrams.n_max) throw ValidationError("config: bad n-gram range");
  if (c.propagation.rounds < 0) throw ValidationError("config: propagation.rounds must be >= 0");
  if (c.workers == 0 || c.threads == 0) throw ValidationError("config: workers and threads must be positive");
  if (c.run_id.find('/') != std::string::npos || c.run_id == "." || c.run_id == "..") {
    throw ValidationError("config: run_id must be a plain directory name");
  }
}

std::string config_echo(const RunConfig& config) { return echo_json(config).dump(2); }

std::string effective_run_id(const RunConfig& config) {
  if (!config.run_id.empty()) return config.run_id;
  json echo = echo_json(config);
  echo.erase("run_id");
  return "run-" + Fnv1a().update(echo.dump()).hex().substr(0, 12);
}

fs::path cache_dir(const RunConfig& config) {
  if (const char* env = std::getenv("UDGENRE_CACHE_DIR"); env && *env) return env;
  return config.output_dir / ".cache";
}

PredictionSet restrict_predictions(const PredictionSet& predictions, const std::vector<SentenceRef>& sorted_refs) {
  PredictionSet out;
  out.method = predictions.method;
  out.seed = predictions.seed;
  for (const auto& p : predictions.items) {
    if (in_sorted(sorted_refs, p.ref)) out.items.push_back(p);
  }
  return out;
}

GroupAssignment read_cluster_groups(const fs::path& path, const Corpus& corpus, std::size_t k) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  GroupAssignment out;
  out.groups = k;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError(fmt::format("{}:{}: expected 3 columns", path.string(), lineno));
    auto ref = corpus.lookup(std::string_view(line).substr(0, t1), std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    if (!ref) throw ParseError(fmt::format("{}:{}: unknown sentence", path.string(), lineno));
    const unsigned long cluster = std::stoul(line.substr(t2 + 1));
    if (cluster >= k) throw ParseError(fmt::format("{}:{}: cluster {} out of range", path.string(), lineno, cluster));
    out.refs.push_back(*ref);
    out.group.push_back(static_cast<std::uint32_t>(cluster));
  }
  return out;
}

SeedMetrics evaluate_groups(const GroupAssignment& groups, const Corpus& corpus,
                            const std::vector<SentenceRef>& split) {
  SeedMetrics m;
  m.purity = purity(groups, corpus, split);
  m.agreement = agreement(groups, corpus, split);
  try {
    m.delta_bc = delta_bc(groups, corpus, split);
  } catch (const ValidationError& e) {
    if (std::string_view(e.what()) != "no pairs") throw;
  }
  return m;
}

SeedMetrics evaluate_predictions(const PredictionSet& predictions, const Corpus& corpus,
                                 const std::vector<SentenceRef>& split,
                                 const std::map<SentenceRef, GenreLabel>* gold) {
  SeedMetrics m = evaluate_groups(groups_of(predictions), corpus, split);
  if (gold) m.micro_f1 = micro_f1(predictions, *gold, split);
  return m;
}

RunResult run_pipeline(const RunConfig& config, std::ostream* log) {
  validate_config(config);
  RunResult result;
  result.run_dir = config.output_dir / effective_run_id(config);
  fs::create_directories(result.run_dir);
  fs::remove_all(result.run_dir / "failed");
  fs::remove(result.run_dir / "report.json");

  std::mutex log_mutex;
  auto note = [&](const std::string& line) {
    if (!log) return;
    std::lock_guard lock(log_mutex);
    *log << line << '\n';
  };

  std::string stage = "ingest";
  try {
    note("[ingest] " + config.manifest.string());
    const Corpus corpus = load_collection(config.manifest, config.threads);
    std::optional<std::map<SentenceRef, GenreLabel>> gold;
    std::size_t unmapped_count = 0;
    if (config.mapping) {
      const auto mapping = load_label_mapping(*config.mapping);
      validate_mapping(mapping, corpus);
      gold.emplace();
      std::ostringstream unmapped;
      for (std::uint32_t t = 0; t < corpus.treebanks().size(); ++t) {
        const auto& tb = corpus.treebank(t);
        auto labels = extract_instance_labels(tb, mapping);
        for (const auto& [sid, genre] : labels.by_sent_id) (*gold)[*corpus.lookup(tb.id, sid)] = genre;
        for (const auto& u : labels.unmapped) unmapped << tb.id << '\t' << u.sent_id << '\t' << u.raw << '\n';
        unmapped_count += labels.unmapped.size();
      }
      write_text(result.run_dir / "unmapped.tsv", unmapped.str());
    }

    stage = "split";
    const SplitSpec split = make_splits(corpus, config.ratios, config.split_seed);
    write_text(result.run_dir / "splits.tsv", split_manifest_text(corpus, split));
    const auto& eval = split.members(config.eval_split);
    note(fmt::format("[split] {} sentences in {} split", eval.size(), partition_name(config.eval_split)));
    if (eval.empty()) throw ValidationError("evaluation split is empty");
    const std::vector<SentenceRef> scope = config.cluster_scope == ClusterScope::all ? corpus.all_refs() : eval;

    stage = "prepare";
    std::optional<EmbeddingStore> embeddings, label_embeddings;
    bool need_embeddings = false;
    for (auto m : config.methods) need_embeddings = need_embeddings || method_needs_embeddings(m);
    if (need_embeddings) {
      embeddings = read_embeddings(config.embeddings->data, config.embeddings->index);
      std::set<SentenceRef> needed(eval.begin(), eval.end());
      for (auto m : config.methods) {
        if (m == Method::class_probe || m == Method::boot) {
          needed.insert(split.probe_train.begin(), split.probe_train.end());
          needed.insert(split.probe_heldout.begin(), split.probe_heldout.end());
        }
        if (m == Method::gmm || m == Method::gmm_l || m == Method::lda_l) needed.insert(scope.begin(), scope.end());
      }
      resolve_rows(*embeddings, corpus, {needed.begin(), needed.end()});
      note(fmt::format("[prepare] {} embedding rows, dim {}", embeddings->rows(), embeddings->dim()));
    }
    if (std::find(config.methods.begin(), config.methods.end(), Method::zero) != config.methods.end()) {
      label_embeddings = read_embeddings(config.label_embeddings->data, config.label_embeddings->index);
    }

    stage = "methods";
    Context ctx{config,
                corpus,
                split,
                eval,
                scope,
                embeddings ? &*embeddings : nullptr,
                label_embeddings ? &*label_embeddings : nullptr,
                result.run_dir,
                corpus.fingerprint(),
                split_fingerprint(corpus, split),
                embeddings ? hash_store(*embeddings) : "",
                label_embeddings ? hash_store(*label_embeddings) : ""};
    std::vector<Task> tasks;
    for (auto m : config.methods) {
      for (auto s : config.seeds) {
        tasks.push_back({m, s, fmt::format("methods/{}/seed-{}", method_name(m), s)});
      }
    }
    const fs::path cache = cache_dir(config);
    std::vector<char> hit(tasks.size(), 0);
    parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
      const auto& task = tasks[i];
      const std::string label = fmt::format("{} seed {}", method_name(task.method), task.seed);
      try {
        const std::string key = task_key(ctx, task);
        const fs::path dir = result.run_dir / task.rel_dir;
        if (config.use_cache) {
          try {
            if (cache_lookup(cache, key, dir)) {
              hit[i] = 1;
              note("[methods] " + label + " (cached)");
              return;
            }
          } catch (const fs::filesystem_error& e) {
            note(std::string("[cache] lookup failed: ") + e.what());
          }
        }
        note("[methods] " + label);
        run_task(ctx, task);
        if (config.use_cache) {
          try {
            cache_store(cache, key, dir);
          } catch (const fs::filesystem_error& e) {
            note(std::string("[cache] store failed: ") + e.what());
          }
        }
      } catch (const std::exception& e) {
        throw StageError("methods (" + label + ")", e.what());
      }
    });
    for (char h : hit) (h ? result.cache_hits : result.cache_misses) += 1;

    stage = "evaluate";
    const std::map<SentenceRef, GenreLabel>* gold_ptr = gold ? &*gold : nullptr;
    std::size_t gold_on_eval = 0;
    if (gold) {
      for (auto r : eval) gold_on_eval += gold->count(r);
    }
    const bool have_confusion = gold_on_eval > 0;

    json methods = json::array();
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      const Method method = config.methods[mi];
      const std::string name(method_name(method));
      const bool labeled = method_is_labeled(method);
      std::vector<std::optional<double>> pur, agr, dbc, f1;
      std::array<std::vector<std::optional<double>>, kGenreCount> fractions;
      Eigen::MatrixXd confusion_sum = Eigen::MatrixXd::Zero(kGenreCount, kGenreCount);
      std::array<std::size_t, kGenreCount> row_counts{};
      json files = {{"predictions", json::array()}, {"clusters", json::array()}, {"labels", json::array()},
                    {"residue", json::array()},     {"meta", json::array()}};
      json notes = json::array();

      for (std::size_t si = 0; si < config.seeds.size(); ++si) {
        const Task& task = tasks[mi * config.seeds.size() + si];
        const fs::path dir = result.run_dir / task.rel_dir;
        const json meta = read_json(dir / "meta.json");
        notes.push_back({{"seed", task.seed}, {"meta", task.rel_dir + "/meta.json"}, {"warnings", meta.at("warnings")}});
        files["meta"].push_back(task.rel_dir + "/meta.json");
        for (const char* extra : {"clusters", "labels", "residue"}) {
          if (fs::exists(dir / (std::string(extra) + ".tsv"))) files[extra].push_back(task.rel_dir + "/" + extra + ".tsv");
        }
        SeedMetrics m;
        if (labeled) {
          auto preds = read_predictions(dir / "predictions.tsv", corpus);
          std::vector<SentenceRef> covered;
          for (const auto& p : preds.items) covered.push_back(p.ref);
          std::sort(covered.begin(), covered.end());
          if (covered != eval) {
            throw StageError("evaluate", fmt::format("{} seed {}: predictions do not cover exactly the {} split", name,
                                                     task.seed, partition_name(config.eval_split)));
          }
          files["predictions"].push_back(task.rel_dir + "/predictions.tsv");
          m = evaluate_predictions(preds, corpus, eval, gold_ptr);
          auto frac = predicted_fractions(preds, eval);
          for (std::size_t g = 0; g < kGenreCount; ++g) fractions[g].push_back(frac[g]);
          if (have_confusion) {
            auto c = confusion(preds, *gold, eval);
            confusion_sum += c.ratios;
            row_counts = c.row_counts;
          }
        } else {
          auto groups = read_cluster_groups(dir / "clusters.tsv", corpus, meta.at("k").get<std::size_t>());
          m = evaluate_groups(groups, corpus, eval);
        }
        pur.push_back(m.purity);
        agr.push_back(m.agreement);
        dbc.push_back(m.delta_bc);
        f1.push_back(m.micro_f1);
      }

      json entry;
      entry["name"] = name;
      entry["kind"] = labeled ? "labels" : "clusters";
      entry["seeds"] = config.seeds;
      entry["metrics"] = {{"purity", aggregate_json(aggregate(pur))},
                          {"agreement", aggregate_json(aggregate(agr))},
                          {"delta_bc", aggregate_json(aggregate(dbc))},
                          {"micro_f1", aggregate_json(aggregate(f1))}};
      if (labeled) {
        json dist = json::array();
        for (std::size_t g = 0; g < kGenreCount; ++g) {
          auto a = aggregate(fractions[g]);
          dist.push_back({{"genre", genre_name(genre_at(g))},
                          {"per_seed", aggregate_json(a).at("per_seed")},
                          {"mean", optional_number(a.mean)},
                          {"sd", optional_number(a.sd)}});
        }
        entry["distribution"] = dist;
      } else {
        entry["distribution"] = nullptr;
      }
      if (labeled && have_confusion) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < confusion_sum.rows(); ++r) {
          json row = json::array();
          for (Eigen::Index c = 0; c < confusion_sum.cols(); ++c) {
            row.push_back(confusion_sum(r, c) / static_cast<double>(config.seeds.size()));
          }
          rows.push_back(row);
        }
        entry["confusion"] = {{"matrix", rows}, {"row_counts", row_counts}};
      } else {
        entry["confusion"] = nullptr;
      }
      json plots = json::object();
      if (labeled) plots["distribution"] = "plots/distribution-" + safe_name(name) + ".csv";
      if (labeled && have_confusion) plots["confusion"] = "plots/confusion-" + safe_name(name) + ".csv";
      entry["plots"] = plots;
      entry["files"] = files;
      entry["notes"] = notes;
      methods.push_back(entry);
    }

    stage = "report";
    json report;
    report["format"] = kReportFormat;
    report["config"] = echo_json(config);
    report["run_id"] = effective_run_id(config);
    report["corpus"] = {{"treebanks", corpus.treebanks().size()},
                        {"sentences", corpus.sentence_count()},
                        {"fingerprint", ctx.corpus_fp}};
    json sizes = json::object();
    for (auto p : kPartitions) sizes[std::string(partition_name(p))] = split.members(p).size();
    report["split"] = {{"file", "splits.tsv"}, {"fingerprint", ctx.split_fp}, {"sizes", sizes}};
    report["evaluation"] = {{"split", partition_name(config.eval_split)},
                            {"sentences", eval.size()},
                            {"gold_sentences", gold ? json(gold_on_eval) : json(nullptr)},
                            {"unmapped_labels", gold ? json(unmapped_count) : json(nullptr)}};
    report["definitions"] = {
        {"purity", "over evaluation sentences of single-genre treebanks, gold = the treebank genre"},
        {"agreement",
         "pairs of single-genre treebanks sharing their genre whose majority label or cluster coincides; "
         "majority ties go to the lower index"},
        {"delta_bc", "mean over treebank pairs of |expected overlap - Bhattacharyya coefficient| x 100"},
        {"micro_f1", "over gold-labeled evaluation sentences"},
        {"sd", "population standard deviation across seeds"},
        {"cluster_scope", config.cluster_scope == ClusterScope::all ? "all sentences of each treebank"
                                                                     : "evaluation split only"},
        {"lda_vocabulary", "rebuilt for each clustering scope"}};
    json bounds = json::array();
    const auto gb = genre_bounds(corpus);
    for (std::size_t g = 0; g < kGenreCount; ++g) {
      bounds.push_back({{"genre", genre_name(genre_at(g))},
                        {"tb_count", gb[g].treebank_count},
                        {"min", gb[g].min_frac},
                        {"uniform", gb[g].uniform_frac},
                        {"max", gb[g].max_frac}});
    }
    report["bounds"] = bounds;
    report["methods"] = methods;
    result.report = result.run_dir / "report.json";

    stage = "plots";
    fs::path staged = result.run_dir / "report.json.partial";
    write_text(staged, report.dump(2) + "\n");
    fs::rename(staged, result.report);
    emit_plots(result.report);
    note("[report] " + result.report.string());
  } catch (const std::exception& e) {
    const auto* se = dynamic_cast<const StageError*>(&e);
    const std::string failed_stage = se ? se->stage() : stage;
    std::string message = e.what();
    if (se && message.rfind(failed_stage + ": ", 0) == 0) message = message.substr(failed_stage.size() + 2);
    try {
      fs::create_directories(result.run_dir / "failed");
      write_text(result.run_dir / "failed" / "error.txt",
                 fmt::format("stage: {}\nerror: {}\n", failed_stage, message));
      fs::remove(result.report);
    } catch (...) {
    }
    throw StageError(failed_stage, message);
  }
  return result;
}

std::vector<fs::path> emit_plots(const fs::path& report_path) {
  const json report = read_json(report_path);
  if (!report.contains("format") || report.at("format") != kReportFormat) {
    throw ValidationError(report_path.string() + ": not a run report");
  }
  const fs::path run_dir = report_path.parent_path();
  fs::create_directories(run_dir / "plots");
  std::vector<fs::path> written;
  const auto& bounds = report.at("bounds");
  auto number = [](const json& v) { return v.is_null() ? std::string("NA") : fmt::format("{}", v.get<double>()); };
  for (const auto& method : report.at("methods")) {
    const auto& plots = method.at("plots");
    if (plots.contains("distribution")) {
      std::ostringstream out;
      out << "genre,tb_count,min,uniform,max,method_mean,method_sd\n";
      const auto& dist = method.at("distribution");
      for (std::size_t g = 0; g < kGenreCount; ++g) {
        const auto& b = bounds.at(g);
        out << b.at("genre").get<std::string>() << ',' << b.at("tb_count").get<std::size_t>() << ','
            << number(b.at("min")) << ',' << number(b.at("uniform")) << ',' << number(b.at("max")) << ','
            << number(dist.at(g).at("mean")) << ',' << number(dist.at(g).at("sd")) << '\n';
      }
      const fs::path p = run_dir / plots.at("distribution").get<std::string>();
      write_text(p, out.str());
      written.push_back(p);
    }
    if (plots.contains("confusion")) {
      Eigen::MatrixXd m(kGenreCount, kGenreCount);
      const auto& rows = method.at("confusion").at("matrix");
      for (std::size_t r = 0; r < kGenreCount; ++r) {
        for (std::size_t c = 0; c < kGenreCount; ++c) {
          m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows.at(r).at(c).get<double>();
        }
      }
      std::ostringstream out;
      write_confusion_csv(out, m);
      const fs::path p = run_dir / plots.at("confusion").get<std::string>();
      write_text(p, out.str());
      written.push_back(p);
    }
  }
  return written;
}

}  // namespace udgenre
