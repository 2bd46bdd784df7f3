#include "udgenre/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "udgenre/error.hpp"

namespace udgenre {
namespace {

// Per-ref group lookup restricted to the split; missing entries stay -1.
std::vector<std::int64_t> groups_on_split(const GroupAssignment& a, const std::vector<SentenceRef>& split) {
  std::map<SentenceRef, std::uint32_t> by_ref;
  for (std::size_t i = 0; i < a.refs.size(); ++i) by_ref.emplace(a.refs[i], a.group[i]);
  std::vector<std::int64_t> out(split.size(), -1);
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (auto it = by_ref.find(split[i]); it != by_ref.end()) out[i] = it->second;
  }
  return out;
}

// Group counts per treebank over the split.
std::vector<std::vector<double>> treebank_group_counts(const GroupAssignment& a, const Corpus& corpus,
                                                       const std::vector<SentenceRef>& split, bool require_all) {
  auto groups = groups_on_split(a, split);
  std::vector<std::vector<double>> counts(corpus.treebanks().size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (groups[i] < 0) {
      if (require_all) {
        throw ValidationError("no prediction for " + corpus.treebank_of(split[i]).id + "/" +
                              corpus.sentence(split[i]).sent_id);
      }
      continue;
    }
    auto& c = counts[split[i].treebank];
    if (c.empty()) c.assign(a.groups, 0.0);
    c.at(static_cast<std::size_t>(groups[i])) += 1.0;
  }
  return counts;
}

std::size_t majority(const std::vector<double>& counts) {
  std::size_t best = 0;
  for (std::size_t g = 1; g < counts.size(); ++g) {
    if (counts[g] > counts[best]) best = g;
  }
  return best;
}

}  // namespace

GroupAssignment groups_of(const PredictionSet& predictions) {
  GroupAssignment out;
  out.groups = kGenreCount;
  out.refs.reserve(predictions.size());
  out.group.reserve(predictions.size());
  for (const auto& p : predictions.items) {
    out.refs.push_back(p.ref);
    out.group.push_back(static_cast<std::uint32_t>(genre_index(p.label)));
  }
  return out;
}

GroupAssignment groups_of(const ClusterAssignment& clusters) {
  if (clusters.refs.size() != clusters.cluster.size()) throw ValidationError("cluster assignment has no sentence refs");
  return {clusters.refs, clusters.cluster, clusters.k};
}

GenreDistribution::GenreDistribution(std::vector<double> p) : p_(std::move(p)) {
  double total = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0)) throw ValidationError("distribution has a negative or NaN entry");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError(fmt::format("distribution sums to {}, not 1", total));
}

GenreDistribution GenreDistribution::uniform(const LabelSet& labels) {
  if (labels.empty()) throw ValidationError("uniform distribution over an empty label set");
  std::vector<double> p(kGenreCount, 0.0);
  for (auto g : labels.labels()) p[genre_index(g)] = 1.0 / static_cast<double>(labels.size());
  return GenreDistribution(std::move(p));
}

GenreDistribution GenreDistribution::from_counts(const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (!(total > 0.0)) throw ValidationError("distribution from all-zero counts");
  std::vector<double> p(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) p[i] = counts[i] / total;
  return GenreDistribution(std::move(p));
}

double bhattacharyya(const GenreDistribution& p, const GenreDistribution& q) {
  if (p.size() != q.size() || p.size() == 0) throw ValidationError("distributions have different supports");
  double bc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) bc += std::sqrt(p.values()[i] * q.values()[i]);
  return std::min(bc, 1.0);
}

double expected_overlap(const LabelSet& ls, const LabelSet& lt) {
  if (ls.empty() || lt.empty()) throw ValidationError("expected overlap of an empty label set");
  return static_cast<double>(ls.intersect(lt).size()) /
         std::sqrt(static_cast<double>(ls.size()) * static_cast<double>(lt.size()));
}

double delta_bc(const GroupAssignment& assignment, const Corpus& corpus, const std::vector<SentenceRef>& split) {
  auto counts = treebank_group_counts(assignment, corpus, split, true);
  std::vector<std::size_t> eligible;
  std::vector<GenreDistribution> dist(counts.size());
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t].empty()) continue;
    eligible.push_back(t);
    dist[t] = GenreDistribution::from_counts(counts[t]);
  }
  if (eligible.size() < 2) throw ValidationError("no pairs");
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < eligible.size(); ++i) {
    const auto& ls = corpus.treebank(static_cast<std::uint32_t>(eligible[i])).genres;
    for (std::size_t j = i + 1; j < eligible.size(); ++j) {
      const auto& lt = corpus.treebank(static_cast<std::uint32_t>(eligible[j])).genres;
      total += std::abs(expected_overlap(ls, lt) - bhattacharyya(dist[eligible[i]], dist[eligible[j]]));
      ++pairs;
    }
  }
  return 100.0 * total / static_cast<double>(pairs);
}

std::optional<double> purity(const GroupAssignment& assignment, const Corpus& corpus,
                             const std::vector<SentenceRef>& split) {
  auto groups = groups_on_split(assignment, split);
  // group -> counts per gold genre
  std::vector<std::array<double, kGenreCount>> table(assignment.groups);
  double n = 0.0;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& tb = corpus.treebank_of(split[i]);
    if (!tb.single_genre() || groups[i] < 0) continue;
    table.at(static_cast<std::size_t>(groups[i]))[genre_index(tb.genres.sole())] += 1.0;
    n += 1.0;
  }
  if (n == 0.0) return std::nullopt;
  double captured = 0.0;
  for (const auto& row : table) captured += *std::max_element(row.begin(), row.end());
  return 100.0 * captured / n;
}

std::optional<double> agreement(const GroupAssignment& assignment, const Corpus& corpus,
                                const std::vector<SentenceRef>& split) {
  auto counts = treebank_group_counts(assignment, corpus, split, false);
  std::array<std::vector<std::size_t>, kGenreCount> majorities;
  for (std::size_t t = 0; t < counts.size(); ++t) {
    const auto& tb = corpus.treebank(static_cast<std::uint32_t>(t));
    if (!tb.single_genre() || counts[t].empty()) continue;
    majorities[genre_index(tb.genres.sole())].push_back(majority(counts[t]));
  }
  std::size_t pairs = 0, agreeing = 0;
  for (const auto& m : majorities) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = i + 1; j < m.size(); ++j) {
        ++pairs;
        if (m[i] == m[j]) ++agreeing;
      }
    }
  }
  if (pairs == 0) return std::nullopt;
  return 100.0 * static_cast<double>(agreeing) / static_cast<double>(pairs);
}

std::optional<double> micro_f1(const PredictionSet& predictions, const std::map<SentenceRef, GenreLabel>& gold,
                               const std::vector<SentenceRef>& split) {
  std::map<SentenceRef, GenreLabel> predicted;
  for (const auto& p : predictions.items) predicted.emplace(p.ref, p.label);
  double tp = 0.0, fp = 0.0, fn = 0.0;
  for (auto ref : split) {
    auto g = gold.find(ref);
    if (g == gold.end()) continue;
    auto p = predicted.find(ref);
    if (p == predicted.end()) {
      fn += 1.0;
    } else if (p->second == g->second) {
      tp += 1.0;
    } else {
      fp += 1.0;
      fn += 1.0;
    }
  }
  if (tp + fn == 0.0) return std::nullopt;
  if (tp == 0.0) return 0.0;
  const double precision = tp / (tp + fp);
  const double recall = tp / (tp + fn);
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}

Confusion confusion(const PredictionSet& predictions, const std::map<SentenceRef, GenreLabel>& gold,
                    const std::vector<SentenceRef>& split) {
  std::map<SentenceRef, GenreLabel> predicted;
  for (const auto& p : predictions.items) predicted.emplace(p.ref, p.label);
  Confusion out;
  out.ratios = Eigen::MatrixXd::Zero(kGenreCount, kGenreCount);
  for (auto ref : split) {
    auto g = gold.find(ref);
    auto p = predicted.find(ref);
    if (g == gold.end() || p == predicted.end()) continue;
    out.ratios(static_cast<Eigen::Index>(genre_index(g->second)), static_cast<Eigen::Index>(genre_index(p->second))) += 1.0;
    ++out.row_counts[genre_index(g->second)];
  }
  for (std::size_t r = 0; r < kGenreCount; ++r) {
    if (out.row_counts[r] > 0) out.ratios.row(static_cast<Eigen::Index>(r)) /= static_cast<double>(out.row_counts[r]);
  }
  return out;
}

GenreBounds genre_bounds(const Corpus& corpus) {
  GenreBounds out{};
  const auto total = static_cast<double>(corpus.sentence_count());
  for (const auto& tb : corpus.treebanks()) {
    const auto size = static_cast<double>(tb.sentences.size());
    for (auto g : tb.genres.labels()) {
      auto& b = out[genre_index(g)];
      ++b.treebank_count;
      b.max_frac += size;
      b.uniform_frac += size / static_cast<double>(tb.genres.size());
      if (tb.single_genre()) b.min_frac += size;
    }
  }
  if (total > 0.0) {
    for (auto& b : out) {
      b.min_frac /= total;
      b.uniform_frac /= total;
      b.max_frac /= total;
    }
  }
  return out;
}

std::array<double, kGenreCount> predicted_fractions(const PredictionSet& predictions,
                                                    const std::vector<SentenceRef>& split) {
  GroupAssignment a = groups_of(predictions);
  auto groups = groups_on_split(a, split);
  std::array<double, kGenreCount> out{};
  double n = 0.0;
  for (auto g : groups) {
    if (g < 0) continue;
    out[static_cast<std::size_t>(g)] += 1.0;
    n += 1.0;
  }
  if (n > 0.0) {
    for (auto& v : out) v /= n;
  }
  return out;
}

Aggregate aggregate(std::vector<std::optional<double>> per_seed) {
  Aggregate out;
  out.per_seed = std::move(per_seed);
  std::vector<double> values;
  for (const auto& v : out.per_seed) {
    if (v) values.push_back(*v);
  }
  if (values.empty()) return out;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  out.mean = mean;
  out.sd = std::sqrt(var / static_cast<double>(values.size()));
  return out;
}

void write_confusion_csv(std::ostream& out, const Eigen::MatrixXd& ratios) {
  out << "gold";
  for (auto g : all_genres()) out << ',' << genre_name(g);
  out << '\n';
  for (std::size_t r = 0; r < kGenreCount; ++r) {
    out << genre_name(genre_at(r));
    for (std::size_t c = 0; c < kGenreCount; ++c) {
      out << ',' << fmt::format("{:.6f}", ratios(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
    }
    out << '\n';
  }
}

}  // namespace udgenre
