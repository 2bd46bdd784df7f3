#include "udgenre/predictions.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "udgenre/error.hpp"

namespace udgenre {

void write_predictions(std::ostream& out, const Corpus& corpus, const PredictionSet& predictions) {
  std::vector<std::size_t> order(predictions.items.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return corpus.key_less(predictions.items[a].ref, predictions.items[b].ref);
  });
  for (auto i : order) {
    const auto& p = predictions.items[i];
    out << fmt::format("{}\t{}\t{}\t{}\t{:.6f}\t{}\n", predictions.method, corpus.treebank_of(p.ref).id,
                       corpus.sentence(p.ref).sent_id, genre_name(p.label), p.confidence, predictions.seed);
  }
}

void write_predictions(const std::filesystem::path& path, const Corpus& corpus, const PredictionSet& predictions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  write_predictions(out, corpus, predictions);
  if (!out) throw Error("write failed for " + path.string());
}

PredictionSet read_predictions(const std::filesystem::path& path, const Corpus& corpus) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  PredictionSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    auto fail = [&](const std::string& msg) {
      return ParseError(path.string() + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (cols.size() != 6) throw fail("expected 6 columns");
    auto ref = corpus.lookup(cols[1], cols[2]);
    if (!ref) throw fail("unknown sentence " + cols[1] + "/" + cols[2]);
    auto genre = parse_genre(cols[3]);
    if (!genre) throw fail("unknown genre '" + cols[3] + "'");
    if (line_no == 1) {
      set.method = cols[0];
      set.seed = std::stoull(cols[5]);
    } else if (cols[0] != set.method) {
      throw fail("mixed methods in one prediction file");
    }
    set.items.push_back({*ref, *genre, std::stod(cols[4])});
  }
  return set;
}

}  // namespace udgenre
