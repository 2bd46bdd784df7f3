#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "udgenre/cluster.hpp"
#include "udgenre/features.hpp"

namespace udgenre {

struct LdaParams {
  std::size_t k = 18;
  std::uint64_t seed = 41;
  int max_iter = 50;
  std::optional<double> alpha;  // document-topic prior, default 1/k
  std::optional<double> eta;    // topic-word prior, default 1/k
  int max_doc_iter = 100;
  double doc_tol = 1e-3;        // mean absolute change of a document's gamma
  double elbo_rel_tol = 1e-8;   // stop early below this relative ELBO gain; 0 disables
  unsigned threads = 1;
};

// Batch variational Bayes LDA. `lambda` holds the variational Dirichlet
// parameters of the topic-word distributions.
struct LdaModel {
  std::size_t k = 0;
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double eta = 0.0;
  Eigen::MatrixXd lambda;  // k x V
  std::vector<double> elbo_trace;

  // Rows of lambda normalized to probabilities.
  Eigen::MatrixXd topic_word() const;
};

// Throws ValidationError on an empty vocabulary, k == 0, k > |vocab| or an
// all-zero matrix.
LdaModel lda_fit(const FeatureMatrix& counts, const LdaParams& params);

// Per-document topic proportions (gamma normalized) and their argmax, ties
// toward the lower topic. Empty documents get topic 0 with a uniform
// posterior and are listed in `flagged`.
ClusterAssignment lda_assign(const LdaModel& model, const FeatureMatrix& counts, int max_doc_iter = 100,
                             double doc_tol = 1e-3, unsigned threads = 1);

std::string lda_to_json(const LdaModel& model);
LdaModel lda_from_json(std::string_view text);

}  // namespace udgenre
