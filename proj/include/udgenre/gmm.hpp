#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "udgenre/cluster.hpp"

namespace udgenre {

struct GmmParams {
  std::size_t k = 18;
  std::uint64_t seed = 41;
  int max_iter = 100;
  double tol = 1e-3;   // on the per-sample mean log-likelihood
  double reg = 1e-6;   // added to every covariance diagonal
  unsigned threads = 1;
};

// Full-covariance Gaussian mixture.
struct GmmModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;
  // Per-sample mean log-likelihood evaluated at the start of each EM step,
  // plus one final entry for the returned parameters.
  std::vector<double> log_likelihood_trace;
  bool converged = false;
};

// EM from a k-means initialization. Throws ValidationError when there are
// fewer samples than components and NumericalError naming the component
// when a covariance stops being positive definite.
GmmModel gmm_fit(const SampleMatrix& x, const GmmParams& params);

// Per-sample log p(x, component) for every component: n x k.
Eigen::MatrixXd gmm_log_joint(const GmmModel& model, const SampleMatrix& x, unsigned threads = 1);

// Argmax responsibility per sample with posteriors; ties toward the lower
// component index.
ClusterAssignment gmm_assign(const GmmModel& model, const SampleMatrix& x, unsigned threads = 1);

std::string gmm_to_json(const GmmModel& model);
GmmModel gmm_from_json(std::string_view text);

}  // namespace udgenre
