#include "udgenre/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "udgenre/error.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {
namespace {

// Column blocks are fixed in size so results do not depend on thread count.
constexpr Eigen::Index kBlock = 256;

struct Factor {
  Eigen::MatrixXd lower;  // Cholesky factor L with cov = L L^T
  double log_det = 0.0;
};

Factor factorize(const Eigen::MatrixXd& cov, std::size_t component) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("covariance of component " + std::to_string(component) +
                         " collapsed (not positive definite despite regularization)");
  }
  Factor f;
  f.lower = llt.matrixL();
  f.log_det = 2.0 * f.lower.diagonal().array().log().sum();
  return f;
}

// Row-wise log-sum-exp of an n x k matrix.
Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixXd& m) {
  Eigen::VectorXd out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double peak = m.row(i).maxCoeff();
    out(i) = std::isinf(peak) ? peak : peak + std::log((m.row(i).array() - peak).exp().sum());
  }
  return out;
}

Eigen::MatrixXd log_joint(const GmmModel& model, const std::vector<Factor>& factors, const SampleMatrix& x,
                          unsigned threads) {
  const Eigen::Index n = x.cols();
  const auto d = static_cast<double>(model.dim);
  Eigen::MatrixXd out(n, static_cast<Eigen::Index>(model.k));
  const std::size_t blocks = static_cast<std::size_t>((n + kBlock - 1) / kBlock);
  parallel_for(blocks * model.k, threads, [&](std::size_t task) {
    const std::size_t c = task % model.k;
    const Eigen::Index begin = static_cast<Eigen::Index>(task / model.k) * kBlock;
    const Eigen::Index len = std::min(kBlock, n - begin);
    Eigen::MatrixXd diff = x.middleCols(begin, len).colwise() - model.means[c];
    factors[c].lower.triangularView<Eigen::Lower>().solveInPlace(diff);
    Eigen::ArrayXd maha = diff.colwise().squaredNorm().transpose().array();
    out.block(begin, static_cast<Eigen::Index>(c), len, 1) =
        (-0.5 * (d * std::log(2.0 * std::numbers::pi) + factors[c].log_det + maha) +
         std::log(model.weights(static_cast<Eigen::Index>(c))))
            .matrix();
  });
  return out;
}

std::vector<Factor> factorize_all(const GmmModel& model) {
  std::vector<Factor> factors;
  factors.reserve(model.k);
  for (std::size_t c = 0; c < model.k; ++c) factors.push_back(factorize(model.covariances[c], c));
  return factors;
}

// M-step from responsibilities (n x k).
void maximize(GmmModel& model, const SampleMatrix& x, const Eigen::MatrixXd& resp, double reg, unsigned threads) {
  const double eps = 10.0 * std::numeric_limits<double>::epsilon();
  Eigen::VectorXd nk = resp.colwise().sum().transpose().array() + eps;
  model.weights = nk / nk.sum();
  model.means.resize(model.k);
  model.covariances.resize(model.k);
  parallel_for(model.k, threads, [&](std::size_t c) {
    const auto ci = static_cast<Eigen::Index>(c);
    model.means[c] = (x * resp.col(ci)) / nk(ci);
    Eigen::MatrixXd centered = x.colwise() - model.means[c];
    Eigen::MatrixXd weighted = centered * resp.col(ci).asDiagonal();
    Eigen::MatrixXd cov = (weighted * centered.transpose()) / nk(ci);
    cov = 0.5 * (cov + cov.transpose());
    cov.diagonal().array() += reg;
    model.covariances[c] = std::move(cov);
  });
}

}  // namespace

Eigen::MatrixXd gmm_log_joint(const GmmModel& model, const SampleMatrix& x, unsigned threads) {
  if (static_cast<std::size_t>(x.rows()) != model.dim) {
    throw ValidationError("sample dimension " + std::to_string(x.rows()) + " does not match model dimension " +
                          std::to_string(model.dim));
  }
  return log_joint(model, factorize_all(model), x, threads);
}

GmmModel gmm_fit(const SampleMatrix& x, const GmmParams& params) {
  const auto n = static_cast<std::size_t>(x.cols());
  if (params.k == 0) throw ValidationError("GMM needs k >= 1");
  if (x.rows() == 0) throw ValidationError("GMM needs samples of dimension >= 1");
  if (n < params.k) {
    throw ValidationError("GMM with k=" + std::to_string(params.k) + " needs at least k samples, got " +
                          std::to_string(n));
  }
  GmmModel model;
  model.k = params.k;
  model.dim = static_cast<std::size_t>(x.rows());

  auto init = kmeans(x, params.k, params.seed);
  Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params.k));
  for (std::size_t j = 0; j < n; ++j) resp(static_cast<Eigen::Index>(j), init.labels[j]) = 1.0;
  maximize(model, x, resp, params.reg, params.threads);

  double previous = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter <= params.max_iter; ++iter) {
    Eigen::MatrixXd joint = log_joint(model, factorize_all(model), x, params.threads);
    Eigen::VectorXd norm = log_sum_exp_rows(joint);
    const double ll = norm.sum() / static_cast<double>(n);
    model.log_likelihood_trace.push_back(ll);
    if (std::abs(ll - previous) < params.tol) {
      model.converged = true;
      break;
    }
    if (iter == params.max_iter) break;
    previous = ll;
    resp = (joint.colwise() - norm).array().exp();
    maximize(model, x, resp, params.reg, params.threads);
  }
  return model;
}

ClusterAssignment gmm_assign(const GmmModel& model, const SampleMatrix& x, unsigned threads) {
  Eigen::MatrixXd joint = gmm_log_joint(model, x, threads);
  Eigen::VectorXd norm = log_sum_exp_rows(joint);
  ClusterAssignment out;
  out.k = model.k;
  out.posteriors = (joint.colwise() - norm).array().exp();
  out.cluster.resize(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    out.cluster[static_cast<std::size_t>(i)] = argmax_lowest(joint.row(i));
  }
  return out;
}

std::string gmm_to_json(const GmmModel& model) {
  nlohmann::json j;
  j["format"] = "udgenre-gmm/1";
  j["k"] = model.k;
  j["dim"] = model.dim;
  j["weights"] = std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
  j["means"] = nlohmann::json::array();
  j["covariances"] = nlohmann::json::array();
  for (std::size_t c = 0; c < model.k; ++c) {
    j["means"].push_back(std::vector<double>(model.means[c].data(), model.means[c].data() + model.means[c].size()));
    const auto& cov = model.covariances[c];
    j["covariances"].push_back(std::vector<double>(cov.data(), cov.data() + cov.size()));
  }
  j["log_likelihood_trace"] = model.log_likelihood_trace;
  j["converged"] = model.converged;
  return j.dump();
}

GmmModel gmm_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("format") != "udgenre-gmm/1") throw ParseError("not a GMM checkpoint");
    GmmModel m;
    m.k = j.at("k").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    const auto d = static_cast<Eigen::Index>(m.dim);
    for (std::size_t c = 0; c < m.k; ++c) {
      auto mean = j.at("means").at(c).get<std::vector<double>>();
      auto cov = j.at("covariances").at(c).get<std::vector<double>>();
      if (mean.size() != m.dim || cov.size() != m.dim * m.dim) throw ParseError("GMM checkpoint: bad shapes");
      m.means.emplace_back(Eigen::Map<Eigen::VectorXd>(mean.data(), d));
      m.covariances.emplace_back(Eigen::Map<Eigen::MatrixXd>(cov.data(), d, d));
    }
    m.log_likelihood_trace = j.at("log_likelihood_trace").get<std::vector<double>>();
    m.converged = j.at("converged").get<bool>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("GMM checkpoint: ") + e.what());
  }
}

}  // namespace udgenre
