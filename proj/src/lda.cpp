#include "udgenre/lda.hpp"

#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>

#include "json.hpp"
#include "udgenre/error.hpp"
#include "udgenre/parallel.hpp"

namespace udgenre {
namespace {

constexpr double kPhiFloor = 1e-100;

double digamma(double x) { return boost::math::digamma(x); }

Eigen::RowVectorXd dirichlet_expectation(const Eigen::RowVectorXd& v) {
  const double total = digamma(v.sum());
  return v.unaryExpr([](double a) { return digamma(a); }).array() - total;
}

Eigen::MatrixXd dirichlet_expectation_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.row(r) = dirichlet_expectation(m.row(r));
  return out;
}

// Coordinate ascent on one document's (phi, gamma) with the topics fixed.
// On return `theta` holds exp(E[log theta]) for the final gamma and
// `weights[i]` holds count_i / phinorm_i for the document's i-th nonzero, so
// the sufficient statistics come from phi optimal for the final gamma.
void infer_document(const FeatureMatrix& m, std::size_t d, const Eigen::MatrixXd& exp_elog_beta, double alpha,
                    int max_iter, double tol, Eigen::RowVectorXd& gamma, Eigen::RowVectorXd& theta,
                    std::vector<double>& weights) {
  const std::size_t begin = m.row_begin(d);
  const std::size_t nnz = m.row_end(d) - begin;
  const auto k = exp_elog_beta.rows();
  weights.assign(nnz, 0.0);
  theta = dirichlet_expectation(gamma).array().exp();
  if (nnz == 0) {
    gamma.setConstant(alpha);
    theta = dirichlet_expectation(gamma).array().exp();
    return;
  }
  Eigen::MatrixXd beta_d(k, static_cast<Eigen::Index>(nnz));
  Eigen::VectorXd cts(static_cast<Eigen::Index>(nnz));
  for (std::size_t i = 0; i < nnz; ++i) {
    beta_d.col(static_cast<Eigen::Index>(i)) = exp_elog_beta.col(m.col[begin + i]);
    cts(static_cast<Eigen::Index>(i)) = m.count[begin + i];
  }
  Eigen::RowVectorXd phinorm = (theta * beta_d).array() + kPhiFloor;
  for (int it = 0; it < max_iter; ++it) {
    Eigen::RowVectorXd last = gamma;
    Eigen::VectorXd ratio = cts.array() / phinorm.transpose().array();
    gamma = alpha + theta.array() * (beta_d * ratio).transpose().array();
    theta = dirichlet_expectation(gamma).array().exp();
    phinorm = (theta * beta_d).array() + kPhiFloor;
    if ((gamma - last).cwiseAbs().mean() < tol) break;
  }
  for (std::size_t i = 0; i < nnz; ++i) {
    weights[i] = cts(static_cast<Eigen::Index>(i)) / phinorm(static_cast<Eigen::Index>(i));
  }
}

// Evidence lower bound with phi at its optimum for (gamma, lambda).
double elbo(const FeatureMatrix& m, const Eigen::MatrixXd& gamma, const Eigen::MatrixXd& lambda, double alpha,
            double eta, unsigned threads) {
  const auto k = static_cast<double>(lambda.rows());
  const auto vocab = static_cast<double>(lambda.cols());
  const Eigen::MatrixXd elog_beta = dirichlet_expectation_rows(lambda);

  std::vector<double> per_doc(m.rows(), 0.0);
  parallel_for(m.rows(), threads, [&](std::size_t d) {
    const Eigen::RowVectorXd g = gamma.row(static_cast<Eigen::Index>(d));
    const Eigen::RowVectorXd elog_theta = dirichlet_expectation(g);
    double score = 0.0;
    for (std::size_t i = m.row_begin(d); i < m.row_end(d); ++i) {
      Eigen::VectorXd terms = elog_theta.transpose() + elog_beta.col(m.col[i]);
      const double peak = terms.maxCoeff();
      score += m.count[i] * (peak + std::log((terms.array() - peak).exp().sum()));
    }
    score += ((alpha - g.array()) * elog_theta.array()).sum();
    score += g.unaryExpr([](double a) { return std::lgamma(a); }).sum() - std::lgamma(g.sum());
    score += std::lgamma(k * alpha) - k * std::lgamma(alpha);
    per_doc[d] = score;
  });
  double total = 0.0;
  for (double s : per_doc) total += s;

  total += ((eta - lambda.array()) * elog_beta.array()).sum();
  total += lambda.unaryExpr([](double a) { return std::lgamma(a); }).sum();
  for (Eigen::Index r = 0; r < lambda.rows(); ++r) total -= std::lgamma(lambda.row(r).sum());
  total += k * (std::lgamma(vocab * eta) - vocab * std::lgamma(eta));
  return total;
}

}  // namespace

Eigen::MatrixXd LdaModel::topic_word() const {
  Eigen::MatrixXd out = lambda;
  for (Eigen::Index r = 0; r < out.rows(); ++r) out.row(r) /= out.row(r).sum();
  return out;
}

LdaModel lda_fit(const FeatureMatrix& counts, const LdaParams& params) {
  if (params.k == 0) throw ValidationError("LDA needs k >= 1");
  if (counts.cols == 0) throw ValidationError("empty vocabulary");
  if (params.k > counts.cols) {
    throw ValidationError("LDA with k=" + std::to_string(params.k) + " exceeds vocabulary size " +
                          std::to_string(counts.cols));
  }
  if (counts.col.empty()) throw ValidationError("LDA needs at least one nonzero document");

  LdaModel model;
  model.k = params.k;
  model.vocab_size = counts.cols;
  model.alpha = params.alpha.value_or(1.0 / static_cast<double>(params.k));
  model.eta = params.eta.value_or(1.0 / static_cast<double>(params.k));
  if (!(model.alpha > 0.0) || !(model.eta > 0.0)) throw ValidationError("LDA priors must be positive");

  const auto k = static_cast<Eigen::Index>(params.k);
  const auto vocab = static_cast<Eigen::Index>(counts.cols);
  const std::size_t docs = counts.rows();

  std::mt19937_64 rng(params.seed);
  std::gamma_distribution<double> init(100.0, 0.01);
  model.lambda.resize(k, vocab);
  for (Eigen::Index j = 0; j < vocab; ++j) {
    for (Eigen::Index r = 0; r < k; ++r) model.lambda(r, j) = init(rng);
  }
  Eigen::MatrixXd gamma(static_cast<Eigen::Index>(docs), k);
  for (Eigen::Index d = 0; d < gamma.rows(); ++d) {
    for (Eigen::Index r = 0; r < k; ++r) gamma(d, r) = init(rng);
  }

  Eigen::MatrixXd theta(static_cast<Eigen::Index>(docs), k);
  std::vector<std::vector<double>> weights(docs);
  for (int iter = 0; iter < params.max_iter; ++iter) {
    const Eigen::MatrixXd exp_elog_beta = dirichlet_expectation_rows(model.lambda).array().exp();
    parallel_for(docs, params.threads, [&](std::size_t d) {
      const auto di = static_cast<Eigen::Index>(d);
      Eigen::RowVectorXd g = gamma.row(di);
      Eigen::RowVectorXd t;
      infer_document(counts, d, exp_elog_beta, model.alpha, params.max_doc_iter, params.doc_tol, g, t, weights[d]);
      gamma.row(di) = g;
      theta.row(di) = t;
    });

    Eigen::MatrixXd sstats = Eigen::MatrixXd::Zero(k, vocab);
    for (std::size_t d = 0; d < docs; ++d) {
      const std::size_t begin = counts.row_begin(d);
      for (std::size_t i = 0; i < weights[d].size(); ++i) {
        sstats.col(counts.col[begin + i]) += theta.row(static_cast<Eigen::Index>(d)).transpose() * weights[d][i];
      }
    }
    model.lambda = (sstats.array() * exp_elog_beta.array()) + model.eta;

    const double bound = elbo(counts, gamma, model.lambda, model.alpha, model.eta, params.threads);
    const bool stalled = !model.elbo_trace.empty() && params.elbo_rel_tol > 0.0 &&
                         (bound - model.elbo_trace.back()) < params.elbo_rel_tol * std::abs(bound);
    model.elbo_trace.push_back(bound);
    if (stalled) break;
  }
  return model;
}

ClusterAssignment lda_assign(const LdaModel& model, const FeatureMatrix& counts, int max_doc_iter, double doc_tol,
                             unsigned threads) {
  if (counts.cols != model.vocab_size) {
    throw ValidationError("feature matrix has " + std::to_string(counts.cols) + " columns, model vocabulary has " +
                          std::to_string(model.vocab_size));
  }
  const auto k = static_cast<Eigen::Index>(model.k);
  const Eigen::MatrixXd exp_elog_beta = dirichlet_expectation_rows(model.lambda).array().exp();
  ClusterAssignment out;
  out.k = model.k;
  out.cluster.assign(counts.rows(), 0);
  out.posteriors.resize(static_cast<Eigen::Index>(counts.rows()), k);
  std::vector<char> empty(counts.rows(), 0);
  parallel_for(counts.rows(), threads, [&](std::size_t d) {
    const auto di = static_cast<Eigen::Index>(d);
    if (counts.row_begin(d) == counts.row_end(d)) {
      empty[d] = 1;
      out.posteriors.row(di).setConstant(1.0 / static_cast<double>(model.k));
      return;
    }
    Eigen::RowVectorXd g = Eigen::RowVectorXd::Constant(
        k, model.alpha + static_cast<double>(counts.row_total(d)) / static_cast<double>(model.k));
    Eigen::RowVectorXd t;
    std::vector<double> w;
    infer_document(counts, d, exp_elog_beta, model.alpha, max_doc_iter, doc_tol, g, t, w);
    out.posteriors.row(di) = g / g.sum();
    out.cluster[d] = argmax_lowest(out.posteriors.row(di));
  });
  for (std::size_t d = 0; d < empty.size(); ++d) {
    if (empty[d]) out.flagged.push_back(d);
  }
  return out;
}

std::string lda_to_json(const LdaModel& model) {
  nlohmann::json j;
  j["format"] = "udgenre-lda/1";
  j["k"] = model.k;
  j["vocab_size"] = model.vocab_size;
  j["alpha"] = model.alpha;
  j["eta"] = model.eta;
  j["lambda"] = std::vector<double>(model.lambda.data(), model.lambda.data() + model.lambda.size());
  j["elbo_trace"] = model.elbo_trace;
  return j.dump();
}

LdaModel lda_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    if (j.at("format") != "udgenre-lda/1") throw ParseError("not an LDA checkpoint");
    LdaModel m;
    m.k = j.at("k").get<std::size_t>();
    m.vocab_size = j.at("vocab_size").get<std::size_t>();
    m.alpha = j.at("alpha").get<double>();
    m.eta = j.at("eta").get<double>();
    auto lambda = j.at("lambda").get<std::vector<double>>();
    if (lambda.size() != m.k * m.vocab_size) throw ParseError("LDA checkpoint: bad lambda shape");
    m.lambda = Eigen::Map<Eigen::MatrixXd>(lambda.data(), static_cast<Eigen::Index>(m.k),
                                           static_cast<Eigen::Index>(m.vocab_size));
    m.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("LDA checkpoint: ") + e.what());
  }
}

}  // namespace udgenre
