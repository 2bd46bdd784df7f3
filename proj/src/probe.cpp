#include "udgenre/probe.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "udgenre/error.hpp"
#include "udgenre/random.hpp"

namespace udgenre {
namespace {

Eigen::VectorXd to_vector(std::span<const float> x) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) v(static_cast<Eigen::Index>(i)) = x[i];
  return v;
}

struct AdamState {
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
  long step = 0;
};

void adamw_step(ProbeModel& model, AdamState& s, const Eigen::MatrixXd& gw, const Eigen::VectorXd& gb,
                const ProbeHyper& h) {
  ++s.step;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(s.step));
  model.weight *= 1.0 - h.lr * h.weight_decay;
  model.bias *= 1.0 - h.lr * h.weight_decay;
  s.m_w = h.beta1 * s.m_w + (1.0 - h.beta1) * gw;
  s.v_w = h.beta2 * s.v_w + (1.0 - h.beta2) * gw.cwiseProduct(gw);
  s.m_b = h.beta1 * s.m_b + (1.0 - h.beta1) * gb;
  s.v_b = h.beta2 * s.v_b + (1.0 - h.beta2) * gb.cwiseProduct(gb);
  model.weight.array() -= h.lr * (s.m_w.array() / c1) / ((s.v_w.array() / c2).sqrt() + h.eps);
  model.bias.array() -= h.lr * (s.m_b.array() / c1) / ((s.v_b.array() / c2).sqrt() + h.eps);
}

}  // namespace

Eigen::VectorXd ProbeModel::logits(std::span<const float> x) const {
  if (x.size() != dim()) {
    throw ValidationError("probe input has " + std::to_string(x.size()) + " dims, expected " + std::to_string(dim()));
  }
  return weight * to_vector(x) + bias;
}

Eigen::VectorXd ProbeModel::predict(std::span<const float> x) const { return softmax(logits(x)); }

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

ProbeModel probe_init(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ValidationError("probe dimension must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::mt19937_64 rng(seed);
  auto draw = [&] { return (2.0 * uniform_unit(rng) - 1.0) * bound; };
  ProbeModel m;
  m.weight.resize(kGenreCount, static_cast<Eigen::Index>(dim));
  for (Eigen::Index r = 0; r < m.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.weight.cols(); ++c) m.weight(r, c) = draw();
  }
  m.bias.resize(kGenreCount);
  for (Eigen::Index r = 0; r < m.bias.size(); ++r) m.bias(r) = draw();
  return m;
}

double probe_loss(const ProbeModel& model, std::span<const ProbeExample> examples, Eigen::MatrixXd* grad_weight,
                  Eigen::VectorXd* grad_bias) {
  if (examples.empty()) return 0.0;
  if (grad_weight) grad_weight->setZero(model.weight.rows(), model.weight.cols());
  if (grad_bias) grad_bias->setZero(model.bias.size());
  double loss = 0.0;
  for (const auto& ex : examples) {
    Eigen::VectorXd x = to_vector(ex.x);
    Eigen::VectorXd z = model.weight * x + model.bias;
    const double peak = z.maxCoeff();
    const double lse = peak + std::log((z.array() - peak).exp().sum());
    const auto t = static_cast<Eigen::Index>(genre_index(ex.target));
    loss += lse - z(t);
    if (grad_weight || grad_bias) {
      Eigen::VectorXd delta = (z.array() - lse).exp();
      delta(t) -= 1.0;
      if (grad_weight) grad_weight->noalias() += delta * x.transpose();
      if (grad_bias) *grad_bias += delta;
    }
  }
  const double n = static_cast<double>(examples.size());
  if (grad_weight) *grad_weight /= n;
  if (grad_bias) *grad_bias /= n;
  return loss / n;
}

ProbeTraining train_probe(std::span<const ProbeExample> train, std::span<const ProbeExample> heldout,
                          std::size_t dim, const ProbeHyper& hyper) {
  if (train.empty()) throw ValidationError("probe training needs at least one example");
  if (hyper.batch == 0) throw ValidationError("probe batch size must be positive");
  ProbeTraining out;
  out.model = probe_init(dim, hyper.seed);

  std::set<GenreLabel> targets;
  for (const auto& ex : train) targets.insert(ex.target);
  if (targets.size() == 1) {
    out.warnings.push_back("degenerate training data: every example has label " +
                           std::string(genre_name(*targets.begin())));
  }
  std::span<const ProbeExample> monitor = heldout;
  if (heldout.empty()) {
    monitor = train;
    out.warnings.push_back("no heldout examples; early stopping monitors the training loss");
  }

  ProbeModel current = out.model;
  AdamState state{Eigen::MatrixXd::Zero(current.weight.rows(), current.weight.cols()),
                  Eigen::MatrixXd::Zero(current.weight.rows(), current.weight.cols()),
                  Eigen::VectorXd::Zero(current.bias.size()), Eigen::VectorXd::Zero(current.bias.size()), 0};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(hyper.seed ^ 0x5eedULL);

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  std::vector<ProbeExample> batch;
  Eigen::MatrixXd gw;
  Eigen::VectorXd gb;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_below(rng, i)]);
    for (std::size_t start = 0; start < order.size(); start += hyper.batch) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + hyper.batch); ++i) batch.push_back(train[order[i]]);
      probe_loss(current, batch, &gw, &gb);
      adamw_step(current, state, gw, gb, hyper);
    }
    const double loss = probe_loss(current, monitor);
    out.model.heldout_trace.push_back(loss);
    if (loss < best) {
      best = loss;
      stale = 0;
      auto trace = std::move(out.model.heldout_trace);
      out.model = current;
      out.model.heldout_trace = std::move(trace);
      out.model.best_epoch = epoch;
    } else if (++stale >= hyper.patience) {
      break;
    }
  }
  return out;
}

}  // namespace udgenre
