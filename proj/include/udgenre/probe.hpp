#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "udgenre/genre.hpp"

namespace udgenre {

struct ProbeHyper {
  double lr = 1e-3;
  std::size_t batch = 16;
  int max_epochs = 30;
  int patience = 3;
  std::uint64_t seed = 41;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ProbeExample {
  std::span<const float> x;
  GenreLabel target = GenreLabel::news;
};

// Linear layer followed by softmax over the 18 genres. `weight` is stored
// 18 x d so that logits = weight * x + bias.
struct ProbeModel {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  std::vector<double> heldout_trace;  // mean cross-entropy after each epoch
  int best_epoch = 0;                 // 0 means the initialization

  std::size_t dim() const { return static_cast<std::size_t>(weight.cols()); }
  Eigen::VectorXd logits(std::span<const float> x) const;
  Eigen::VectorXd predict(std::span<const float> x) const;  // 18-simplex
};

// Uniform(-1/sqrt(d), 1/sqrt(d)) weights and bias, seeded.
ProbeModel probe_init(std::size_t dim, std::uint64_t seed);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

// Mean cross-entropy over the examples; fills the gradient when requested.
double probe_loss(const ProbeModel& model, std::span<const ProbeExample> examples,
                  Eigen::MatrixXd* grad_weight = nullptr, Eigen::VectorXd* grad_bias = nullptr);

struct ProbeTraining {
  ProbeModel model;
  std::vector<std::string> warnings;
};

// Mini-batch AdamW with decoupled weight decay. After every epoch the
// heldout loss is recorded; training stops after `patience` epochs without
// improvement and the best-heldout parameters are returned. An empty
// heldout set falls back to the training loss (with a warning).
ProbeTraining train_probe(std::span<const ProbeExample> train, std::span<const ProbeExample> heldout,
                          std::size_t dim, const ProbeHyper& hyper);

}  // namespace udgenre
