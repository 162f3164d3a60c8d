#pragma once

#include <Eigen/Dense>
#include <vector>

namespace blcl::loss {

// All unordered index pairs (i, j) with i <= j over one batch, including the
// self-pairs, so |pairs| = bs(bs+1)/2. is_positive marks label equality.
struct PairBatch {
  std::vector<int> anchor_idx;
  std::vector<int> other_idx;
  std::vector<char> is_positive;

  std::size_t size() const { return anchor_idx.size(); }
};

// Trainable noise scales of the weighted objective, stored in log space so
// sigma stays positive. log sigma = 0 gives the initial sigma = 1.
struct LossWeights {
  double log_sigma1 = 0.0;
  double log_sigma2 = 0.0;

  double sigma1() const { return std::exp(log_sigma1); }
  double sigma2() const { return std::exp(log_sigma2); }
};

struct BayesianGrads {
  double d_log_sigma1 = 0.0;
  double d_log_sigma2 = 0.0;
  double d_l_ce = 0.0;
  double d_l_cl = 0.0;
};

// CD(x1, x2) = 1 - x1.x2 / (|x1| |x2|), in [0, 2]. Throws on a zero vector.
double cosine_distance(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2);

PairBatch form_pairs(const std::vector<int>& labels);

// Pairwise contrastive loss: positive pairs contribute their cosine distance,
// negative pairs the (optionally squared) hinge max(0, margin - CD). Mean over
// all pairs in the batch.
double contrastive_loss(const Eigen::MatrixXd& embeddings, const PairBatch& pairs,
                        double margin = 1.0, bool squared_hinge = false);

// d(loss)/d(embeddings), same shape as embeddings.
Eigen::MatrixXd contrastive_loss_grad(const Eigen::MatrixXd& embeddings,
                                      const PairBatch& pairs, double margin = 1.0,
                                      bool squared_hinge = false);

// Mean negative log softmax probability of the true class. Throws if the
// logit matrix has fewer than two columns or a label is out of range.
double cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels);

Eigen::MatrixXd cross_entropy_grad(const Eigen::MatrixXd& logits,
                                   const std::vector<int>& labels);

// total = l_ce / (2 sigma1^2) + l_cl / (2 sigma2^2) + log sigma1 + log sigma2
double bayesian_total_loss(double l_ce, double l_cl, const LossWeights& weights);

BayesianGrads bayesian_total_grads(double l_ce, double l_cl,
                                   const LossWeights& weights);

// Stationary sigma of l/(2 sigma^2) + log sigma for a fixed loss l, i.e.
// sqrt(l). Diagnostic for sigma trajectories.
double optimal_sigma(double l);

}  // namespace blcl::loss
