#include "blcl/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace blcl::loss {

namespace {

constexpr double kNormFloor = 1e-300;

void check_nonzero(double norm, const char* what) {
  if (norm <= kNormFloor)
    throw std::invalid_argument(std::string(what) + ": zero-norm vector");
}

}  // namespace

double cosine_distance(const Eigen::VectorXd& x1, const Eigen::VectorXd& x2) {
  const double n1 = x1.norm();
  const double n2 = x2.norm();
  check_nonzero(n1, "cosine_distance");
  check_nonzero(n2, "cosine_distance");
  return 1.0 - x1.dot(x2) / (n1 * n2);
}

PairBatch form_pairs(const std::vector<int>& labels) {
  const int bs = static_cast<int>(labels.size());
  PairBatch out;
  const std::size_t count = static_cast<std::size_t>(bs) * (bs + 1) / 2;
  out.anchor_idx.reserve(count);
  out.other_idx.reserve(count);
  out.is_positive.reserve(count);
  for (int i = 0; i < bs; ++i) {
    for (int j = i; j < bs; ++j) {
      out.anchor_idx.push_back(i);
      out.other_idx.push_back(j);
      out.is_positive.push_back(labels[i] == labels[j] ? 1 : 0);
    }
  }
  return out;
}

double contrastive_loss(const Eigen::MatrixXd& embeddings, const PairBatch& pairs,
                        double margin, bool squared_hinge) {
  if (pairs.size() == 0)
    throw std::invalid_argument("contrastive_loss: empty pair batch");
  double sum = 0.0;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const Eigen::VectorXd a = embeddings.row(pairs.anchor_idx[p]);
    const Eigen::VectorXd b = embeddings.row(pairs.other_idx[p]);
    const double cd = cosine_distance(a, b);
    if (pairs.is_positive[p]) {
      sum += cd;
    } else {
      const double hinge = std::max(0.0, margin - cd);
      sum += squared_hinge ? hinge * hinge : hinge;
    }
  }
  return sum / static_cast<double>(pairs.size());
}

Eigen::MatrixXd contrastive_loss_grad(const Eigen::MatrixXd& embeddings,
                                      const PairBatch& pairs, double margin,
                                      bool squared_hinge) {
  if (pairs.size() == 0)
    throw std::invalid_argument("contrastive_loss_grad: empty pair batch");
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
  const double inv_count = 1.0 / static_cast<double>(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const int ia = pairs.anchor_idx[p];
    const int ib = pairs.other_idx[p];
    const Eigen::VectorXd a = embeddings.row(ia);
    const Eigen::VectorXd b = embeddings.row(ib);
    const double na = a.norm();
    const double nb = b.norm();
    check_nonzero(na, "contrastive_loss_grad");
    check_nonzero(nb, "contrastive_loss_grad");
    const double dot = a.dot(b);
    const double cd = 1.0 - dot / (na * nb);

    // d(CD)/da = -(b / (|a||b|) - dot * a / (|a|^3 |b|)); symmetric for b.
    double coeff;  // multiplies d(CD)/d(x) in the chain
    if (pairs.is_positive[p]) {
      coeff = inv_count;
    } else {
      const double hinge = margin - cd;
      if (hinge <= 0.0) continue;
      coeff = squared_hinge ? -2.0 * hinge * inv_count : -inv_count;
    }
    const Eigen::VectorXd dcd_da = -(b / (na * nb) - dot * a / (na * na * na * nb));
    const Eigen::VectorXd dcd_db = -(a / (na * nb) - dot * b / (nb * nb * nb * na));
    grad.row(ia) += coeff * dcd_da.transpose();
    grad.row(ib) += coeff * dcd_db.transpose();
  }
  return grad;
}

double cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
  const int rows = static_cast<int>(logits.rows());
  const int k = static_cast<int>(logits.cols());
  if (k < 2) throw std::invalid_argument("cross_entropy: needs at least 2 classes");
  if (rows != static_cast<int>(labels.size()))
    throw std::invalid_argument("cross_entropy: batch/label size mismatch");
  double sum = 0.0;
  for (int r = 0; r < rows; ++r) {
    if (labels[r] < 0 || labels[r] >= k)
      throw std::out_of_range("cross_entropy: label out of range");
    const double m = logits.row(r).maxCoeff();
    double lse = 0.0;
    for (int c = 0; c < k; ++c) lse += std::exp(logits(r, c) - m);
    lse = m + std::log(lse);
    sum += lse - logits(r, labels[r]);
  }
  return sum / rows;
}

Eigen::MatrixXd cross_entropy_grad(const Eigen::MatrixXd& logits,
                                   const std::vector<int>& labels) {
  const int rows = static_cast<int>(logits.rows());
  const int k = static_cast<int>(logits.cols());
  if (k < 2) throw std::invalid_argument("cross_entropy_grad: needs at least 2 classes");
  Eigen::MatrixXd grad(rows, k);
  for (int r = 0; r < rows; ++r) {
    const double m = logits.row(r).maxCoeff();
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits(r, c) - m);
    for (int c = 0; c < k; ++c) grad(r, c) = std::exp(logits(r, c) - m) / z;
    grad(r, labels[r]) -= 1.0;
  }
  grad /= static_cast<double>(rows);
  return grad;
}

double bayesian_total_loss(double l_ce, double l_cl, const LossWeights& weights) {
  if (!std::isfinite(l_ce) || !std::isfinite(l_cl))
    throw std::invalid_argument("bayesian_total_loss: non-finite loss input");
  const double s1 = weights.sigma1();
  const double s2 = weights.sigma2();
  return l_ce / (2.0 * s1 * s1) + l_cl / (2.0 * s2 * s2) + weights.log_sigma1 +
         weights.log_sigma2;
}

BayesianGrads bayesian_total_grads(double l_ce, double l_cl,
                                   const LossWeights& weights) {
  const double s1 = weights.sigma1();
  const double s2 = weights.sigma2();
  BayesianGrads g;
  // d/d(log sigma) = sigma * d/d(sigma); d/d(sigma) = -l/sigma^3 + 1/sigma.
  g.d_log_sigma1 = 1.0 - l_ce / (s1 * s1);
  g.d_log_sigma2 = 1.0 - l_cl / (s2 * s2);
  g.d_l_ce = 1.0 / (2.0 * s1 * s1);
  g.d_l_cl = 1.0 / (2.0 * s2 * s2);
  return g;
}

double optimal_sigma(double l) {
  if (l <= 0.0) throw std::invalid_argument("optimal_sigma: loss must be positive");
  return std::sqrt(l);
}

}  // namespace blcl::loss
