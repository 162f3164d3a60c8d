#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace blcl::metrics {

using Confusion = std::vector<std::vector<long>>;

// Cluster-validity score with an explicit infinity flag; infinite cases keep
// the largest finite pairwise value alongside instead of being clamped.
struct ClusterScore {
  double value = 0.0;
  bool infinite = false;
  double largest_finite = 0.0;

  double reported() const { return value; }
};

struct MetricsReport {
  std::vector<double> per_task_acc;  // percent, one entry per completed task
  double avg_acc = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  Confusion confusion;
  ClusterScore db_score;
  ClusterScore ch_score;
};

// entry (i, j) = count of true class i predicted as j. Throws on out-of-range.
Confusion confusion_matrix(const std::vector<int>& preds,
                           const std::vector<int>& labels, int num_classes);

// 100 * trace / total
double accuracy(const Confusion& confusion);

double average_accuracy(const std::vector<double>& per_task_acc);

// Macro-averaged F_beta; classes with zero precision and recall contribute 0.
double f_beta(const Confusion& confusion, double beta);

// Davies-Bouldin index on Euclidean distances: mean over clusters of the
// worst-case (s_i + s_j) / d_ij, s = mean distance to centroid. Lower is
// better; coincident centroids flag the score as infinite.
ClusterScore davies_bouldin(const Eigen::MatrixXd& embeddings,
                            const std::vector<int>& labels);

// Calinski-Harabasz variance-ratio criterion [B/(k-1)] / [W/(N-k)]. Higher is
// better; zero within-cluster dispersion flags infinity.
ClusterScore calinski_harabasz(const Eigen::MatrixXd& embeddings,
                               const std::vector<int>& labels);

std::string to_json(const MetricsReport& report, int indent = 2);
MetricsReport report_from_json(const std::string& text);

void write_confusion_csv(const Confusion& confusion, const std::string& path);

}  // namespace blcl::metrics
