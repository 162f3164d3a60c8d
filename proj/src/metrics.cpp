#include "blcl/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace blcl::metrics {

namespace {

// Groups row indices by label, keyed in ascending label order.
std::map<int, std::vector<int>> group_by_label(const std::vector<int>& labels) {
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    groups[labels[i]].push_back(i);
  return groups;
}

}  // namespace

Confusion confusion_matrix(const std::vector<int>& preds,
                           const std::vector<int>& labels, int num_classes) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("confusion_matrix: size mismatch");
  Confusion m(num_classes, std::vector<long>(num_classes, 0));
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || preds[i] < 0 ||
        preds[i] >= num_classes)
      throw std::out_of_range("confusion_matrix: label or prediction out of range");
    ++m[labels[i]][preds[i]];
  }
  return m;
}

double accuracy(const Confusion& confusion) {
  if (confusion.empty()) throw std::invalid_argument("accuracy: empty matrix");
  long trace = 0, total = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    trace += confusion[i][i];
    for (long v : confusion[i]) total += v;
  }
  if (total == 0) throw std::invalid_argument("accuracy: empty matrix");
  return 100.0 * static_cast<double>(trace) / static_cast<double>(total);
}

double average_accuracy(const std::vector<double>& per_task_acc) {
  if (per_task_acc.empty())
    throw std::invalid_argument("average_accuracy: empty input");
  return std::accumulate(per_task_acc.begin(), per_task_acc.end(), 0.0) /
         static_cast<double>(per_task_acc.size());
}

double f_beta(const Confusion& confusion, double beta) {
  if (beta <= 0.0) throw std::invalid_argument("f_beta: beta must be positive");
  const int k = static_cast<int>(confusion.size());
  const double b2 = beta * beta;
  double sum = 0.0;
  for (int c = 0; c < k; ++c) {
    long tp = confusion[c][c];
    long fn = 0, fp = 0;
    for (int j = 0; j < k; ++j) {
      if (j == c) continue;
      fn += confusion[c][j];
      fp += confusion[j][c];
    }
    const double p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double r = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double denom = b2 * p + r;
    sum += denom > 0.0 ? (1.0 + b2) * p * r / denom : 0.0;
  }
  return sum / k;
}

ClusterScore davies_bouldin(const Eigen::MatrixXd& embeddings,
                            const std::vector<int>& labels) {
  const auto groups = group_by_label(labels);
  const int k = static_cast<int>(groups.size());
  if (k < 2) throw std::invalid_argument("davies_bouldin: needs >= 2 clusters");

  std::vector<Eigen::VectorXd> centroids;
  std::vector<double> dispersion;  // mean distance to centroid
  for (const auto& [label, idx] : groups) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(embeddings.cols());
    for (int i : idx) c += embeddings.row(i);
    c /= static_cast<double>(idx.size());
    double s = 0.0;
    for (int i : idx) s += (embeddings.row(i).transpose() - c).norm();
    centroids.push_back(std::move(c));
    dispersion.push_back(s / static_cast<double>(idx.size()));
  }

  ClusterScore score;
  double total = 0.0;
  double largest_finite = 0.0;
  for (int i = 0; i < k; ++i) {
    double worst = 0.0;
    bool worst_inf = false;
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      const double d = (centroids[i] - centroids[j]).norm();
      if (d == 0.0) {
        worst_inf = true;
        continue;
      }
      const double ratio = (dispersion[i] + dispersion[j]) / d;
      worst = std::max(worst, ratio);
      largest_finite = std::max(largest_finite, ratio);
    }
    if (worst_inf) score.infinite = true;
    total += worst;
  }
  score.largest_finite = largest_finite;
  score.value = score.infinite ? std::numeric_limits<double>::infinity() : total / k;
  return score;
}

ClusterScore calinski_harabasz(const Eigen::MatrixXd& embeddings,
                               const std::vector<int>& labels) {
  const auto groups = group_by_label(labels);
  const int k = static_cast<int>(groups.size());
  const int n = static_cast<int>(embeddings.rows());
  if (k < 2) throw std::invalid_argument("calinski_harabasz: needs >= 2 clusters");
  if (k >= n) {
    // every point its own centroid: W = 0
    ClusterScore score;
    score.infinite = true;
    score.value = std::numeric_limits<double>::infinity();
    return score;
  }

  const Eigen::VectorXd global_mean = embeddings.colwise().mean();
  double between = 0.0, within = 0.0;
  for (const auto& [label, idx] : groups) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(embeddings.cols());
    for (int i : idx) c += embeddings.row(i);
    c /= static_cast<double>(idx.size());
    between += static_cast<double>(idx.size()) * (c - global_mean).squaredNorm();
    for (int i : idx) within += (embeddings.row(i).transpose() - c).squaredNorm();
  }

  ClusterScore score;
  const double num = between / (k - 1);
  const double den = within / (n - k);
  score.largest_finite = num;
  if (den == 0.0) {
    score.infinite = true;
    score.value = std::numeric_limits<double>::infinity();
  } else {
    score.value = num / den;
  }
  return score;
}

std::string to_json(const MetricsReport& report, int indent) {
  nlohmann::json j;
  j["per_task_acc"] = report.per_task_acc;
  j["avg_acc"] = report.avg_acc;
  j["f1"] = report.f1;
  j["f2"] = report.f2;
  j["confusion"] = report.confusion;
  auto cluster = [](const ClusterScore& s) {
    nlohmann::json c;
    c["infinite"] = s.infinite;
    c["largest_finite"] = s.largest_finite;
    if (s.infinite)
      c["value"] = "infinity";
    else
      c["value"] = s.value;
    return c;
  };
  j["db_score"] = cluster(report.db_score);
  j["ch_score"] = cluster(report.ch_score);
  return j.dump(indent);
}

MetricsReport report_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MetricsReport r;
  r.per_task_acc = j.at("per_task_acc").get<std::vector<double>>();
  r.avg_acc = j.at("avg_acc").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.f2 = j.at("f2").get<double>();
  r.confusion = j.at("confusion").get<Confusion>();
  auto cluster = [](const nlohmann::json& c) {
    ClusterScore s;
    s.infinite = c.at("infinite").get<bool>();
    s.largest_finite = c.at("largest_finite").get<double>();
    s.value = s.infinite ? std::numeric_limits<double>::infinity()
                         : c.at("value").get<double>();
    return s;
  };
  r.db_score = cluster(j.at("db_score"));
  r.ch_score = cluster(j.at("ch_score"));
  return r;
}

void write_confusion_csv(const Confusion& confusion, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_confusion_csv: cannot open " + path);
  for (const auto& row : confusion) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
}

}  // namespace blcl::metrics
