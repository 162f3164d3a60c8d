#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

namespace blcl::memory {

// Fixed-budget exemplar store. per_class lists are kept in herding order so
// later truncation is a stable prefix cut.
struct ExemplarSet {
  std::map<int, std::vector<std::string>> per_class;
  int budget = 2000;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [cls, ids] : per_class) n += ids.size();
    return n;
  }
};

// Greedy herding: repeatedly pick the unselected feature whose inclusion keeps
// the running mean of the selection closest (Euclidean) to the class mean.
// Ties break toward the lowest index. Returns m indices in selection order.
std::vector<int> herding_select(const Eigen::MatrixXd& features, int m);

struct ClassFeatures {
  std::vector<std::string> ids;  // parallel to feature rows
  Eigen::MatrixXd features;      // N x D
};

// Rebalances the store for the class count seen through task t: every class
// keeps floor(budget / k) exemplars; old classes are truncated to the prefix
// of their herding order, new classes are herding-selected from their
// features. Classes with fewer samples than the quota keep everything.
ExemplarSet update_exemplars(int task_index, const ExemplarSet& store,
                             const std::map<int, ClassFeatures>& new_class_features);

// Text manifest, one line per exemplar: class id, sample id, herding rank.
void write_manifest(const ExemplarSet& store, const std::string& path);
ExemplarSet read_manifest(const std::string& path, int budget);

}  // namespace blcl::memory
