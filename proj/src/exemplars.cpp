#include "blcl/exemplars.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace blcl::memory {

std::vector<int> herding_select(const Eigen::MatrixXd& features, int m) {
  const int n = static_cast<int>(features.rows());
  if (m < 1 || m > n)
    throw std::invalid_argument("herding_select: m out of range");

  const Eigen::VectorXd class_mean = features.colwise().mean();
  Eigen::VectorXd selected_sum = Eigen::VectorXd::Zero(features.cols());
  std::vector<char> taken(n, 0);
  std::vector<int> order;
  order.reserve(m);

  for (int step = 1; step <= m; ++step) {
    int best = -1;
    double best_dist = 0.0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double dist =
          (class_mean - (selected_sum + features.row(i).transpose()) / step).norm();
      if (best < 0 || dist < best_dist) {
        best = i;
        best_dist = dist;
      }
    }
    if (best < 0) throw std::logic_error("herding_select: no candidate left");
    taken[best] = 1;
    selected_sum += features.row(best);
    order.push_back(best);
  }
  return order;
}

ExemplarSet update_exemplars(int task_index, const ExemplarSet& store,
                             const std::map<int, ClassFeatures>& new_class_features) {
  (void)task_index;
  std::size_t k = store.per_class.size();
  for (const auto& [cls, feats] : new_class_features)
    if (!store.per_class.count(cls)) ++k;
  if (k == 0) throw std::invalid_argument("update_exemplars: no classes");

  const std::size_t quota = static_cast<std::size_t>(store.budget) / k;

  ExemplarSet out;
  out.budget = store.budget;
  for (const auto& [cls, ids] : store.per_class) {
    // stable prefix cut of the existing herding order
    const std::size_t keep = std::min(quota, ids.size());
    out.per_class[cls] = std::vector<std::string>(ids.begin(), ids.begin() + keep);
  }
  for (const auto& [cls, cf] : new_class_features) {
    if (out.per_class.count(cls)) continue;  // reappearing class: keep old prefix
    if (cf.ids.size() != static_cast<std::size_t>(cf.features.rows()))
      throw std::invalid_argument("update_exemplars: ids/features mismatch");
    const int m = static_cast<int>(std::min(quota, cf.ids.size()));
    if (m == 0) {
      out.per_class[cls] = {};
      continue;
    }
    std::vector<std::string> chosen;
    chosen.reserve(m);
    for (int idx : herding_select(cf.features, m)) chosen.push_back(cf.ids[idx]);
    out.per_class[cls] = std::move(chosen);
  }
  return out;
}

void write_manifest(const ExemplarSet& store, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << "# class_id\tsample_id\therding_rank\n";
  for (const auto& [cls, ids] : store.per_class)
    for (std::size_t rank = 0; rank < ids.size(); ++rank)
      out << cls << '\t' << ids[rank] << '\t' << rank << '\n';
}

ExemplarSet read_manifest(const std::string& path, int budget) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  ExemplarSet store;
  store.budget = budget;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    int cls, rank;
    std::string id;
    if (!(ss >> cls >> id >> rank))
      throw std::runtime_error("read_manifest: malformed line: " + line);
    auto& ids = store.per_class[cls];
    if (static_cast<int>(ids.size()) != rank)
      throw std::runtime_error("read_manifest: ranks out of order");
    ids.push_back(id);
  }
  return store;
}

}  // namespace blcl::memory
