#include "blcl/adapt.hpp"

#include <stdexcept>

#include "blcl/dataset.hpp"

namespace blcl::adapt {

std::map<int, Eigen::VectorXd> class_prototypes(
    nn::ModelState& model,
    const std::map<int, std::vector<const data::LabeledImage*>>& samples_by_class,
    int batch_size) {
  std::map<int, Eigen::VectorXd> protos;
  for (const auto& [cls, samples] : samples_by_class) {
    if (samples.empty())
      throw std::invalid_argument("class_prototypes: empty class " +
                                  std::to_string(cls));
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.plan.embedding_dim);
    std::size_t done = 0;
    while (done < samples.size()) {
      const std::size_t end = std::min(done + batch_size, samples.size());
      std::vector<const data::LabeledImage*> chunk(samples.begin() + done,
                                                   samples.begin() + end);
      auto out = nn::forward(model, data::make_batch_tensor(chunk), false);
      for (int r = 0; r < out.embedding.rows; ++r)
        for (int c = 0; c < out.embedding.cols; ++c)
          sum(c) += out.embedding.at(r, c);
      done = end;
    }
    protos[cls] = sum / static_cast<double>(samples.size());
  }
  return protos;
}

SimilarityReport class_similarity(
    const std::map<int, Eigen::VectorXd>& new_protos,
    const std::map<int, Eigen::VectorXd>& old_protos) {
  if (new_protos.empty() || old_protos.empty())
    throw std::invalid_argument("class_similarity: empty prototype map");
  SimilarityReport report;
  double sum = 0.0;
  for (const auto& [cls, proto] : new_protos) {
    const double norm = proto.norm();
    if (norm == 0.0)
      throw std::invalid_argument("class_similarity: zero-norm prototype");
    double best = -1.0;
    for (const auto& [old_cls, old_proto] : old_protos) {
      const double old_norm = old_proto.norm();
      if (old_norm == 0.0)
        throw std::invalid_argument("class_similarity: zero-norm prototype");
      best = std::max(best, proto.dot(old_proto) / (norm * old_norm));
    }
    report.per_new_class[cls] = best;
    sum += best;
  }
  report.aggregate = sum / static_cast<double>(new_protos.size());
  return report;
}

nn::BlockSpec decide_block_spec(const SimilarityReport& report, double tau,
                                const SpecProbe& probe, int max_conv_layers,
                                double decline_tolerance) {
  if (tau <= -1.0 || tau > 1.0)
    throw std::invalid_argument("decide_block_spec: tau must be in (-1, 1]");
  if (report.aggregate <= tau) return {max_conv_layers};

  if (!probe) return {std::max(0, max_conv_layers - 1)};

  // remove convolutions one at a time until the probed accuracy declines
  double best_acc = probe(max_conv_layers);
  int best_spec = max_conv_layers;
  for (int candidate = max_conv_layers - 1; candidate >= 0; --candidate) {
    const double acc = probe(candidate);
    if (acc < best_acc - decline_tolerance) break;
    best_acc = std::max(best_acc, acc);
    best_spec = candidate;
  }
  return {best_spec};
}

}  // namespace blcl::adapt
