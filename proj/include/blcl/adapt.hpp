#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <vector>

#include "blcl/backbone.hpp"
#include "blcl/image.hpp"

namespace blcl::adapt {

struct SimilarityReport {
  std::map<int, double> per_new_class;  // max cosine similarity vs old protos
  double aggregate = 0.0;               // mean of per_new_class
};

// Mean inference-mode embedding per class.
std::map<int, Eigen::VectorXd> class_prototypes(
    nn::ModelState& model,
    const std::map<int, std::vector<const data::LabeledImage*>>& samples_by_class,
    int batch_size = 64);

SimilarityReport class_similarity(
    const std::map<int, Eigen::VectorXd>& new_protos,
    const std::map<int, Eigen::VectorXd>& old_protos);

// Accuracy probe for candidate specs; higher is better, units are accuracy
// points. Candidates are evaluated from the largest spec downward.
using SpecProbe = std::function<double(int conv_layers)>;

// Similarity gate plus layer reduction. Above the threshold the final region
// shrinks: with a probe, convolutions are removed one at a time until the
// probed accuracy declines (> decline_tolerance points below the best seen),
// returning the smallest non-declining spec; without a probe the region
// shrinks by exactly one layer. At or below the threshold the full region is
// kept.
nn::BlockSpec decide_block_spec(const SimilarityReport& report, double tau,
                                const SpecProbe& probe = nullptr,
                                int max_conv_layers = 4,
                                double decline_tolerance = 0.2);

}  // namespace blcl::adapt
