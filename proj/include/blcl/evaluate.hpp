#pragma once

#include <Eigen/Dense>
#include <ostream>
#include <vector>

#include "blcl/backbone.hpp"
#include "blcl/dataset.hpp"

namespace blcl::metrics {

struct InferenceOutputs {
  std::vector<int> pred_rows;  // argmax head row per sample
  Eigen::MatrixXd embeddings;  // N x 512
};

InferenceOutputs run_inference(nn::ModelState& model,
                               const std::vector<const data::LabeledImage*>& samples,
                               int batch_size);

// CSV rows: sample id, label, then the embedding values (exact float
// round-trip precision).
void export_embeddings(nn::ModelState& model,
                       const std::vector<const data::LabeledImage*>& samples,
                       std::ostream& out, int batch_size = 64);

}  // namespace blcl::metrics
