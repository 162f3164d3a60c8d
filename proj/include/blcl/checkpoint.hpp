#pragma once

#include <stdexcept>
#include <string>

#include "blcl/backbone.hpp"
#include "blcl/losses.hpp"

namespace blcl::io {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nn::ModelState model;
  loss::LossWeights weights;
  int task_index = 0;
  std::vector<int> classes_per_task;
};

// Versioned key->array container: magic + JSON header describing every named
// parameter (name, shape, offset) followed by one raw float32 blob.
void save_checkpoint(nn::ModelState& model, const loss::LossWeights& weights,
                     int task_index, const std::vector<int>& classes_per_task,
                     const std::string& path);

Checkpoint load_checkpoint(const std::string& path);

}  // namespace blcl::io
