#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "blcl/layers.hpp"

namespace blcl::nn {

// Convolution layers retained in a task's final specialized block region.
// The region nominally spans the last two residual blocks (four convs).
struct BlockSpec {
  int conv_layers = 4;
};

// Backbone recipe: generalized stem/blocks plus how specialized branches
// ramp up to the fixed 512-wide embedding.
struct BackbonePreset {
  std::string name;
  int input_hw = 32;
  int in_channels = 3;
  int stem_channels = 16;
  int stem_kernel = 3;
  int stem_stride = 1;
  std::vector<std::pair<int, int>> gen_blocks;  // (out_channels, stride)
  int proj_channels = 0;  // optional trailing 1x1 unit; 0 = none
  int proj_stride = 1;
};

BackbonePreset backbone_preset(const std::string& name);

struct ArchitecturePlan {
  int total_blocks = 8;  // specialized blocks per branch (l)
  std::vector<BlockSpec> per_task;
  int embedding_dim = 512;
  std::string preset = "cifar32";

  int final_region_capacity() const { return std::min(4, 2 * total_blocks); }
};

struct GeneralizedNet {
  std::unique_ptr<ConvUnit> stem;
  std::vector<BasicBlock> blocks;
  std::unique_ptr<ConvUnit> proj;
  int out_channels = 0;

  int conv_layer_count() const;
};

struct SpecializedBranch {
  std::vector<BasicBlock> blocks;
  BlockSpec spec;
  bool frozen = false;
  int out_channels = 0;  // embedding width (equals input width when empty)
};

struct ForwardResult {
  Mat2 logits;
  Mat2 embedding;
};

// The incrementally grown network: shared generalized layers, one specialized
// branch per task trained so far (only the newest participates in the forward
// pass; older ones are kept frozen), and a classifier head over all classes
// seen so far.
class ModelState {
 public:
  ArchitecturePlan plan;
  BackbonePreset preset;
  GeneralizedNet generalized;
  std::vector<SpecializedBranch> branches;
  std::unique_ptr<Linear> head;
  int num_classes = 0;
  std::vector<int> class_order;  // global class id of each head row
  std::uint64_t seed = 0;
  int pool_h = 1, pool_w = 1;  // spatial extent seen by the last pool

  int current_task() const { return static_cast<int>(branches.size()); }

  ModelState clone() const;

  std::vector<ParamRef> params();             // all, with trainable flags
  std::vector<ParamRef> trainable_params();   // optimizer view
};

ModelState build_model(const ArchitecturePlan& plan, int initial_classes,
                       std::uint64_t seed);

// Adds the branch for task t (warm-started from the previous branch where
// shapes match) and widens the head, keeping old-class rows bit-exact.
void expand_for_task(ModelState& model, int task_index, int new_classes,
                     BlockSpec spec);

// Branches 1..t-1 frozen; generalized, branch t and head trainable.
void set_trainable(ModelState& model, int task_index);

// Elementwise mean of the newest specialized branches of the two models,
// matched by parameter name and shape. Generalized and head stay untouched.
ModelState average_specialized_weights(const ModelState& model_t,
                                       const ModelState& model_prev,
                                       bool include_bn_stats = true);

ForwardResult forward(ModelState& model, const Tensor4& batch, bool train);

// Backprop from head gradients plus an extra gradient injected directly at
// the pooled embedding (the contrastive path). Either may be empty.
void backward(ModelState& model, const Mat2& dlogits, const Mat2& dembedding);

void zero_grad(ModelState& model);

std::size_t parameter_count(const ModelState& model);

}  // namespace blcl::nn
