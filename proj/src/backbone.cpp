#include "blcl/backbone.hpp"

#include <algorithm>
#include <stdexcept>

namespace blcl::nn {

namespace {

constexpr int kEmbeddingDim = 512;

int generalized_output_spatial(const BackbonePreset& p) {
  int s = p.input_hw / p.stem_stride;
  for (const auto& [ch, stride] : p.gen_blocks) s /= stride;
  if (p.proj_channels > 0) s /= p.proj_stride;
  return std::max(1, s);
}

// Builds the block ladder for one task's branch: l-2 riser blocks doubling the
// width up to 512, then the reducible final region (up to two 512-wide blocks)
// cut down to spec.conv_layers convolutions.
SpecializedBranch make_branch(const ArchitecturePlan& plan,
                              const BackbonePreset& preset, int gen_out_ch,
                              BlockSpec spec) {
  const int l = plan.total_blocks;
  if (l < 1) throw std::invalid_argument("make_branch: total_blocks must be >= 1");
  const int capacity = plan.final_region_capacity();
  if (spec.conv_layers < 0 || spec.conv_layers > capacity)
    throw std::invalid_argument("make_branch: block spec exceeds the final region's layer count");

  SpecializedBranch branch;
  branch.spec = spec;
  int in_ch = gen_out_ch;
  int spatial = generalized_output_spatial(preset);

  const int riser_count = std::max(0, l - 2);
  if (riser_count == 0 && in_ch != kEmbeddingDim)
    throw std::invalid_argument(
        "make_branch: plans with total_blocks <= 2 need a generalized output "
        "width of 512 (choose a preset with a 512-wide projection)");

  for (int i = 1; i <= riser_count; ++i) {
    const int out_ch =
        i == riser_count ? kEmbeddingDim : std::min(kEmbeddingDim, gen_out_ch << i);
    const int stride = (out_ch > in_ch && spatial >= 2) ? 2 : 1;
    branch.blocks.emplace_back(in_ch, out_ch, stride, 2);
    in_ch = out_ch;
    spatial = std::max(1, spatial / stride);
  }

  const int r = spec.conv_layers;
  if (r > 0) {
    const int region_stride = spatial >= 2 ? 2 : 1;
    branch.blocks.emplace_back(in_ch, kEmbeddingDim, region_stride,
                               std::min(2, r));
    if (r > 2)
      branch.blocks.emplace_back(kEmbeddingDim, kEmbeddingDim, 1, r - 2);
  }
  branch.out_channels = branch.blocks.empty() ? in_ch : kEmbeddingDim;
  return branch;
}

void init_branch(SpecializedBranch& branch, Rng& rng) {
  for (auto& b : branch.blocks) b.init(rng);
}

std::string branch_block_name(const SpecializedBranch& branch, int idx, int l) {
  const int riser_count = std::max(0, l - 2);
  if (idx < riser_count) return "b" + std::to_string(idx + 1);
  return "r" + std::to_string(idx - riser_count + 1);
}

void collect_branch(SpecializedBranch& branch, const std::string& prefix, int l,
                    std::vector<ParamRef>& out) {
  for (int i = 0; i < static_cast<int>(branch.blocks.size()); ++i)
    branch.blocks[i].collect(prefix + "." + branch_block_name(branch, i, l),
                             !branch.frozen, out);
}

}  // namespace

BackbonePreset backbone_preset(const std::string& name) {
  BackbonePreset p;
  p.name = name;
  if (name == "cifar32") {
    // 13 generalized convs at classic 32x32 widths: stem + six 2-conv blocks
    p.input_hw = 32;
    p.stem_channels = 16;
    p.stem_kernel = 3;
    p.stem_stride = 1;
    p.gen_blocks = {{16, 1}, {16, 1}, {16, 1}, {32, 2}, {32, 1}, {32, 1}};
    p.proj_channels = 0;
  } else if (name == "imagenet18") {
    // 13 generalized convs plus the two 512-wide blocks as additional layers
    p.input_hw = 224;
    p.stem_channels = 64;
    p.stem_kernel = 7;
    p.stem_stride = 2;
    p.gen_blocks = {{64, 2},  {64, 1},  {128, 2}, {128, 1},
                    {256, 2}, {256, 1}, {512, 2}, {512, 1}};
    p.proj_channels = 0;
  } else if (name == "desk") {
    // small CPU-friendly stem ending in a 512-wide 1x1 projection
    p.input_hw = 32;
    p.stem_channels = 16;
    p.stem_kernel = 3;
    p.stem_stride = 2;
    p.gen_blocks = {{32, 2}, {64, 2}, {128, 2}};
    p.proj_channels = 512;
    p.proj_stride = 1;
  } else {
    throw std::invalid_argument("unknown backbone preset: " + name);
  }
  return p;
}

int GeneralizedNet::conv_layer_count() const {
  int n = stem ? 1 : 0;
  for (const auto& b : blocks) n += b.conv_count;
  if (proj) ++n;
  return n;
}

ModelState ModelState::clone() const {
  ModelState out;
  out.plan = plan;
  out.preset = preset;
  out.num_classes = num_classes;
  out.class_order = class_order;
  out.seed = seed;
  out.generalized.out_channels = generalized.out_channels;
  if (generalized.stem)
    out.generalized.stem = std::make_unique<ConvUnit>(*generalized.stem);
  out.generalized.blocks = generalized.blocks;
  if (generalized.proj)
    out.generalized.proj = std::make_unique<ConvUnit>(*generalized.proj);
  out.branches = branches;
  if (head) out.head = std::make_unique<Linear>(*head);
  return out;
}

std::vector<ParamRef> ModelState::params() {
  std::vector<ParamRef> out;
  if (generalized.stem) generalized.stem->collect("gen.stem", true, out);
  for (int i = 0; i < static_cast<int>(generalized.blocks.size()); ++i)
    generalized.blocks[i].collect("gen.b" + std::to_string(i + 1), true, out);
  if (generalized.proj) generalized.proj->collect("gen.proj", true, out);
  for (int t = 0; t < static_cast<int>(branches.size()); ++t)
    collect_branch(branches[t], "spec" + std::to_string(t + 1),
                   plan.total_blocks, out);
  if (head) head->collect("head", true, out);
  return out;
}

std::vector<ParamRef> ModelState::trainable_params() {
  std::vector<ParamRef> all = params();
  std::vector<ParamRef> out;
  for (auto& p : all)
    if (p.trainable && !p.is_buffer) out.push_back(p);
  return out;
}

ModelState build_model(const ArchitecturePlan& plan, int initial_classes,
                       std::uint64_t seed) {
  if (initial_classes < 2)
    throw std::invalid_argument("build_model: need at least 2 initial classes");
  if (plan.per_task.empty())
    throw std::invalid_argument("build_model: plan has no per-task specs");
  if (plan.embedding_dim != kEmbeddingDim)
    throw std::invalid_argument("build_model: embedding_dim must be 512");

  ModelState m;
  m.plan = plan;
  m.preset = backbone_preset(plan.preset);
  m.seed = seed;
  m.num_classes = initial_classes;

  Rng rng(seed);
  const auto& p = m.preset;
  m.generalized.stem = std::make_unique<ConvUnit>(
      p.in_channels, p.stem_channels, p.stem_kernel, p.stem_stride,
      p.stem_kernel / 2);
  m.generalized.stem->init(rng);
  int ch = p.stem_channels;
  for (const auto& [out_ch, stride] : p.gen_blocks) {
    m.generalized.blocks.emplace_back(ch, out_ch, stride, 2);
    m.generalized.blocks.back().init(rng);
    ch = out_ch;
  }
  if (p.proj_channels > 0) {
    m.generalized.proj =
        std::make_unique<ConvUnit>(ch, p.proj_channels, 1, p.proj_stride, 0);
    m.generalized.proj->init(rng);
    ch = p.proj_channels;
  }
  m.generalized.out_channels = ch;

  SpecializedBranch branch = make_branch(plan, p, ch, plan.per_task.front());
  init_branch(branch, rng);
  m.branches.push_back(std::move(branch));

  m.head = std::make_unique<Linear>(kEmbeddingDim, initial_classes);
  m.head->init(rng);
  return m;
}

void expand_for_task(ModelState& model, int task_index, int new_classes,
                     BlockSpec spec) {
  if (task_index < 2)
    throw std::invalid_argument("expand_for_task: task_index must be >= 2");
  if (new_classes < 1)
    throw std::invalid_argument("expand_for_task: need at least one new class");
  if (task_index != model.current_task() + 1)
    throw std::invalid_argument("expand_for_task: tasks must be added in order");

  Rng rng = Rng(model.seed).child(0x45585041ULL + static_cast<std::uint64_t>(task_index));

  SpecializedBranch branch = make_branch(model.plan, model.preset,
                                         model.generalized.out_channels, spec);
  init_branch(branch, rng);

  // warm start: copy parameters from the previous branch wherever the block
  // names and shapes line up; anything new keeps its fresh init
  std::vector<ParamRef> fresh, prev;
  collect_branch(branch, "spec", model.plan.total_blocks, fresh);
  collect_branch(model.branches.back(), "spec", model.plan.total_blocks, prev);
  for (auto& f : fresh) {
    for (const auto& q : prev) {
      if (q.name == f.name && q.value->size() == f.value->size()) {
        *f.value = *q.value;
        break;
      }
    }
  }
  model.branches.push_back(std::move(branch));

  const int total_classes = model.num_classes + new_classes;
  auto widened = std::make_unique<Linear>(kEmbeddingDim, total_classes);
  widened->init(rng);
  std::copy(model.head->w.begin(), model.head->w.end(), widened->w.begin());
  std::copy(model.head->b.begin(), model.head->b.end(), widened->b.begin());
  model.head = std::move(widened);
  model.num_classes = total_classes;
}

void set_trainable(ModelState& model, int task_index) {
  if (task_index < 1 || task_index > model.current_task())
    throw std::invalid_argument("set_trainable: task index out of range");
  for (int i = 0; i < static_cast<int>(model.branches.size()); ++i)
    model.branches[i].frozen = i < task_index - 1;
}

ModelState average_specialized_weights(const ModelState& model_t,
                                       const ModelState& model_prev,
                                       bool include_bn_stats) {
  ModelState out = model_t.clone();
  std::vector<ParamRef> cur, prev;
  collect_branch(out.branches.back(), "spec", out.plan.total_blocks, cur);
  ModelState prev_copy = model_prev.clone();  // collect needs mutable access
  collect_branch(prev_copy.branches.back(), "spec", prev_copy.plan.total_blocks,
                 prev);
  for (auto& c : cur) {
    if (c.is_buffer && !include_bn_stats) continue;
    for (const auto& q : prev) {
      if (q.name != c.name) continue;
      if (q.value->size() != c.value->size())
        throw std::invalid_argument(
            "average_specialized_weights: shape mismatch on " + c.name);
      for (std::size_t i = 0; i < c.value->size(); ++i)
        (*c.value)[i] = 0.5f * ((*c.value)[i] + (*q.value)[i]);
      break;
    }
  }
  return out;
}

ForwardResult forward(ModelState& model, const Tensor4& batch, bool train) {
  if (batch.h != model.preset.input_hw || batch.w != model.preset.input_hw)
    throw std::invalid_argument("forward: batch spatial dims do not match the dataset config");
  if (batch.c != model.preset.in_channels)
    throw std::invalid_argument("forward: channel count mismatch");

  Tensor4 x = model.generalized.stem->forward(batch, train);
  for (auto& b : model.generalized.blocks) x = b.forward(x, train);
  if (model.generalized.proj) x = model.generalized.proj->forward(x, train);
  for (auto& b : model.branches.back().blocks) x = b.forward(x, train);

  model.pool_h = x.h;
  model.pool_w = x.w;

  ForwardResult out;
  out.embedding = global_avg_pool(x);
  out.logits = model.head->forward(out.embedding, train);
  if (!out.logits.all_finite() || !out.embedding.all_finite())
    throw std::runtime_error("forward: non-finite activations (divergence)");
  return out;
}

void backward(ModelState& model, const Mat2& dlogits, const Mat2& dembedding) {
  Mat2 demb;
  if (dlogits.rows > 0) demb = model.head->backward(dlogits);
  if (dembedding.rows > 0) {
    if (demb.rows == 0)
      demb = dembedding;
    else
      for (std::size_t i = 0; i < demb.v.size(); ++i) demb.v[i] += dembedding.v[i];
  }
  if (demb.rows == 0) throw std::invalid_argument("backward: no gradient given");

  Tensor4 d = global_avg_pool_backward(demb, model.pool_h, model.pool_w);
  auto& blocks = model.branches.back().blocks;
  for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) d = it->backward(d);
  if (model.generalized.proj) d = model.generalized.proj->backward(d);
  auto& gb = model.generalized.blocks;
  for (auto it = gb.rbegin(); it != gb.rend(); ++it) d = it->backward(d);
  model.generalized.stem->backward(d);
}

void zero_grad(ModelState& model) {
  for (auto& p : model.params())
    if (p.grad) std::fill(p.grad->begin(), p.grad->end(), 0.0f);
}

std::size_t parameter_count(const ModelState& model) {
  std::size_t n = 0;
  ModelState& m = const_cast<ModelState&>(model);
  for (const auto& p : m.params())
    if (!p.is_buffer) n += p.value->size();
  return n;
}

}  // namespace blcl::nn
