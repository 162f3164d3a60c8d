#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "blcl/adapt.hpp"
#include "blcl/backbone.hpp"
#include "blcl/dataset.hpp"
#include "blcl/exemplars.hpp"
#include "blcl/losses.hpp"
#include "blcl/metrics.hpp"

namespace blcl::train {

enum class WeightingMode { bayesian, fixed, ce_only, cl_only };

WeightingMode parse_weighting_mode(const std::string& name);
std::string weighting_mode_name(WeightingMode mode);

struct TrainConfig {
  int epochs = 300;
  int batch_size = 128;
  double learning_rate = 0.1;
  double lr_decay = 0.1;
  std::vector<double> lr_milestones = {0.6, 0.8};  // fractions of the schedule
  WeightingMode weighting_mode = WeightingMode::bayesian;
  double fixed_w_ce = 0.1;
  double fixed_w_cl = 0.9;
  double contrastive_margin = 1.0;
  bool contrastive_squared_hinge = false;
  bool average_specialized = true;
  bool average_bn_stats = true;
  bool exemplars_enabled = true;
  int memory_budget = 2000;
  int augment_target_per_class = 0;  // 0 turns class balancing off
  bool augment_exemplars = false;
  bool adapt_enabled = false;
  double adapt_tau = 0.5;
  bool adapt_probe = false;
  int adapt_probe_epochs = 5;
  std::uint64_t seed = 1;
  data::AugmentationPolicy augmentation;

  void validate() const;
};

struct EpochStats {
  double l_ce = 0.0, l_cl = 0.0, total = 0.0;
  double sigma1 = 1.0, sigma2 = 1.0;
};

struct TaskResult {
  int task_index = 0;
  std::vector<EpochStats> per_epoch;
  metrics::MetricsReport eval;
  int chosen_spec = -1;  // final-region convs after any adapt decision
};

struct RunReport {
  std::vector<TaskResult> tasks;
  std::vector<double> per_task_acc;
  double avg_acc = 0.0;
  std::size_t final_parameter_count = 0;
};

struct DivergenceError : std::runtime_error {
  int task, epoch, batch;
  DivergenceError(int t, int e, int b)
      : std::runtime_error("training diverged (non-finite loss) at task " +
                           std::to_string(t) + " epoch " + std::to_string(e) +
                           " batch " + std::to_string(b)),
        task(t), epoch(e), batch(b) {}
};

// Artifact callbacks; leave empty to run without side outputs.
struct RunHooks {
  std::function<void(int task, int epoch, const EpochStats&)> on_epoch;
  std::function<void(int task, nn::ModelState&, const loss::LossWeights&,
                     const memory::ExemplarSet&, const TaskResult&)>
      on_task_done;
  std::function<void(nn::ModelState&)> on_divergence;
  std::function<void(int task, const adapt::SimilarityReport&, double tau,
                     const std::vector<std::pair<int, double>>& probed,
                     int chosen_spec)>
      on_adapt_decision;
};

// State carried across an interrupted run; completed_tasks > 0 resumes the
// sequence at the following task and reproduces the uninterrupted run.
struct ResumeState {
  nn::ModelState model;
  memory::ExemplarSet store;
  loss::LossWeights weights;
  int completed_tasks = 0;
  std::vector<double> per_task_acc;
  std::vector<TaskResult> prior_tasks;
};

// Adam with bias correction; sigma scalars ride along in double precision so
// a single step updates network weights and the loss weighting together.
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void attach(std::vector<nn::ParamRef> params);
  void attach_sigma(loss::LossWeights* weights);
  void step(double d_log_sigma1 = 0.0, double d_log_sigma2 = 0.0);

  double lr;

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<nn::ParamRef> params_;
  std::vector<std::vector<float>> m_, v_;
  loss::LossWeights* sigma_ = nullptr;
  double sm_[2] = {0, 0}, sv_[2] = {0, 0};
};

// One pass of the per-task loop: batches through CE + pair-mined contrastive
// loss under the configured weighting, then weight averaging against the
// previous task's branch and the exemplar refresh.
TaskResult train_task(nn::ModelState& model, const data::TaskSpec& task,
                      const data::DatasetStore& data, memory::ExemplarSet& store,
                      const TrainConfig& cfg, loss::LossWeights& weights,
                      const RunHooks& hooks = {});

RunReport run_sequence(const data::TaskSequence& seq,
                       const nn::ArchitecturePlan& plan, const TrainConfig& cfg,
                       const data::DatasetStore& data, const RunHooks& hooks = {},
                       ResumeState* resume = nullptr);

// Catastrophic-forgetting control: the same loop with no exemplars, no weight
// averaging and cross-entropy only.
RunReport finetune_baseline(const data::TaskSequence& seq,
                            const nn::ArchitecturePlan& plan,
                            const TrainConfig& cfg, const data::DatasetStore& data,
                            const RunHooks& hooks = {});

// Cumulative evaluation used after every task.
metrics::MetricsReport evaluate_model(nn::ModelState& model,
                                      const data::DatasetStore& data,
                                      const data::TaskSequence& seq,
                                      int through_task, int batch_size);

}  // namespace blcl::train
