#include "blcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "blcl/evaluate.hpp"

namespace blcl::train {

namespace {

std::map<int, int> head_index_of(const std::vector<int>& cumulative_classes) {
  std::map<int, int> idx;
  for (int i = 0; i < static_cast<int>(cumulative_classes.size()); ++i)
    idx[cumulative_classes[i]] = i;
  return idx;
}

Eigen::MatrixXd to_double(const Mat2& m) {
  Eigen::MatrixXd out(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    for (int c = 0; c < m.cols; ++c) out(r, c) = m.at(r, c);
  return out;
}

Mat2 to_float_scaled(const Eigen::MatrixXd& m, double scale) {
  Mat2 out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int r = 0; r < out.rows; ++r)
    for (int c = 0; c < out.cols; ++c)
      out.at(r, c) = static_cast<float>(m(r, c) * scale);
  return out;
}

// mean of the current branch's parameters with the previous (frozen) branch;
// the frozen branch is byte-identical to the model state after the previous
// task, so this realizes the two-model averaging in place.
void average_with_previous_branch(nn::ModelState& model, bool include_bn_stats) {
  const int t = model.current_task();
  if (t < 2) return;
  nn::ModelState prev = model.clone();
  prev.branches.pop_back();
  nn::ModelState averaged =
      nn::average_specialized_weights(model, prev, include_bn_stats);
  model = std::move(averaged);
}

struct PreparedSamples {
  std::vector<data::LabeledImage> synthesized;       // owns augmented images
  std::vector<const data::LabeledImage*> pointers;   // full training list
};

PreparedSamples prepare_train_list(const data::TaskSpec& task,
                                   const data::DatasetStore& data,
                                   const memory::ExemplarSet& store,
                                   const TrainConfig& cfg) {
  PreparedSamples out;
  std::set<int> task_classes(task.classes.begin(), task.classes.end());

  std::map<int, std::vector<data::LabeledImage>> by_class;
  for (const auto& id : task.train_ids) {
    const auto& s = data.get(id);
    by_class[s.label].push_back(s);
  }

  const std::uint64_t task_tag = static_cast<std::uint64_t>(task.index) << 32;
  auto append_class = [&](int cls, const std::vector<data::LabeledImage>& samples,
                          std::uint64_t tag) {
    if (cfg.augment_target_per_class > 0) {
      data::AugmentationPolicy policy = cfg.augmentation;
      policy.target_per_class = cfg.augment_target_per_class;
      auto balanced = data::augment_balance(
          samples, policy,
          Rng(cfg.seed).child(0xA46000000ULL + task_tag + tag).next_u64());
      for (auto& s : balanced) out.synthesized.push_back(std::move(s));
    } else {
      for (const auto& s : samples) out.synthesized.push_back(s);
    }
  };

  for (const auto& [cls, samples] : by_class)
    append_class(cls, samples, static_cast<std::uint64_t>(cls));

  if (cfg.exemplars_enabled) {
    for (const auto& [cls, ids] : store.per_class) {
      if (task_classes.count(cls)) continue;
      if (cfg.augment_exemplars && cfg.augment_target_per_class > 0) {
        std::vector<data::LabeledImage> samples;
        for (const auto& id : ids) samples.push_back(data.get(id));
        append_class(cls, samples, 0x10000ULL + static_cast<std::uint64_t>(cls));
      } else {
        for (const auto& id : ids) out.pointers.push_back(&data.get(id));
      }
    }
  }
  for (const auto& s : out.synthesized) out.pointers.push_back(&s);
  return out;
}

}  // namespace

WeightingMode parse_weighting_mode(const std::string& name) {
  if (name == "bayesian") return WeightingMode::bayesian;
  if (name == "fixed") return WeightingMode::fixed;
  if (name == "ce_only") return WeightingMode::ce_only;
  if (name == "cl_only") return WeightingMode::cl_only;
  throw std::invalid_argument("unknown weighting mode: " + name);
}

std::string weighting_mode_name(WeightingMode mode) {
  switch (mode) {
    case WeightingMode::bayesian: return "bayesian";
    case WeightingMode::fixed: return "fixed";
    case WeightingMode::ce_only: return "ce_only";
    case WeightingMode::cl_only: return "cl_only";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
  if (learning_rate < 0.0)
    throw std::invalid_argument("config: learning_rate must be >= 0");
  const bool cl_active = weighting_mode != WeightingMode::ce_only;
  if (batch_size < (cl_active ? 2 : 1))
    throw std::invalid_argument(
        "config: batch_size must be >= 2 while the contrastive loss is active");
  if (memory_budget < 0)
    throw std::invalid_argument("config: memory_budget must be >= 0");
  if (adapt_tau <= -1.0 || adapt_tau > 1.0)
    throw std::invalid_argument("config: adapt_tau must be in (-1, 1]");
}

Adam::Adam(double lr_, double beta1, double beta2, double eps)
    : lr(lr_), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::attach(std::vector<nn::ParamRef> params) {
  params_ = std::move(params);
  m_.clear();
  v_.clear();
  for (const auto& p : params_) {
    m_.emplace_back(p.value->size(), 0.0f);
    v_.emplace_back(p.value->size(), 0.0f);
  }
  t_ = 0;
}

void Adam::attach_sigma(loss::LossWeights* weights) {
  sigma_ = weights;
  sm_[0] = sm_[1] = sv_[0] = sv_[1] = 0.0;
}

void Adam::step(double d_log_sigma1, double d_log_sigma2) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& value = *params_[k].value;
    const auto& grad = *params_[k].grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const float g = grad[i];
      m[i] = static_cast<float>(beta1_) * m[i] + static_cast<float>(1.0 - beta1_) * g;
      v[i] = static_cast<float>(beta2_) * v[i] + static_cast<float>(1.0 - beta2_) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
  if (sigma_) {
    double* values[2] = {&sigma_->log_sigma1, &sigma_->log_sigma2};
    const double grads[2] = {d_log_sigma1, d_log_sigma2};
    for (int k = 0; k < 2; ++k) {
      sm_[k] = beta1_ * sm_[k] + (1.0 - beta1_) * grads[k];
      sv_[k] = beta2_ * sv_[k] + (1.0 - beta2_) * grads[k] * grads[k];
      *values[k] -= lr * (sm_[k] / bc1) / (std::sqrt(sv_[k] / bc2) + eps_);
    }
  }
}

TaskResult train_task(nn::ModelState& model, const data::TaskSpec& task,
                      const data::DatasetStore& data, memory::ExemplarSet& store,
                      const TrainConfig& cfg, loss::LossWeights& weights,
                      const RunHooks& hooks) {
  cfg.validate();
  const int t = model.current_task();

  PreparedSamples prepared = prepare_train_list(task, data, store, cfg);
  if (prepared.pointers.empty())
    throw std::invalid_argument("train_task: empty training list");

  // head row = position of the class in the model's cumulative class order
  std::map<int, int> head_idx;
  for (int i = 0; i < static_cast<int>(model.class_order.size()); ++i)
    head_idx[model.class_order[i]] = i;

  Adam adam(cfg.learning_rate);
  adam.attach(model.trainable_params());
  if (cfg.weighting_mode == WeightingMode::bayesian) adam.attach_sigma(&weights);

  std::vector<int> milestone_epochs;
  for (double f : cfg.lr_milestones)
    milestone_epochs.push_back(static_cast<int>(std::floor(f * cfg.epochs)));

  TaskResult result;
  result.task_index = t;
  result.chosen_spec = model.branches.back().spec.conv_layers;

  const bool use_cl = cfg.weighting_mode != WeightingMode::ce_only;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.learning_rate;
    for (int me : milestone_epochs)
      if (epoch > me) lr *= cfg.lr_decay;
    adam.lr = lr;

    data::BatchIterator it(
        prepared.pointers, cfg.batch_size, true,
        Rng(cfg.seed).child(0xE70C * 1000ULL + t * 1000ULL + epoch).next_u64());

    double sum_ce = 0.0, sum_cl = 0.0, sum_total = 0.0;
    std::size_t seen = 0;
    int batch_no = 0;
    while (auto batch = it.next()) {
      ++batch_no;
      nn::zero_grad(model);

      nn::ForwardResult fwd;
      try {
        fwd = nn::forward(model, batch->x, true);
      } catch (const std::runtime_error&) {
        if (hooks.on_divergence) hooks.on_divergence(model);
        throw DivergenceError(t, epoch, batch_no);
      }

      std::vector<int> target(batch->labels.size());
      for (std::size_t i = 0; i < batch->labels.size(); ++i)
        target[i] = head_idx.at(batch->labels[i]);

      const Eigen::MatrixXd logits = to_double(fwd.logits);
      const double l_ce = loss::cross_entropy(logits, target);

      const loss::PairBatch pairs = loss::form_pairs(target);
      const Eigen::MatrixXd emb = to_double(fwd.embedding);
      double l_cl = 0.0;
      if (use_cl) {
        l_cl = loss::contrastive_loss(emb, pairs, cfg.contrastive_margin,
                                      cfg.contrastive_squared_hinge);
      } else {
        try {  // logged only; a degenerate embedding must not abort a CE run
          l_cl = loss::contrastive_loss(emb, pairs, cfg.contrastive_margin,
                                        cfg.contrastive_squared_hinge);
        } catch (const std::invalid_argument&) {
          l_cl = 0.0;
        }
      }

      double total = 0.0;
      double scale_ce = 0.0, scale_cl = 0.0;
      double d_ls1 = 0.0, d_ls2 = 0.0;
      switch (cfg.weighting_mode) {
        case WeightingMode::bayesian: {
          total = loss::bayesian_total_loss(l_ce, l_cl, weights);
          const auto g = loss::bayesian_total_grads(l_ce, l_cl, weights);
          scale_ce = g.d_l_ce;
          scale_cl = g.d_l_cl;
          d_ls1 = g.d_log_sigma1;
          d_ls2 = g.d_log_sigma2;
          break;
        }
        case WeightingMode::fixed:
          total = cfg.fixed_w_ce * l_ce + cfg.fixed_w_cl * l_cl;
          scale_ce = cfg.fixed_w_ce;
          scale_cl = cfg.fixed_w_cl;
          break;
        case WeightingMode::ce_only:
          total = l_ce;  // l_cl is logged but zero-weighted
          scale_ce = 1.0;
          break;
        case WeightingMode::cl_only:
          total = l_cl;
          scale_cl = 1.0;
          break;
      }
      if (!std::isfinite(total)) {
        if (hooks.on_divergence) hooks.on_divergence(model);
        throw DivergenceError(t, epoch, batch_no);
      }

      Mat2 dlogits, dembedding;
      if (scale_ce != 0.0)
        dlogits = to_float_scaled(loss::cross_entropy_grad(logits, target), scale_ce);
      if (use_cl && scale_cl != 0.0)
        dembedding = to_float_scaled(
            loss::contrastive_loss_grad(emb, pairs, cfg.contrastive_margin,
                                        cfg.contrastive_squared_hinge),
            scale_cl);
      nn::backward(model, dlogits, dembedding);
      adam.step(d_ls1, d_ls2);

      const std::size_t bs = batch->labels.size();
      sum_ce += l_ce * bs;
      sum_cl += l_cl * bs;
      sum_total += total * bs;
      seen += bs;
    }

    EpochStats stats;
    stats.l_ce = sum_ce / seen;
    stats.l_cl = sum_cl / seen;
    stats.total = sum_total / seen;
    stats.sigma1 = weights.sigma1();
    stats.sigma2 = weights.sigma2();
    result.per_epoch.push_back(stats);
    if (hooks.on_epoch) hooks.on_epoch(t, epoch, stats);
  }

  if (cfg.average_specialized && t >= 2)
    average_with_previous_branch(model, cfg.average_bn_stats);

  if (cfg.exemplars_enabled) {
    std::map<int, memory::ClassFeatures> new_features;
    std::map<int, std::vector<const data::LabeledImage*>> originals;
    for (const auto& id : task.train_ids)
      originals[data.get(id).label].push_back(&data.get(id));
    for (auto& [cls, samples] : originals) {
      memory::ClassFeatures cf;
      cf.features.resize(static_cast<Eigen::Index>(samples.size()),
                         model.plan.embedding_dim);
      std::size_t done = 0;
      while (done < samples.size()) {
        const std::size_t end =
            std::min(done + static_cast<std::size_t>(cfg.batch_size), samples.size());
        std::vector<const data::LabeledImage*> chunk(samples.begin() + done,
                                                     samples.begin() + end);
        auto out = nn::forward(model, data::make_batch_tensor(chunk), false);
        for (int r = 0; r < out.embedding.rows; ++r)
          for (int c = 0; c < out.embedding.cols; ++c)
            cf.features(static_cast<Eigen::Index>(done) + r, c) =
                out.embedding.at(r, c);
        done = end;
      }
      for (const auto* s : samples) cf.ids.push_back(s->id);
      new_features[cls] = std::move(cf);
    }
    store = memory::update_exemplars(t, store, new_features);
  }

  return result;
}

metrics::MetricsReport evaluate_model(nn::ModelState& model,
                                      const data::DatasetStore& data,
                                      const data::TaskSequence& seq,
                                      int through_task, int batch_size) {
  const std::vector<int> classes = seq.cumulative_labels(through_task);
  const auto head_idx = head_index_of(classes);
  const int k = static_cast<int>(classes.size());

  std::vector<const data::LabeledImage*> samples;
  for (int t = 0; t < through_task; ++t)
    for (const auto& id : seq.tasks[t].test_ids) samples.push_back(&data.get(id));

  auto inference = metrics::run_inference(model, samples, batch_size);
  std::vector<int> labels;
  for (const auto* s : samples) labels.push_back(head_idx.at(s->label));

  metrics::MetricsReport report;
  report.confusion = metrics::confusion_matrix(inference.pred_rows, labels, k);
  report.f1 = metrics::f_beta(report.confusion, 1.0);
  report.f2 = metrics::f_beta(report.confusion, 2.0);
  report.db_score = metrics::davies_bouldin(inference.embeddings, labels);
  report.ch_score = metrics::calinski_harabasz(inference.embeddings, labels);
  return report;
}

namespace {

RunReport run_loop(const data::TaskSequence& seq, const nn::ArchitecturePlan& plan,
                   const TrainConfig& cfg, const data::DatasetStore& data,
                   const RunHooks& hooks, ResumeState* resume) {
  cfg.validate();
  if (plan.per_task.size() != seq.tasks.size())
    throw std::invalid_argument("plan length must equal the task count");

  RunReport report;
  nn::ModelState model;
  memory::ExemplarSet store;
  store.budget = cfg.memory_budget;
  loss::LossWeights weights;  // sigma = 1, persisted across tasks

  int start_task = 1;
  if (resume && resume->completed_tasks > 0) {
    model = std::move(resume->model);
    store = std::move(resume->store);
    weights = resume->weights;
    report.per_task_acc = resume->per_task_acc;
    report.tasks = std::move(resume->prior_tasks);
    start_task = resume->completed_tasks + 1;
  }

  for (int t = start_task; t <= static_cast<int>(seq.tasks.size()); ++t) {
    const data::TaskSpec& task = seq.tasks[t - 1];
    if (t == 1) {
      model = nn::build_model(plan, static_cast<int>(task.classes.size()),
                              Rng(cfg.seed).child(0x1417ULL).next_u64());
      model.class_order = task.classes;
    } else {
      nn::BlockSpec spec = plan.per_task[t - 1];
      if (cfg.adapt_enabled) {
        // old prototypes from the exemplar store, new from fresh train data
        std::map<int, std::vector<const data::LabeledImage*>> old_samples,
            new_samples;
        for (const auto& [cls, ids] : store.per_class)
          for (const auto& id : ids) old_samples[cls].push_back(&data.get(id));
        for (const auto& id : task.train_ids) {
          const auto& s = data.get(id);
          new_samples[s.label].push_back(&s);
        }
        if (!old_samples.empty()) {
          auto old_protos = adapt::class_prototypes(model, old_samples,
                                                    cfg.batch_size);
          auto new_protos = adapt::class_prototypes(model, new_samples,
                                                    cfg.batch_size);
          auto similarity = adapt::class_similarity(new_protos, old_protos);
          adapt::SpecProbe probe;
          std::vector<std::pair<int, double>> probed;
          // a fifth of the new task's train split is held out for the probe
          std::vector<std::string> probe_train = task.train_ids;
          Rng probe_rng = Rng(cfg.seed).child(0x9E0BE000ULL + t);
          probe_rng.shuffle(probe_train);
          const std::size_t holdout_size =
              std::max<std::size_t>(1, probe_train.size() / 5);
          std::vector<std::string> probe_holdout(
              probe_train.end() - holdout_size, probe_train.end());
          probe_train.resize(probe_train.size() - holdout_size);
          if (cfg.adapt_probe)
            probe = [&, probe_train, probe_holdout](int conv_layers) {
              nn::ModelState candidate = model.clone();
              nn::expand_for_task(candidate, t,
                                  static_cast<int>(task.classes.size()),
                                  {conv_layers});
              candidate.class_order.insert(candidate.class_order.end(),
                                           task.classes.begin(),
                                           task.classes.end());
              nn::set_trainable(candidate, t);
              data::TaskSpec probe_task = task;
              probe_task.train_ids = probe_train;
              TrainConfig probe_cfg = cfg;
              probe_cfg.epochs = cfg.adapt_probe_epochs;
              probe_cfg.adapt_enabled = false;
              probe_cfg.exemplars_enabled = false;
              memory::ExemplarSet probe_store = store;
              loss::LossWeights probe_weights = weights;
              train_task(candidate, probe_task, data, probe_store, probe_cfg,
                         probe_weights);
              auto head_idx = head_index_of(candidate.class_order);
              int correct = 0;
              std::size_t done = 0;
              while (done < probe_holdout.size()) {
                const std::size_t end =
                    std::min(done + static_cast<std::size_t>(cfg.batch_size),
                             probe_holdout.size());
                std::vector<const data::LabeledImage*> chunk;
                for (std::size_t i = done; i < end; ++i)
                  chunk.push_back(&data.get(probe_holdout[i]));
                auto out = nn::forward(candidate, data::make_batch_tensor(chunk),
                                       false);
                for (int r = 0; r < out.logits.rows; ++r) {
                  int best = 0;
                  for (int c = 1; c < out.logits.cols; ++c)
                    if (out.logits.at(r, c) > out.logits.at(r, best)) best = c;
                  if (best == head_idx.at(chunk[r]->label)) ++correct;
                }
                done = end;
              }
              const double acc =
                  100.0 * correct / static_cast<double>(probe_holdout.size());
              probed.emplace_back(conv_layers, acc);
              return acc;
            };
          spec = adapt::decide_block_spec(similarity, cfg.adapt_tau, probe,
                                          plan.final_region_capacity());
          if (hooks.on_adapt_decision)
            hooks.on_adapt_decision(t, similarity, cfg.adapt_tau, probed,
                                    spec.conv_layers);
        }
      }
      nn::expand_for_task(model, t, static_cast<int>(task.classes.size()), spec);
      model.class_order.insert(model.class_order.end(), task.classes.begin(),
                               task.classes.end());
    }
    nn::set_trainable(model, t);

    TaskResult result = train_task(model, task, data, store, cfg, weights, hooks);
    result.eval = evaluate_model(model, data, seq, t, cfg.batch_size);
    report.per_task_acc.push_back(metrics::accuracy(result.eval.confusion));
    result.eval.per_task_acc = report.per_task_acc;
    result.eval.avg_acc = metrics::average_accuracy(report.per_task_acc);
    if (hooks.on_task_done) hooks.on_task_done(t, model, weights, store, result);
    report.tasks.push_back(std::move(result));
  }

  report.avg_acc = metrics::average_accuracy(report.per_task_acc);
  report.final_parameter_count = nn::parameter_count(model);
  return report;
}

}  // namespace

RunReport run_sequence(const data::TaskSequence& seq,
                       const nn::ArchitecturePlan& plan, const TrainConfig& cfg,
                       const data::DatasetStore& data, const RunHooks& hooks,
                       ResumeState* resume) {
  return run_loop(seq, plan, cfg, data, hooks, resume);
}

RunReport finetune_baseline(const data::TaskSequence& seq,
                            const nn::ArchitecturePlan& plan,
                            const TrainConfig& cfg, const data::DatasetStore& data,
                            const RunHooks& hooks) {
  TrainConfig ft = cfg;
  ft.weighting_mode = WeightingMode::ce_only;
  ft.average_specialized = false;
  ft.exemplars_enabled = false;
  ft.adapt_enabled = false;
  return run_loop(seq, plan, ft, data, hooks, nullptr);
}

}  // namespace blcl::train
