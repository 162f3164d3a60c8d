#pragma once

#include <string>
#include <vector>

#include "blcl/backbone.hpp"
#include "blcl/trainer.hpp"

namespace blcl::io {

// One experiment = one flat, commented key=value file. Defaults mirror the
// full-scale training recipe; the "desk" preset scales everything to CPU.
struct ExperimentConfig {
  std::string dataset = "cifar10";
  std::string data_root;
  std::vector<int> partition = {4, 2, 2, 2};
  std::vector<int> class_order;  // empty = ascending label ids
  std::uint64_t seed = 1;
  std::string output_dir = "runs/exp";

  std::string backbone = "cifar32";
  int total_blocks = 8;
  std::vector<int> block_specs = {1, 1, 2, 2};
  int embedding_dim = 512;

  int epochs = 300;
  int batch_size = 128;
  double learning_rate = 0.1;
  double lr_decay = 0.1;
  std::vector<double> lr_milestones = {0.6, 0.8};
  std::string weighting_mode = "bayesian";
  double fixed_w_ce = 0.1;
  double fixed_w_cl = 0.9;
  double contrastive_margin = 1.0;
  bool contrastive_squared_hinge = false;
  bool average_specialized = true;
  bool average_bn_stats = true;
  int memory_budget = 2000;
  int augment_target_per_class = 0;
  bool augment_exemplars = false;

  bool adapt_enabled = false;
  double adapt_tau = 0.5;
  bool adapt_probe = false;
  int adapt_probe_epochs = 5;

  nn::ArchitecturePlan to_plan() const;
  train::TrainConfig to_train_config() const;
  void validate() const;
  std::string canonical_text() const;   // sorted key=value lines
  std::uint64_t hash() const;           // FNV-1a over canonical_text
};

ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// The default config with explanatory comments (`run --print-defaults`).
std::string default_config_text();

}  // namespace blcl::io
