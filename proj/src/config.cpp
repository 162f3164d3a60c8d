#include "blcl/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace blcl::io {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean value '" + v + "'");
}

template <class T, class F>
std::vector<T> parse_list(const std::string& v, F convert) {
  std::vector<T> out;
  std::string item;
  std::istringstream ss(v);
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(convert(item));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream ss;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) ss << ',';
    ss << v[i];
  }
  return ss.str();
}

}  // namespace

nn::ArchitecturePlan ExperimentConfig::to_plan() const {
  nn::ArchitecturePlan plan;
  plan.total_blocks = total_blocks;
  plan.embedding_dim = embedding_dim;
  plan.preset = backbone;
  for (int s : block_specs) plan.per_task.push_back({s});
  return plan;
}

train::TrainConfig ExperimentConfig::to_train_config() const {
  train::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.learning_rate = learning_rate;
  cfg.lr_decay = lr_decay;
  cfg.lr_milestones = lr_milestones;
  cfg.weighting_mode = train::parse_weighting_mode(weighting_mode);
  cfg.fixed_w_ce = fixed_w_ce;
  cfg.fixed_w_cl = fixed_w_cl;
  cfg.contrastive_margin = contrastive_margin;
  cfg.contrastive_squared_hinge = contrastive_squared_hinge;
  cfg.average_specialized = average_specialized;
  cfg.average_bn_stats = average_bn_stats;
  cfg.memory_budget = memory_budget;
  cfg.augment_target_per_class = augment_target_per_class;
  cfg.augment_exemplars = augment_exemplars;
  cfg.adapt_enabled = adapt_enabled;
  cfg.adapt_tau = adapt_tau;
  cfg.adapt_probe = adapt_probe;
  cfg.adapt_probe_epochs = adapt_probe_epochs;
  cfg.seed = seed;
  return cfg;
}

void ExperimentConfig::validate() const {
  data::parse_dataset_id(dataset);
  if (partition.empty())
    throw std::invalid_argument("config: partition must not be empty");
  if (block_specs.size() != partition.size())
    throw std::invalid_argument(
        "config: block_specs length must equal the partition (task) count");
  if (embedding_dim != 512)
    throw std::invalid_argument("config: embedding_dim must be 512");
  nn::backbone_preset(backbone);  // throws on unknown preset
  to_train_config().validate();
}

std::string ExperimentConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["dataset"] = dataset;
  kv["data_root"] = data_root;
  kv["partition"] = join(partition);
  kv["class_order"] = join(class_order);
  kv["seed"] = std::to_string(seed);
  kv["output_dir"] = output_dir;
  kv["backbone"] = backbone;
  kv["total_blocks"] = std::to_string(total_blocks);
  kv["block_specs"] = join(block_specs);
  kv["embedding_dim"] = std::to_string(embedding_dim);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["learning_rate"] = std::to_string(learning_rate);
  kv["lr_decay"] = std::to_string(lr_decay);
  kv["lr_milestones"] = join(lr_milestones);
  kv["weighting_mode"] = weighting_mode;
  kv["fixed_w_ce"] = std::to_string(fixed_w_ce);
  kv["fixed_w_cl"] = std::to_string(fixed_w_cl);
  kv["contrastive_margin"] = std::to_string(contrastive_margin);
  kv["contrastive_squared_hinge"] = contrastive_squared_hinge ? "true" : "false";
  kv["average_specialized"] = average_specialized ? "true" : "false";
  kv["average_bn_stats"] = average_bn_stats ? "true" : "false";
  kv["memory_budget"] = std::to_string(memory_budget);
  kv["augment_target_per_class"] = std::to_string(augment_target_per_class);
  kv["augment_exemplars"] = augment_exemplars ? "true" : "false";
  kv["adapt_enabled"] = adapt_enabled ? "true" : "false";
  kv["adapt_tau"] = std::to_string(adapt_tau);
  kv["adapt_probe"] = adapt_probe ? "true" : "false";
  kv["adapt_probe_epochs"] = std::to_string(adapt_probe_epochs);
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
  return out.str();
}

std::uint64_t ExperimentConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    auto to_int = [&](const std::string& s) { return std::stoi(s); };
    auto to_double = [&](const std::string& s) { return std::stod(s); };
    try {
      if (key == "dataset") cfg.dataset = value;
      else if (key == "data_root") cfg.data_root = value;
      else if (key == "partition") cfg.partition = parse_list<int>(value, to_int);
      else if (key == "class_order") cfg.class_order = parse_list<int>(value, to_int);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "output_dir") cfg.output_dir = value;
      else if (key == "backbone") cfg.backbone = value;
      else if (key == "total_blocks") cfg.total_blocks = to_int(value);
      else if (key == "block_specs") cfg.block_specs = parse_list<int>(value, to_int);
      else if (key == "embedding_dim") cfg.embedding_dim = to_int(value);
      else if (key == "epochs") cfg.epochs = to_int(value);
      else if (key == "batch_size") cfg.batch_size = to_int(value);
      else if (key == "learning_rate") cfg.learning_rate = to_double(value);
      else if (key == "lr_decay") cfg.lr_decay = to_double(value);
      else if (key == "lr_milestones")
        cfg.lr_milestones = parse_list<double>(value, to_double);
      else if (key == "weighting_mode") cfg.weighting_mode = value;
      else if (key == "fixed_w_ce") cfg.fixed_w_ce = to_double(value);
      else if (key == "fixed_w_cl") cfg.fixed_w_cl = to_double(value);
      else if (key == "contrastive_margin") cfg.contrastive_margin = to_double(value);
      else if (key == "contrastive_squared_hinge")
        cfg.contrastive_squared_hinge = parse_bool(value);
      else if (key == "average_specialized") cfg.average_specialized = parse_bool(value);
      else if (key == "average_bn_stats") cfg.average_bn_stats = parse_bool(value);
      else if (key == "memory_budget") cfg.memory_budget = to_int(value);
      else if (key == "augment_target_per_class")
        cfg.augment_target_per_class = to_int(value);
      else if (key == "augment_exemplars") cfg.augment_exemplars = parse_bool(value);
      else if (key == "adapt_enabled") cfg.adapt_enabled = parse_bool(value);
      else if (key == "adapt_tau") cfg.adapt_tau = to_double(value);
      else if (key == "adapt_probe") cfg.adapt_probe = parse_bool(value);
      else if (key == "adapt_probe_epochs") cfg.adapt_probe_epochs = to_int(value);
      else
        throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                  e.what());
    } catch (const std::exception&) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": bad value for '" + key + "'");
    }
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string default_config_text() {
  return R"(# BLCL experiment configuration (defaults shown)

# dataset: cifar10 | cifar100 | imagenet100 | gnss | custom
dataset = cifar10
# directory holding the dataset (CIFAR binaries or class-per-directory trees);
# the BLCL_DATA_ROOT environment variable overrides this value
data_root =
# classes per task; must sum to the dataset's class count
partition = 4,2,2,2
# optional explicit class order (comma separated labels); empty = ascending
class_order =
seed = 1
output_dir = runs/exp

# backbone preset: cifar32 (32x32 inputs), imagenet18 (224x224), desk (small CPU)
backbone = cifar32
# specialized blocks per branch (the l in the architecture name)
total_blocks = 8
# retained convolutions in each task's final block region, one per task (0..4)
block_specs = 1,1,2,2
embedding_dim = 512

epochs = 300
batch_size = 128
learning_rate = 0.1
lr_decay = 0.1
# decay milestones as fractions of the epoch schedule
lr_milestones = 0.6,0.8
# weighting_mode: bayesian | fixed | ce_only | cl_only
weighting_mode = bayesian
fixed_w_ce = 0.1
fixed_w_cl = 0.9
contrastive_margin = 1.0
contrastive_squared_hinge = false
# average the new specialized branch with the previous task's after training
average_specialized = true
average_bn_stats = true
# global exemplar budget E
memory_budget = 2000
# class-balancing augmentation target; 0 disables (use 1000 for gnss)
augment_target_per_class = 0
augment_exemplars = false

# similarity-gated reduction of the final block region
adapt_enabled = false
adapt_tau = 0.5
adapt_probe = false
adapt_probe_epochs = 5
)";
}

}  // namespace blcl::io
