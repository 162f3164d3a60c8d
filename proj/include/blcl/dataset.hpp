#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "blcl/image.hpp"
#include "blcl/rng.hpp"
#include "blcl/tensor.hpp"

namespace blcl::data {

enum class DatasetId { cifar10, cifar100, imagenet100, gnss, custom };

DatasetId parse_dataset_id(const std::string& name);
std::string dataset_id_name(DatasetId id);

struct TaskSpec {
  int index = 0;  // 1-based
  std::vector<int> classes;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

struct TaskSequence {
  std::vector<TaskSpec> tasks;

  // union of class labels through task t (1-based)
  std::vector<int> cumulative_labels(int t) const;
};

// In-memory sample store indexed by stable id. Loaders fill it from CIFAR
// binaries or directory-per-class image trees; a text manifest caches the
// id -> (path, label, split) index for directory datasets.
class DatasetStore {
 public:
  void add(LabeledImage sample, bool is_train);

  const LabeledImage& get(const std::string& id) const;
  bool has(const std::string& id) const;

  std::vector<std::string> train_ids_for_class(int cls) const;
  std::vector<std::string> test_ids_for_class(int cls) const;
  std::vector<int> class_labels() const;  // ascending

  std::size_t size() const { return samples_.size(); }

 private:
  std::map<std::string, LabeledImage> samples_;
  std::map<int, std::vector<std::string>> train_by_class_;
  std::map<int, std::vector<std::string>> test_by_class_;
};

// CIFAR binary batches (1 or 2 label bytes + 3072 pixel bytes per record).
DatasetStore load_cifar(const std::string& root, bool cifar100);

// <root>/<class_id>/<image> trees. When train/ and test/ subtrees exist they
// are taken as the canonical split; otherwise the split is drawn per class
// with the given fractions, deterministically under seed. The manifest cache
// is regenerated when absent.
DatasetStore load_directory_tree(const std::string& root, int resize_hw,
                                 double train_frac, double test_frac,
                                 std::uint64_t seed);

DatasetStore load_dataset(DatasetId id, const std::string& root, int resize_hw,
                          std::uint64_t seed);

// Splits the store's classes into tasks. partition[t] classes per task,
// assigned in ascending label order unless class_order overrides.
TaskSequence build_task_sequence(const DatasetStore& store, DatasetId id,
                                 const std::vector<int>& partition,
                                 std::uint64_t seed,
                                 const std::vector<int>& class_order = {});

struct Batch {
  Tensor4 x;  // normalized NCHW
  std::vector<int> labels;
  std::vector<std::string> ids;
};

// Input normalization applied when images become network tensors.
constexpr float kInputMean = 0.5f;
constexpr float kInputStd = 0.25f;

Tensor4 make_batch_tensor(const std::vector<const LabeledImage*>& samples);

// Single-epoch batch stream: every sample exactly once, final partial batch
// included. Shuffling is deterministic under seed.
class BatchIterator {
 public:
  BatchIterator(std::vector<const LabeledImage*> split, int batch_size,
                bool shuffle, std::uint64_t seed);

  std::optional<Batch> next();
  void reset();

 private:
  std::vector<const LabeledImage*> split_;
  int batch_size_;
  std::size_t cursor_ = 0;
};

// Deterministic CIFAR-10-format fixture with ten synthetic texture classes;
// stands in for real data in tests and smoke runs. Writes data_batch_1.bin
// and test_batch.bin under dir.
void write_synthetic_cifar(const std::string& dir, int train_per_class,
                           int test_per_class, std::uint64_t seed);

}  // namespace blcl::data
