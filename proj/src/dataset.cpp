#include "blcl/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace fs = std::filesystem;

namespace blcl::data {

DatasetId parse_dataset_id(const std::string& name) {
  if (name == "cifar10") return DatasetId::cifar10;
  if (name == "cifar100") return DatasetId::cifar100;
  if (name == "imagenet100") return DatasetId::imagenet100;
  if (name == "gnss") return DatasetId::gnss;
  if (name == "custom") return DatasetId::custom;
  throw std::invalid_argument("unknown dataset id: " + name);
}

std::string dataset_id_name(DatasetId id) {
  switch (id) {
    case DatasetId::cifar10: return "cifar10";
    case DatasetId::cifar100: return "cifar100";
    case DatasetId::imagenet100: return "imagenet100";
    case DatasetId::gnss: return "gnss";
    case DatasetId::custom: return "custom";
  }
  return "?";
}

std::vector<int> TaskSequence::cumulative_labels(int t) const {
  if (t < 1 || t > static_cast<int>(tasks.size()))
    throw std::out_of_range("cumulative_labels: task index out of range");
  std::vector<int> out;
  for (int i = 0; i < t; ++i)
    out.insert(out.end(), tasks[i].classes.begin(), tasks[i].classes.end());
  return out;
}

void DatasetStore::add(LabeledImage sample, bool is_train) {
  auto& by_class = is_train ? train_by_class_ : test_by_class_;
  by_class[sample.label].push_back(sample.id);
  samples_.emplace(sample.id, std::move(sample));
}

const LabeledImage& DatasetStore::get(const std::string& id) const {
  auto it = samples_.find(id);
  if (it == samples_.end())
    throw std::out_of_range("DatasetStore: unknown sample id " + id);
  return it->second;
}

bool DatasetStore::has(const std::string& id) const { return samples_.count(id) > 0; }

std::vector<std::string> DatasetStore::train_ids_for_class(int cls) const {
  auto it = train_by_class_.find(cls);
  return it == train_by_class_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> DatasetStore::test_ids_for_class(int cls) const {
  auto it = test_by_class_.find(cls);
  return it == test_by_class_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<int> DatasetStore::class_labels() const {
  std::set<int> labels;
  for (const auto& [cls, ids] : train_by_class_) labels.insert(cls);
  for (const auto& [cls, ids] : test_by_class_) labels.insert(cls);
  return {labels.begin(), labels.end()};
}

namespace {

Image decode_cifar_record(const unsigned char* pixels) {
  Image img(32, 32, 3);
  for (int ch = 0; ch < 3; ++ch)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        img.at(y, x, ch) = pixels[ch * 1024 + y * 32 + x] / 255.0f;
  return img;
}

void load_cifar_file(const fs::path& path, bool cifar100, bool is_train,
                     int& counter, DatasetStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const int label_bytes = cifar100 ? 2 : 1;
  const int record = label_bytes + 3072;
  std::vector<unsigned char> buf(record);
  while (in.read(reinterpret_cast<char*>(buf.data()), record)) {
    LabeledImage sample;
    sample.label = buf[label_bytes - 1];  // fine label for CIFAR-100
    sample.image = decode_cifar_record(buf.data() + label_bytes);
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s-%06d", is_train ? "train" : "test",
                  counter++);
    sample.id = idbuf;
    store.add(std::move(sample), is_train);
  }
}

Image decode_image_file(const fs::path& path, int resize_hw) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty())
    throw std::runtime_error("cannot decode image " + path.string());
  if (resize_hw > 0 && (bgr.rows != resize_hw || bgr.cols != resize_hw)) {
    cv::Mat resized;
    const auto interp =
        bgr.rows > resize_hw ? cv::INTER_AREA : cv::INTER_LINEAR;
    cv::resize(bgr, resized, cv::Size(resize_hw, resize_hw), 0, 0, interp);
    bgr = resized;
  }
  Image img(bgr.rows, bgr.cols, 3);
  for (int y = 0; y < bgr.rows; ++y) {
    const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2] / 255.0f;
      img.at(y, x, 1) = row[x][1] / 255.0f;
      img.at(y, x, 2) = row[x][0] / 255.0f;
    }
  }
  return img;
}

struct ManifestEntry {
  std::string id, path, split;
  int label;
};

std::vector<ManifestEntry> scan_directory_tree(const fs::path& root,
                                               double train_frac,
                                               double test_frac,
                                               std::uint64_t seed) {
  std::vector<ManifestEntry> entries;
  const bool canonical = fs::is_directory(root / "train") && fs::is_directory(root / "test");

  auto scan_split = [&](const fs::path& base, const std::string& forced_split,
                        const std::string& id_prefix) {
    std::vector<fs::path> class_dirs;
    for (const auto& e : fs::directory_iterator(base))
      if (e.is_directory()) class_dirs.push_back(e.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& dir : class_dirs) {
      int label;
      try {
        label = std::stoi(dir.filename().string());
      } catch (...) {
        continue;  // non-numeric entries are not class dirs
      }
      std::vector<fs::path> files;
      for (const auto& f : fs::directory_iterator(dir))
        if (f.is_regular_file()) files.push_back(f.path());
      std::sort(files.begin(), files.end());

      if (!forced_split.empty()) {
        for (const auto& f : files)
          entries.push_back({id_prefix + dir.filename().string() + "/" +
                                 f.filename().string(),
                             fs::relative(f, root).string(), forced_split, label});
        continue;
      }
      // per-class seeded split: train / val / test fractions
      std::vector<int> order(files.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      Rng rng = Rng(seed).child(0x53504C54ULL + static_cast<std::uint64_t>(label));
      rng.shuffle(order);
      const std::size_t n = files.size();
      const std::size_t n_train = static_cast<std::size_t>(std::llround(train_frac * n));
      const std::size_t n_test = static_cast<std::size_t>(std::llround(test_frac * n));
      for (std::size_t k = 0; k < n; ++k) {
        std::string split;
        if (k < n_train)
          split = "train";
        else if (k >= n - n_test)
          split = "test";
        else
          split = "val";
        const auto& f = files[order[k]];
        entries.push_back({dir.filename().string() + "/" + f.filename().string(),
                           fs::relative(f, root).string(), split, label});
      }
    }
  };

  if (canonical) {
    scan_split(root / "train", "train", "train/");
    scan_split(root / "test", "test", "test/");
  } else {
    scan_split(root, "", "");
  }
  std::sort(entries.begin(), entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
  return entries;
}

}  // namespace

DatasetStore load_cifar(const std::string& root, bool cifar100) {
  const fs::path base(root);
  if (!fs::is_directory(base))
    throw std::runtime_error("dataset not found: " + root);
  DatasetStore store;
  int train_counter = 0, test_counter = 0;

  std::vector<fs::path> train_files, test_files;
  if (cifar100) {
    if (fs::exists(base / "train.bin")) train_files.push_back(base / "train.bin");
    if (fs::exists(base / "test.bin")) test_files.push_back(base / "test.bin");
  } else {
    for (int i = 1; i <= 5; ++i) {
      const fs::path p = base / ("data_batch_" + std::to_string(i) + ".bin");
      if (fs::exists(p)) train_files.push_back(p);
    }
    if (fs::exists(base / "train.bin")) train_files.push_back(base / "train.bin");
    if (fs::exists(base / "test_batch.bin"))
      test_files.push_back(base / "test_batch.bin");
    if (fs::exists(base / "test.bin")) test_files.push_back(base / "test.bin");
  }
  if (train_files.empty() || test_files.empty())
    throw std::runtime_error("dataset not found: no CIFAR binaries under " + root);
  for (const auto& f : train_files)
    load_cifar_file(f, cifar100, true, train_counter, store);
  for (const auto& f : test_files)
    load_cifar_file(f, cifar100, false, test_counter, store);
  return store;
}

DatasetStore load_directory_tree(const std::string& root, int resize_hw,
                                 double train_frac, double test_frac,
                                 std::uint64_t seed) {
  const fs::path base(root);
  if (!fs::is_directory(base))
    throw std::runtime_error("dataset not found: " + root);

  const fs::path manifest_path = base / ".blcl_manifest.tsv";
  std::vector<ManifestEntry> entries;
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ss(line);
      ManifestEntry e;
      if (!(ss >> e.id >> e.path >> e.label >> e.split))
        throw std::runtime_error("malformed manifest line: " + line);
      entries.push_back(std::move(e));
    }
  } else {
    entries = scan_directory_tree(base, train_frac, test_frac, seed);
    std::ofstream out(manifest_path);
    if (out) {
      out << "# id\tpath\tlabel\tsplit\n";
      for (const auto& e : entries)
        out << e.id << '\t' << e.path << '\t' << e.label << '\t' << e.split << '\n';
    }
  }
  if (entries.empty())
    throw std::runtime_error("dataset not found: no class images under " + root);

  DatasetStore store;
  for (const auto& e : entries) {
    if (e.split == "val") continue;  // held out; not used for train/eval
    LabeledImage sample;
    sample.id = e.id;
    sample.label = e.label;
    sample.image = decode_image_file(base / e.path, resize_hw);
    store.add(std::move(sample), e.split == "train");
  }
  return store;
}

DatasetStore load_dataset(DatasetId id, const std::string& root, int resize_hw,
                          std::uint64_t seed) {
  switch (id) {
    case DatasetId::cifar10: return load_cifar(root, false);
    case DatasetId::cifar100: return load_cifar(root, true);
    case DatasetId::gnss:
      return load_directory_tree(root, resize_hw, 0.64, 0.20, seed);
    case DatasetId::imagenet100:
    case DatasetId::custom:
      return load_directory_tree(root, resize_hw, 0.80, 0.20, seed);
  }
  throw std::invalid_argument("load_dataset: bad id");
}

TaskSequence build_task_sequence(const DatasetStore& store, DatasetId id,
                                 const std::vector<int>& partition,
                                 std::uint64_t seed,
                                 const std::vector<int>& class_order) {
  (void)id;
  (void)seed;  // canonical splits are already fixed; seed kept for loaders
  std::vector<int> classes = store.class_labels();
  if (!class_order.empty()) {
    std::set<int> want(class_order.begin(), class_order.end());
    std::set<int> have(classes.begin(), classes.end());
    if (want != have)
      throw std::invalid_argument("class_order must be a permutation of the dataset's classes");
    classes = class_order;
  }
  long total = 0;
  for (int p : partition) {
    if (p < 1) throw std::invalid_argument("partition entries must be >= 1");
    total += p;
  }
  if (total != static_cast<long>(classes.size()))
    throw std::invalid_argument("partition sum does not match the class count");

  TaskSequence seq;
  std::size_t next = 0;
  for (std::size_t t = 0; t < partition.size(); ++t) {
    TaskSpec task;
    task.index = static_cast<int>(t) + 1;
    for (int k = 0; k < partition[t]; ++k) {
      const int cls = classes[next++];
      task.classes.push_back(cls);
      auto train = store.train_ids_for_class(cls);
      auto test = store.test_ids_for_class(cls);
      std::sort(train.begin(), train.end());
      std::sort(test.begin(), test.end());
      task.train_ids.insert(task.train_ids.end(), train.begin(), train.end());
      task.test_ids.insert(task.test_ids.end(), test.begin(), test.end());
    }
    seq.tasks.push_back(std::move(task));
  }
  return seq;
}

Tensor4 make_batch_tensor(const std::vector<const LabeledImage*>& samples) {
  if (samples.empty()) throw std::invalid_argument("make_batch_tensor: empty batch");
  const Image& first = samples.front()->image;
  Tensor4 x(static_cast<int>(samples.size()), first.c, first.h, first.w);
  for (int n = 0; n < x.n; ++n) {
    const Image& img = samples[n]->image;
    if (img.h != first.h || img.w != first.w || img.c != first.c)
      throw std::invalid_argument("make_batch_tensor: mixed image shapes");
    for (int ch = 0; ch < x.c; ++ch)
      for (int y = 0; y < x.h; ++y)
        for (int xx = 0; xx < x.w; ++xx)
          x.at(n, ch, y, xx) = (img.at(y, xx, ch) - kInputMean) / kInputStd;
  }
  return x;
}

BatchIterator::BatchIterator(std::vector<const LabeledImage*> split,
                             int batch_size, bool shuffle, std::uint64_t seed)
    : split_(std::move(split)), batch_size_(batch_size) {
  if (batch_size_ < 1)
    throw std::invalid_argument("BatchIterator: batch_size must be >= 1");
  if (shuffle) {
    Rng rng(seed);
    rng.shuffle(split_);
  }
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= split_.size()) return std::nullopt;
  const std::size_t end = std::min(cursor_ + batch_size_, split_.size());
  std::vector<const LabeledImage*> chunk(split_.begin() + cursor_,
                                         split_.begin() + end);
  cursor_ = end;
  Batch b;
  b.x = make_batch_tensor(chunk);
  for (const auto* s : chunk) {
    b.labels.push_back(s->label);
    b.ids.push_back(s->id);
  }
  return b;
}

void BatchIterator::reset() { cursor_ = 0; }

void write_synthetic_cifar(const std::string& dir, int train_per_class,
                           int test_per_class, std::uint64_t seed) {
  fs::create_directories(dir);
  Rng root(seed);

  // per-class texture: a fixed mix of sinusoid gratings per channel
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<std::array<std::vector<Wave>, 3>> bases;
  for (int cls = 0; cls < 10; ++cls) {
    Rng crng = root.child(200 + cls);
    std::array<std::vector<Wave>, 3> chans;
    for (int ch = 0; ch < 3; ++ch)
      for (int k = 0; k < 3; ++k)
        chans[ch].push_back({crng.uniform(0.5, 4.0), crng.uniform(0.5, 4.0),
                             crng.uniform(0.0, 2.0 * M_PI),
                             crng.uniform(0.15, 0.35)});
    bases.push_back(std::move(chans));
  }

  auto render = [&](int cls, Rng& rng, std::vector<unsigned char>& out) {
    const int dx = rng.uniform_int(0, 31), dy = rng.uniform_int(0, 31);
    const double contrast = rng.uniform(0.5, 1.2);
    const double brightness = rng.uniform(-0.2, 0.2);
    const double jitter = rng.uniform(-0.6, 0.6);  // per-image phase wobble
    std::vector<double> noise(3072);
    for (auto& v : noise) v = rng.normal(0.0, 0.30);
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
          const double u = (x + dx) % 32 / 32.0;
          const double v = (y + dy) % 32 / 32.0;
          double val = 0.5;
          for (const Wave& wv : bases[cls][ch])
            val += wv.amp *
                   std::sin(2.0 * M_PI * (wv.fx * u + wv.fy * v) + wv.phase + jitter);
          val = 0.5 + contrast * (val - 0.5) + brightness +
                noise[ch * 1024 + y * 32 + x];
          val = std::min(1.0, std::max(0.0, val));
          out.push_back(static_cast<unsigned char>(std::lround(val * 255.0)));
        }
  };

  auto write_split = [&](const fs::path& file, int per_class, std::uint64_t tag) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + file.string());
    Rng rng = root.child(tag);
    for (int i = 0; i < per_class; ++i)
      for (int cls = 0; cls < 10; ++cls) {
        std::vector<unsigned char> rec;
        rec.push_back(static_cast<unsigned char>(cls));
        render(cls, rng, rec);
        out.write(reinterpret_cast<const char*>(rec.data()),
                  static_cast<std::streamsize>(rec.size()));
      }
  };

  write_split(fs::path(dir) / "data_batch_1.bin", train_per_class, 1);
  write_split(fs::path(dir) / "test_batch.bin", test_per_class, 2);
}

}  // namespace blcl::data
