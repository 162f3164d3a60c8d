#include "blcl/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace blcl::io {

namespace {

constexpr char kMagic[8] = {'B', 'L', 'C', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(nn::ModelState& model, const loss::LossWeights& weights,
                     int task_index, const std::vector<int>& classes_per_task,
                     const std::string& path) {
  nlohmann::json header;
  header["format"] = "blcl-checkpoint";
  header["version"] = kVersion;
  header["task_index"] = task_index;
  header["preset"] = model.plan.preset;
  header["total_blocks"] = model.plan.total_blocks;
  header["embedding_dim"] = model.plan.embedding_dim;
  header["seed"] = model.seed;
  header["class_order"] = model.class_order;
  header["classes_per_task"] = classes_per_task;
  std::vector<int> branch_specs;
  for (const auto& b : model.branches) branch_specs.push_back(b.spec.conv_layers);
  header["branch_specs"] = branch_specs;
  header["sigma"] = {{"log_sigma1", weights.log_sigma1},
                     {"log_sigma2", weights.log_sigma2}};

  auto params = model.params();
  nlohmann::json plist = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : params) {
    plist.push_back({{"name", p.name},
                     {"shape", p.shape},
                     {"offset", offset},
                     {"count", p.value->size()}});
    offset += p.value->size();
  }
  header["params"] = plist;

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(hlen));
  for (const auto& p : params)
    out.write(reinterpret_cast<const char*>(p.value->data()),
              static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  if (!out) throw CheckpointError("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);

  char magis[8];
  std::uint32_t version = 0;
  std::uint64_t hlen = 0;
  in.read(magis, sizeof(magis));
  if (!in || std::memcmp(magis, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a blcl checkpoint: " + path);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kVersion)
    throw CheckpointError("unsupported checkpoint version in " + path);
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (1ULL << 30))
    throw CheckpointError("corrupt checkpoint header in " + path);

  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw CheckpointError("truncated checkpoint header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_str);
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError("corrupt checkpoint header in " + path);
  }

  Checkpoint ckpt;
  try {
    ckpt.task_index = header.at("task_index").get<int>();
    ckpt.classes_per_task = header.at("classes_per_task").get<std::vector<int>>();
    ckpt.weights.log_sigma1 = header.at("sigma").at("log_sigma1").get<double>();
    ckpt.weights.log_sigma2 = header.at("sigma").at("log_sigma2").get<double>();

    const auto branch_specs = header.at("branch_specs").get<std::vector<int>>();
    nn::ArchitecturePlan plan;
    plan.total_blocks = header.at("total_blocks").get<int>();
    plan.embedding_dim = header.at("embedding_dim").get<int>();
    plan.preset = header.at("preset").get<std::string>();
    for (int s : branch_specs) plan.per_task.push_back({s});

    ckpt.model = nn::build_model(plan, ckpt.classes_per_task.at(0),
                                 header.at("seed").get<std::uint64_t>());
    for (std::size_t t = 2; t <= branch_specs.size(); ++t)
      nn::expand_for_task(ckpt.model, static_cast<int>(t),
                          ckpt.classes_per_task.at(t - 1),
                          {branch_specs[t - 1]});
    ckpt.model.class_order = header.at("class_order").get<std::vector<int>>();
    nn::set_trainable(ckpt.model, ckpt.task_index);

    std::map<std::string, nn::ParamRef> by_name;
    for (auto& p : ckpt.model.params()) by_name.emplace(p.name, p);

    for (const auto& entry : header.at("params")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::uint64_t count = entry.at("count").get<std::uint64_t>();
      auto it = by_name.find(name);
      if (it == by_name.end() || it->second.value->size() != count)
        throw CheckpointError("checkpoint/architecture mismatch on " + name);
      in.read(reinterpret_cast<char*>(it->second.value->data()),
              static_cast<std::streamsize>(count * sizeof(float)));
      if (!in) throw CheckpointError("truncated checkpoint data in " + path);
    }
  } catch (const nlohmann::json::exception&) {
    throw CheckpointError("corrupt checkpoint header in " + path);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint rebuild failed: ") + e.what());
  } catch (const std::out_of_range& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  return ckpt;
}

}  // namespace blcl::io
