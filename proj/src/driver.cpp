#include "blcl/driver.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "blcl/checkpoint.hpp"
#include "blcl/config.hpp"
#include "blcl/evaluate.hpp"
#include "blcl/svg_plot.hpp"
#include "blcl/trainer.hpp"

namespace fs = std::filesystem;

namespace blcl::driver {

namespace {

std::string task_checkpoint_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "task_%04d.ckpt", t);
  return buf;
}

std::string exemplar_manifest_name(int t) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "exemplars_task_%04d.tsv", t);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json task_result_json(const train::TaskResult& r) {
  nlohmann::json j;
  j["task"] = r.task_index;
  j["chosen_spec"] = r.chosen_spec;
  j["epochs"] = r.per_epoch.size();
  j["metrics"] = nlohmann::json::parse(metrics::to_json(r.eval, -1));
  return j;
}

train::TaskResult task_result_from_json(const nlohmann::json& j) {
  train::TaskResult r;
  r.task_index = j.at("task").get<int>();
  r.chosen_spec = j.at("chosen_spec").get<int>();
  r.eval = metrics::report_from_json(j.at("metrics").dump());
  return r;
}

// metrics.csv holds rows for completed tasks only; a resumed run rewrites the
// file keeping the prefix that belongs to tasks <= completed.
void truncate_metrics_csv(const fs::path& csv, int completed) {
  if (!fs::exists(csv)) return;
  std::ifstream in(csv);
  std::vector<std::string> keep;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("task,", 0) == 0) {
      keep.push_back(line);
      continue;
    }
    const int task = std::atoi(line.c_str());
    if (task >= 1 && task <= completed) keep.push_back(line);
  }
  in.close();
  std::ofstream out(csv, std::ios::trunc);
  for (const auto& l : keep) out << l << '\n';
}

int classify_exception() {
  try {
    throw;
  } catch (const train::DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const io::CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitArtifactError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << "\n";
    if (msg.find("dataset not found") != std::string::npos ||
        msg.find("cannot open config") != std::string::npos)
      return kExitConfigError;
    return kExitArtifactError;
  }
}

}  // namespace

int cmd_run(const std::string& config_path) {
  try {
    io::ExperimentConfig cfg = io::parse_config_file(config_path);
    if (const char* env_root = std::getenv("BLCL_DATA_ROOT"))
      if (*env_root) cfg.data_root = env_root;
    cfg.validate();

    const auto id = data::parse_dataset_id(cfg.dataset);
    const auto preset = nn::backbone_preset(cfg.backbone);
    data::DatasetStore store =
        data::load_dataset(id, cfg.data_root, preset.input_hw, cfg.seed);
    data::TaskSequence seq = data::build_task_sequence(
        store, id, cfg.partition, cfg.seed, cfg.class_order);

    // debug/testing escape hatch: stop the sequence early
    if (const char* env_max = std::getenv("BLCL_MAX_TASKS")) {
      const int max_tasks = std::atoi(env_max);
      if (max_tasks >= 1 && max_tasks < static_cast<int>(seq.tasks.size()))
        seq.tasks.resize(max_tasks);
    }

    nn::ArchitecturePlan plan = cfg.to_plan();
    if (plan.per_task.size() > seq.tasks.size())
      plan.per_task.resize(seq.tasks.size());
    train::TrainConfig tcfg = cfg.to_train_config();

    const fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    const fs::path state_path = out_dir / "run_state.json";
    const fs::path csv_path = out_dir / "metrics.csv";

    // resume from the last completed task when state + checkpoint are present
    train::ResumeState resume;
    std::vector<int> classes_per_task;
    if (fs::exists(state_path)) {
      std::ifstream in(state_path);
      nlohmann::json state = nlohmann::json::parse(in);
      if (state.at("config_hash").get<std::string>() != hex64(cfg.hash()))
        throw std::invalid_argument(
            "output_dir holds a run with a different config; refusing to mix");
      for (const auto& tj : state.at("completed")) {
        resume.prior_tasks.push_back(task_result_from_json(tj));
        resume.per_task_acc.push_back(
            tj.at("metrics").at("per_task_acc").back().get<double>());
      }
      resume.completed_tasks = static_cast<int>(resume.prior_tasks.size());
      if (resume.completed_tasks > 0) {
        auto ckpt = io::load_checkpoint(
            (out_dir / task_checkpoint_name(resume.completed_tasks)).string());
        resume.model = std::move(ckpt.model);
        resume.weights = ckpt.weights;
        classes_per_task = ckpt.classes_per_task;
        resume.store = memory::read_manifest(
            (out_dir / exemplar_manifest_name(resume.completed_tasks)).string(),
            cfg.memory_budget);
        truncate_metrics_csv(csv_path, resume.completed_tasks);
        // rebuild the per-epoch stats of completed tasks from the CSV log
        std::ifstream csv_in(csv_path);
        std::string line;
        std::getline(csv_in, line);
        while (std::getline(csv_in, line)) {
          if (line.empty()) continue;
          std::istringstream ss(line);
          std::vector<std::string> f;
          std::string field;
          while (std::getline(ss, field, ',')) f.push_back(field);
          if (f.size() < 7) continue;
          const int task = std::stoi(f[0]);
          if (task < 1 || task > resume.completed_tasks) continue;
          train::EpochStats es;
          es.sigma1 = std::stod(f[2]);
          es.sigma2 = std::stod(f[3]);
          es.l_ce = std::stod(f[4]);
          es.l_cl = std::stod(f[5]);
          es.total = std::stod(f[6]);
          resume.prior_tasks[task - 1].per_epoch.push_back(es);
        }
        std::cout << "resuming after task " << resume.completed_tasks << "\n";
      }
    }

    if (resume.completed_tasks == 0) {
      std::ofstream csv(csv_path, std::ios::trunc);
      csv << "task,epoch,sigma1,sigma2,l_ce,l_cl,total\n";
      std::ofstream cfg_copy(out_dir / "config_resolved.txt");
      cfg_copy << cfg.canonical_text();
    }

    nlohmann::json completed = nlohmann::json::array();
    for (const auto& r : resume.prior_tasks) completed.push_back(task_result_json(r));

    std::ofstream csv(csv_path, std::ios::app);
    std::ofstream adapt_log(out_dir / "adapt_decisions.log", std::ios::app);

    train::RunHooks hooks;
    hooks.on_epoch = [&](int task, int epoch, const train::EpochStats& s) {
      char row[256];
      std::snprintf(row, sizeof(row), "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                    task, epoch, s.sigma1, s.sigma2, s.l_ce, s.l_cl, s.total);
      csv << row;
      csv.flush();
    };
    hooks.on_task_done = [&](int task, nn::ModelState& model,
                             const loss::LossWeights& weights,
                             const memory::ExemplarSet& ex,
                             const train::TaskResult& result) {
      while (static_cast<int>(classes_per_task.size()) < task)
        classes_per_task.push_back(static_cast<int>(
            seq.tasks[classes_per_task.size()].classes.size()));
      io::save_checkpoint(model, weights, task, classes_per_task,
                          (out_dir / task_checkpoint_name(task)).string());
      memory::write_manifest(ex, (out_dir / exemplar_manifest_name(task)).string());
      completed.push_back(task_result_json(result));
      nlohmann::json state;
      state["config_hash"] = hex64(cfg.hash());
      state["completed"] = completed;
      std::ofstream st(state_path, std::ios::trunc);
      st << state.dump(2) << '\n';
    };
    hooks.on_divergence = [&](nn::ModelState& model) {
      loss::LossWeights w;
      std::vector<int> cpt = classes_per_task;
      if (cpt.empty()) cpt.push_back(model.num_classes);
      try {
        io::save_checkpoint(model, w, model.current_task(), cpt,
                            (out_dir / "diverged.ckpt").string());
      } catch (...) {
      }
    };
    hooks.on_adapt_decision = [&](int task, const adapt::SimilarityReport& rep,
                                  double tau,
                                  const std::vector<std::pair<int, double>>& probed,
                                  int chosen) {
      adapt_log << "task " << task << " aggregate_similarity " << rep.aggregate
                << " tau " << tau << " probed [";
      for (std::size_t i = 0; i < probed.size(); ++i) {
        if (i) adapt_log << ' ';
        adapt_log << probed[i].first << ':' << probed[i].second;
      }
      adapt_log << "] chosen_spec " << chosen << '\n';
      adapt_log.flush();
    };

    train::RunReport report =
        train::run_sequence(seq, plan, tcfg, store, hooks, &resume);

    nlohmann::json summary;
    summary["config_hash"] = hex64(cfg.hash());
    summary["seed"] = cfg.seed;
    summary["dataset"] = cfg.dataset;
    summary["weighting_mode"] = cfg.weighting_mode;
    summary["per_task_acc"] = report.per_task_acc;
    summary["avg_acc"] = report.avg_acc;
    summary["parameter_count"] = report.final_parameter_count;
    nlohmann::json tasks = nlohmann::json::array();
    for (const auto& r : report.tasks) tasks.push_back(task_result_json(r));
    summary["tasks"] = tasks;
    const auto& last = report.tasks.back().eval;
    summary["final"] = {{"f1", last.f1},
                        {"f2", last.f2},
                        {"db", last.db_score.infinite ? -1.0 : last.db_score.value},
                        {"db_infinite", last.db_score.infinite},
                        {"ch", last.ch_score.infinite ? -1.0 : last.ch_score.value},
                        {"ch_infinite", last.ch_score.infinite}};
    std::ofstream out(out_dir / "run_summary.json", std::ios::trunc);
    out << summary.dump(2) << '\n';

    std::cout << "run complete: avg_acc " << report.avg_acc << " over "
              << report.per_task_acc.size() << " tasks\n";
    return kExitOk;
  } catch (...) {
    return classify_exception();
  }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset,
             const std::string& data_root, const std::string& split,
             const std::string& out_dir) {
  try {
    io::Checkpoint ckpt = io::load_checkpoint(checkpoint_path);
    const auto id = data::parse_dataset_id(dataset);
    std::string root = data_root;
    if (const char* env_root = std::getenv("BLCL_DATA_ROOT"))
      if (*env_root) root = env_root;
    data::DatasetStore store =
        data::load_dataset(id, root, ckpt.model.preset.input_hw, 1);

    const bool use_train = split == "train";
    if (split != "train" && split != "test")
      throw std::invalid_argument("split must be 'train' or 'test'");

    std::vector<const data::LabeledImage*> samples;
    std::map<int, int> head_idx;
    for (int i = 0; i < static_cast<int>(ckpt.model.class_order.size()); ++i)
      head_idx[ckpt.model.class_order[i]] = i;
    for (int cls : ckpt.model.class_order) {
      const auto ids = use_train ? store.train_ids_for_class(cls)
                                 : store.test_ids_for_class(cls);
      if (ids.empty())
        throw std::invalid_argument("dataset has no " + split +
                                    " samples for class " + std::to_string(cls));
      for (const auto& sid : ids) samples.push_back(&store.get(sid));
    }

    auto inference = metrics::run_inference(ckpt.model, samples, 64);
    std::vector<int> labels;
    for (const auto* s : samples) labels.push_back(head_idx.at(s->label));
    const int k = static_cast<int>(ckpt.model.class_order.size());

    metrics::MetricsReport report;
    report.confusion = metrics::confusion_matrix(inference.pred_rows, labels, k);
    report.per_task_acc = {metrics::accuracy(report.confusion)};
    report.avg_acc = report.per_task_acc[0];
    report.f1 = metrics::f_beta(report.confusion, 1.0);
    report.f2 = metrics::f_beta(report.confusion, 2.0);
    report.db_score = metrics::davies_bouldin(inference.embeddings, labels);
    report.ch_score = metrics::calinski_harabasz(inference.embeddings, labels);

    fs::create_directories(out_dir);
    std::ofstream mj(fs::path(out_dir) / "metrics.json");
    mj << metrics::to_json(report) << '\n';
    metrics::write_confusion_csv(report.confusion,
                                 (fs::path(out_dir) / "confusion.csv").string());
    std::ofstream emb(fs::path(out_dir) / "embeddings.csv");
    metrics::export_embeddings(ckpt.model, samples, emb);

    std::cout << "eval: accuracy " << report.per_task_acc[0] << " on " << k
              << " classes, " << samples.size() << " samples\n";
    return kExitOk;
  } catch (...) {
    return classify_exception();
  }
}

int cmd_report(const std::string& run_dir) {
  try {
    const fs::path dir(run_dir);
    const fs::path summary_path = dir / "run_summary.json";
    const fs::path csv_path = dir / "metrics.csv";
    if (!fs::exists(summary_path) || !fs::exists(csv_path))
      throw io::CheckpointError("incomplete run directory: " + run_dir);

    std::ifstream sin(summary_path);
    nlohmann::json summary = nlohmann::json::parse(sin);

    // per-epoch sigma trajectories grouped by task
    std::map<int, std::vector<double>> sigma1, sigma2;
    std::ifstream cin(csv_path);
    std::string line;
    std::getline(cin, line);  // header
    while (std::getline(cin, line)) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      std::string field;
      std::vector<std::string> fields;
      while (std::getline(ss, field, ',')) fields.push_back(field);
      if (fields.size() < 7) continue;
      const int task = std::stoi(fields[0]);
      sigma1[task].push_back(std::stod(fields[2]));
      sigma2[task].push_back(std::stod(fields[3]));
    }
    if (sigma1.empty())
      throw io::CheckpointError("incomplete run directory: empty metrics.csv");

    std::ostringstream table;
    table << "Task accuracies (cumulative test set after each task)\n";
    table << "task  acc\n";
    const auto accs = summary.at("per_task_acc").get<std::vector<double>>();
    for (std::size_t i = 0; i < accs.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%4zu  %6.2f\n", i + 1, accs[i]);
      table << buf;
    }
    char buf[256];
    const auto& fin = summary.at("final");
    std::snprintf(buf, sizeof(buf),
                  "avg   %6.2f\nfinal F1 %.3f  F2 %.3f  DB %s  CH %s\n",
                  summary.at("avg_acc").get<double>(),
                  fin.at("f1").get<double>(), fin.at("f2").get<double>(),
                  fin.at("db_infinite").get<bool>()
                      ? "inf"
                      : std::to_string(fin.at("db").get<double>()).c_str(),
                  fin.at("ch_infinite").get<bool>()
                      ? "inf"
                      : std::to_string(fin.at("ch").get<double>()).c_str());
    table << buf;

    std::ofstream rt(dir / "report.txt");
    rt << table.str();
    std::cout << table.str();

    for (const auto& [task, s1] : sigma1) {
      std::vector<io::PlotSeries> series;
      series.push_back({"sigma1", "#1f77b4", s1});
      series.push_back({"sigma2", "#d62728", sigma2[task]});
      const std::string svg = io::render_line_plot(
          "sigma trajectories, task " + std::to_string(task), "epoch", series);
      char name[48];
      std::snprintf(name, sizeof(name), "sigma_task_%04d.svg", task);
      std::ofstream out(dir / name);
      out << svg;
    }
    std::cout << "wrote " << sigma1.size() << " sigma plots to " << run_dir
              << "\n";
    return kExitOk;
  } catch (...) {
    return classify_exception();
  }
}

int cmd_print_defaults() {
  std::cout << io::default_config_text();
  return kExitOk;
}

}  // namespace blcl::driver
