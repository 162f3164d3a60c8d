#pragma once

#include <string>

namespace blcl::driver {

// Exit codes: 0 ok, 2 config/data error, 3 artifact error, 4 divergence.
constexpr int kExitOk = 0;
constexpr int kExitConfigError = 2;
constexpr int kExitArtifactError = 3;
constexpr int kExitDivergence = 4;

// Runs an experiment from a config file. An output directory holding task
// checkpoints resumes at the next task and reproduces the uninterrupted run.
int cmd_run(const std::string& config_path);

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset,
             const std::string& data_root, const std::string& split,
             const std::string& out_dir);

int cmd_report(const std::string& run_dir);

int cmd_print_defaults();

}  // namespace blcl::driver
