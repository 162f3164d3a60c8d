#include <string>

#include "CLI11.hpp"

#include "blcl/driver.hpp"

int main(int argc, char** argv) {
  CLI::App app{"BLCL: class-incremental learning with Bayesian-weighted "
               "contrastive loss"};
  app.require_subcommand(1);

  std::string config_path;
  bool print_defaults = false;
  auto* run = app.add_subcommand("run", "run an experiment from a config file");
  run->add_option("config", config_path, "path to the experiment config");
  run->add_flag("--print-defaults", print_defaults,
                "print the default config with comments and exit");

  std::string checkpoint, dataset, data_root, split = "test", out_dir = ".";
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  eval->add_option("checkpoint", checkpoint, "task checkpoint archive")->required();
  eval->add_option("--dataset", dataset, "dataset id")->required();
  eval->add_option("--data-root", data_root, "dataset directory");
  eval->add_option("--split", split, "train or test (default test)");
  eval->add_option("--out", out_dir, "output directory for reports");

  std::string run_dir;
  auto* report = app.add_subcommand(
      "report", "emit the accuracy table and sigma plots for a finished run");
  report->add_option("run_dir", run_dir, "run output directory")->required();

  auto* defaults = app.add_subcommand("print-defaults",
                                      "print the default config with comments");

  CLI11_PARSE(app, argc, argv);

  if (defaults->parsed()) return blcl::driver::cmd_print_defaults();
  if (run->parsed()) {
    if (print_defaults) return blcl::driver::cmd_print_defaults();
    if (config_path.empty()) {
      std::fprintf(stderr, "error: run needs a config file\n");
      return blcl::driver::kExitConfigError;
    }
    return blcl::driver::cmd_run(config_path);
  }
  if (eval->parsed())
    return blcl::driver::cmd_eval(checkpoint, dataset, data_root, split, out_dir);
  if (report->parsed()) return blcl::driver::cmd_report(run_dir);
  return blcl::driver::kExitConfigError;
}
