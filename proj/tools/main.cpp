// Command-line front end: `run` executes an experiment config, `report`
// re-summarizes a results directory, and `nc-check` / `oracle-audit` are run
// aliases that default the experiment so they work without a config file.
// Exit codes: 0 ok, 1 config error, 2 runtime failure.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "experiments.hpp"

namespace fs = std::filesystem;
using bidlab::cli::ConfigError;

namespace {

std::string output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("BIDLAB_OUTPUT_ROOT"); env && *env) return env;
  return ".";
}

int do_run(const std::string& config_path, const std::string& root_flag, int jobs,
           const std::string& forced_experiment) {
  nlohmann::json resolved;
  std::string out_dir;
  try {
    nlohmann::json user;
    if (config_path.empty()) {
      if (forced_experiment.empty()) throw ConfigError("run: config path required");
      user = nlohmann::json{{"experiment", forced_experiment}};
    } else {
      user = bidlab::cli::load_config_file(config_path);
      if (!forced_experiment.empty()) {
        if (!user.contains("experiment"))
          user["experiment"] = forced_experiment;
        else if (user["experiment"] != forced_experiment)
          throw ConfigError("config: experiment '" + user["experiment"].dump() +
                            "' does not match subcommand '" + forced_experiment + "'");
      }
    }
    resolved = bidlab::cli::resolve_config(user);
    out_dir = (fs::path(output_root(root_flag)) /
               resolved.at("output_dir").get<std::string>())
                  .string();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  }

  try {
    const auto outcome = bidlab::cli::run_experiment(resolved, out_dir, jobs);
    for (const auto& a : outcome.artifacts) std::cout << "wrote " << a << "\n";
    if (!outcome.failures.empty()) {
      for (const auto& f : outcome.failures) std::cerr << "job failed: " << f << "\n";
      std::cerr << "partial artifacts kept in " << out_dir << "\n";
      return 2;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bidlab: bid-parameterization experiment runner"};
  app.require_subcommand(1);

  std::string config_path, root_flag, results_dir;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  auto add_run_options = [&](CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("config", config_path, "JSON experiment config");
    if (config_required) opt->required();
    cmd->add_option("--output-root", root_flag,
                    "Artifact root (default: $BIDLAB_OUTPUT_ROOT, then .)");
    cmd->add_option("--jobs", jobs, "Worker threads for independent jobs")
        ->check(CLI::PositiveNumber);
  };

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  add_run_options(run, true);
  auto* ncc = app.add_subcommand("nc-check", "Run the NC diagnostic battery");
  add_run_options(ncc, false);
  auto* audit = app.add_subcommand("oracle-audit",
                                   "Sweep the per-period oracle against grid brute force");
  add_run_options(audit, false);
  auto* report = app.add_subcommand("report", "Summarize a results directory");
  report->add_option("dir", results_dir, "Directory written by run")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return do_run(config_path, root_flag, jobs, "");
    if (ncc->parsed()) return do_run(config_path, root_flag, jobs, "nc-check");
    if (audit->parsed()) return do_run(config_path, root_flag, jobs, "oracle-audit");
    return bidlab::cli::report_directory(results_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 2;
  }
}
