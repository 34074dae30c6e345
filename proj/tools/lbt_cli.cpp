// Command-line driver. Talks to the library only through the C interface.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "lbt/lbt.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

const char* const kStages[] = {"train-mut", "gen-adv",  "build-surrogate", "calibrate",
                               "prioritize", "evaluate", "retrain",         "report"};

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string stage;
  std::string method;
};

int exit_code_for(lbt_status s) {
  if (s == LBT_OK) return kExitOk;
  return s == LBT_ERR_CONFIG ? kExitConfig : kExitStage;
}

int report_failure(lbt_status s) {
  std::cerr << "lbt: " << lbt_status_string(s) << ": " << lbt_last_error_message() << "\n";
  return exit_code_for(s);
}

int execute(const Options& opt, const std::string& stage) {
  lbt_experiment* exp = nullptr;
  const std::uint64_t seed = opt.seed.value_or(0);
  lbt_status s = lbt_experiment_open(opt.config.c_str(), opt.out.c_str(), opt.seed ? &seed : nullptr, &exp);
  if (s != LBT_OK) return report_failure(s);

  if (stage.empty())
    s = lbt_experiment_run_all(exp);
  else
    s = lbt_experiment_run_stage(exp, stage.c_str(), opt.method.empty() ? nullptr : opt.method.c_str());

  std::cout << lbt_experiment_last_output(exp);
  const int code = s == LBT_OK ? kExitOk : report_failure(s);
  lbt_experiment_destroy(exp);
  return code;
}

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "experiment JSON")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", opt.out, "output directory")->required();
  cmd->add_option("--seed", opt.seed, "override the config's global seed");
  cmd->add_option("--method", opt.method, "restrict prioritize/evaluate/retrain to one method");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning-based testing of neural classifiers"};
  app.set_version_flag("--version", std::string(lbt_version()));
  app.require_subcommand(1);

  Options opt;
  std::string chosen;

  CLI::App* run = app.add_subcommand("run", "run every stage in order, or one stage with --stage");
  add_common(run, opt);
  run->add_option("--stage", opt.stage, "single stage to run")->check(CLI::IsMember(std::vector<std::string>(
                                                                     std::begin(kStages), std::end(kStages))));
  run->callback([&] { chosen = opt.stage; });

  for (const char* name : kStages) {
    CLI::App* cmd = app.add_subcommand(name, std::string("run the ") + name + " stage");
    add_common(cmd, opt);
    cmd->callback([&chosen, name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  return execute(opt, chosen);
}
