#include "dgm/dgm.h"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace {

enum Exit { exit_ok = 0, exit_failure = 1, exit_config = 2, exit_diverged = 3 };

struct Options {
  std::string config;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string policy;
  bool verbose = false;
};

using ExperimentPtr = std::unique_ptr<dgm_experiment, decltype(&dgm_experiment_free)>;
using ModelPtr = std::unique_ptr<dgm_model, decltype(&dgm_model_free)>;

int report(dgm_status status, const std::string& context) {
  std::cerr << "error: " << context << ": " << dgm_last_error() << "\n";
  switch (status) {
    case DGM_ERR_CONFIG:
    case DGM_ERR_SHAPE:
    case DGM_ERR_ARGUMENT: return exit_config;
    case DGM_ERR_DIVERGED: return exit_diverged;
    default: return exit_failure;
  }
}

std::string out_dir(const Options& o, const dgm_experiment* exp) {
  if (!o.out.empty()) return o.out;
  return (std::filesystem::path("out") / dgm_experiment_name(exp)).string();
}

// Loads the config and applies --seed; returns an exit code on failure.
std::optional<int> open_experiment(const Options& o, ExperimentPtr& exp) {
  dgm_experiment* raw = nullptr;
  if (const dgm_status s = dgm_experiment_load(o.config.c_str(), &raw); s != DGM_OK) {
    return report(s, "config");
  }
  exp.reset(raw);
  if (o.seed) {
    if (const dgm_status s = dgm_experiment_set_seed(exp.get(), *o.seed); s != DGM_OK) return report(s, "seed");
  }
  return std::nullopt;
}

std::optional<int> open_model(const Options& o, const dgm_experiment* exp, ModelPtr& model) {
  if (o.checkpoint.empty()) return std::nullopt;
  dgm_model* raw = nullptr;
  if (const dgm_status s = dgm_model_load(exp, o.checkpoint.c_str(), &raw); s != DGM_OK) {
    return report(s, o.checkpoint);
  }
  model.reset(raw);
  return std::nullopt;
}

void print_row(const dgm_train_row* row, void*) {
  std::printf("iter %6llu  loss %.6g  domain %.6g  terminal %.6g", static_cast<unsigned long long>(row->iteration),
              row->total_loss, row->domain_loss, row->terminal_loss);
  if (!std::isnan(row->on_policy_error)) std::printf("  on-policy %.6g", row->on_policy_error);
  std::printf("  alpha %.4g  lr %.4g\n", row->alpha, row->lr);
  std::fflush(stdout);
}

int cmd_train(const Options& o) {
  ExperimentPtr exp(nullptr, dgm_experiment_free);
  if (auto code = open_experiment(o, exp)) return *code;
  const std::filesystem::path dir = out_dir(o, exp.get());
  std::filesystem::create_directories(dir);
  const std::string log = (dir / "train_log.csv").string();
  const std::string ckpt = o.checkpoint.empty() ? (dir / "model.ckpt").string() : o.checkpoint;

  dgm_model* raw = nullptr;
  const dgm_status s = dgm_train(exp.get(), o.verbose ? print_row : nullptr, nullptr, log.c_str(), &raw);
  if (s != DGM_OK) return report(s, "training");
  ModelPtr model(raw, dgm_model_free);
  if (const dgm_status w = dgm_model_save(model.get(), ckpt.c_str()); w != DGM_OK) return report(w, ckpt);
  std::cout << "checkpoint " << ckpt << "\nlog " << log << "\n";
  return exit_ok;
}

int cmd_simulate(const Options& o) {
  ExperimentPtr exp(nullptr, dgm_experiment_free);
  if (auto code = open_experiment(o, exp)) return *code;
  ModelPtr model(nullptr, dgm_model_free);
  if (auto code = open_model(o, exp.get(), model)) return *code;
  std::string policy = o.policy;
  if (policy.empty()) {
    if (!model) {
      std::cerr << "error: simulate needs --checkpoint or --policy\n";
      return exit_config;
    }
    policy = "network";
  }
  const std::string dir = out_dir(o, exp.get());
  size_t written = 0;
  if (const dgm_status s = dgm_simulate(exp.get(), model.get(), policy.c_str(), dir.c_str(), &written); s != DGM_OK) {
    return report(s, "simulate");
  }
  std::cout << written << " trajectories of policy " << policy << " in " << dir << "\n";
  return exit_ok;
}

int cmd_evaluate(const Options& o) {
  ExperimentPtr exp(nullptr, dgm_experiment_free);
  if (auto code = open_experiment(o, exp)) return *code;
  ModelPtr model(nullptr, dgm_model_free);
  if (auto code = open_model(o, exp.get(), model)) return *code;
  const std::string dir = out_dir(o, exp.get());
  if (const dgm_status s = dgm_evaluate(exp.get(), model.get(), dir.c_str()); s != DGM_OK) {
    return report(s, "evaluate");
  }
  std::cout << "comparison " << (std::filesystem::path(dir) / "comparison.csv").string() << "\n";
  if (o.verbose) {
    std::ifstream in(std::filesystem::path(dir) / "comparison.csv");
    std::cout << in.rdbuf();
  }
  return exit_ok;
}

void print_check(const char* name, int passed, const char* detail, void* user) {
  const bool verbose = *static_cast<const bool*>(user);
  if (passed) {
    std::cout << "PASS " << name << (verbose ? std::string(" (") + detail + ")" : std::string()) << "\n";
  } else {
    std::cout << "FAIL " << name << ": " << detail << "\n";
  }
  std::cout.flush();
}

int cmd_check(const Options& o) {
  int failures = 0;
  bool verbose = o.verbose;
  const dgm_status s = dgm_check(o.config.empty() ? nullptr : o.config.c_str(),
                                 o.checkpoint.empty() ? nullptr : o.checkpoint.c_str(), print_check,
                                 &verbose, &failures);
  if (s == DGM_ERR_CHECK_FAILED) {
    std::cout << failures << " check(s) failed\n";
    return exit_failure;
  }
  if (s != DGM_OK) return report(s, "check");
  std::cout << "all checks passed\n";
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep Galerkin solver for stochastic optimal control"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", o.config, "experiment config file");
    if (config_required) c->required();
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
    sub->add_option("--seed", o.seed, "override the experiment seed");
    sub->add_option("--out", o.out, "output directory (default out/<config name>)");
    sub->add_flag("--verbose", o.verbose, "print progress");
  };

  auto* train = app.add_subcommand("train", "train a value network; --checkpoint sets the output file");
  add_common(train, true);
  auto* simulate = app.add_subcommand("simulate", "write trajectory CSVs of one policy");
  add_common(simulate, true);
  simulate->add_option("--policy", o.policy, "network | zero | oracle | alpha=<value>");
  auto* evaluate = app.add_subcommand("evaluate", "compare the network with baseline policies");
  add_common(evaluate, true);
  auto* check = app.add_subcommand("check", "run the fast invariant battery");
  add_common(check, false);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return cmd_train(o);
  if (simulate->parsed()) return cmd_simulate(o);
  if (evaluate->parsed()) return cmd_evaluate(o);
  return cmd_check(o);
}
