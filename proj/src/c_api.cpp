#include "dgm/dgm.h"

#include "dgm/diagnostics.hpp"
#include "dgm/experiment.hpp"
#include "dgm/field.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

struct dgm_experiment {
  std::shared_ptr<const dgm::Experiment> exp;
};

struct dgm_model {
  std::shared_ptr<const dgm::Experiment> exp;
  dgm::Checkpoint ck;
};

namespace {

thread_local std::string last_error;
thread_local int last_line = 0;

dgm_status fail(dgm_status status, const std::string& message, int line = 0) {
  last_error = message;
  last_line = line;
  return status;
}

// Maps library exceptions onto status codes; the order matters because the
// specific types derive from dgm::Error.
template <class F>
dgm_status guarded(F&& body) {
  last_error.clear();
  last_line = 0;
  try {
    return body();
  } catch (const dgm::ConfigError& e) {
    return fail(DGM_ERR_CONFIG, e.what(), e.line());
  } catch (const dgm::IoError& e) {
    return fail(DGM_ERR_IO, e.what());
  } catch (const dgm::DivergenceError& e) {
    return fail(DGM_ERR_DIVERGED, e.what());
  } catch (const dgm::ShapeError& e) {
    return fail(DGM_ERR_SHAPE, e.what());
  } catch (const dgm::NonFiniteError& e) {
    return fail(DGM_ERR_NON_FINITE, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DGM_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(DGM_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(DGM_ERR_INTERNAL, "unknown exception");
  }
}

dgm_status null_arg(const char* what) { return fail(DGM_ERR_ARGUMENT, std::string(what) + " is null"); }

dgm_train_row to_c(const dgm::TrainLogRow& r) {
  return dgm_train_row{r.iteration, r.domain_loss, r.terminal_loss, r.total_loss,
                       r.on_policy_error, r.alpha, r.lr, r.wall_ms};
}

dgm::Matrix map_points(const dgm_model* model, const double* points, size_t rows) {
  const auto cols = static_cast<Eigen::Index>(model->exp->net().arch().input_dim);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      points, static_cast<Eigen::Index>(rows), cols);
}

std::filesystem::path out_dir_path(const char* out_dir) {
  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

extern "C" {

const char* dgm_last_error(void) { return last_error.c_str(); }

int dgm_last_error_line(void) { return last_line; }

const char* dgm_version(void) { return "1.0.0"; }

dgm_status dgm_experiment_load(const char* config_path, dgm_experiment** out) {
  if (config_path == nullptr) return null_arg("config_path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    auto exp = std::make_shared<const dgm::Experiment>(dgm::load_config(config_path));
    *out = new dgm_experiment{std::move(exp)};
    return DGM_OK;
  });
}

dgm_status dgm_experiment_parse(const char* text, const char* source_name, dgm_experiment** out) {
  if (text == nullptr) return null_arg("text");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    dgm::ExperimentConfig cfg = dgm::parse_config(text, source_name ? source_name : "");
    if (source_name != nullptr && *source_name) cfg.name = source_name;
    *out = new dgm_experiment{std::make_shared<const dgm::Experiment>(std::move(cfg))};
    return DGM_OK;
  });
}

void dgm_experiment_free(dgm_experiment* exp) { delete exp; }

dgm_status dgm_experiment_set_seed(dgm_experiment* exp, uint64_t seed) {
  if (exp == nullptr) return null_arg("experiment");
  return guarded([&] {
    dgm::ExperimentConfig cfg = exp->exp->config();
    cfg.seed = seed;
    cfg.train.seed = seed;
    exp->exp = std::make_shared<const dgm::Experiment>(std::move(cfg));
    return DGM_OK;
  });
}

const char* dgm_experiment_name(const dgm_experiment* exp) {
  return exp ? exp->exp->config().name.c_str() : "";
}

const char* dgm_experiment_problem(const dgm_experiment* exp) {
  return exp ? exp->exp->config().problem.c_str() : "";
}

int dgm_experiment_state_dim(const dgm_experiment* exp) {
  return exp ? exp->exp->problem().dim() : 0;
}

dgm_status dgm_train(const dgm_experiment* exp, dgm_progress_fn progress, void* user,
                     const char* log_csv, dgm_model** out) {
  if (exp == nullptr) return null_arg("experiment");
  if (out == nullptr) return null_arg("out");
  std::vector<dgm::TrainLogRow> partial;
  dgm::ProgressFn fn;
  if (progress != nullptr) {
    fn = [&](const dgm::TrainLogRow& r) {
      const dgm_train_row row = to_c(r);
      progress(&row, user);
    };
  }
  const dgm_status status = guarded([&] {
    dgm::TrainResult result = exp->exp->train(fn, &partial);
    if (log_csv != nullptr) dgm::write_train_log(log_csv, result.log);
    *out = new dgm_model{exp->exp, std::move(result.checkpoint)};
    return DGM_OK;
  });
  if (status == DGM_ERR_DIVERGED && log_csv != nullptr) {
    const std::string message = last_error;
    try {
      dgm::write_train_log(log_csv, partial);
    } catch (const std::exception&) {
    }
    last_error = message;
  }
  return status;
}

dgm_status dgm_model_load(const dgm_experiment* exp, const char* path, dgm_model** out) {
  if (exp == nullptr) return null_arg("experiment");
  if (path == nullptr) return null_arg("path");
  if (out == nullptr) return null_arg("out");
  return guarded([&] {
    dgm::Checkpoint ck = dgm::load_checkpoint(path);
    exp->exp->check_checkpoint(ck);
    *out = new dgm_model{exp->exp, std::move(ck)};
    return DGM_OK;
  });
}

dgm_status dgm_model_save(const dgm_model* model, const char* path) {
  if (model == nullptr) return null_arg("model");
  if (path == nullptr) return null_arg("path");
  return guarded([&] {
    dgm::save_checkpoint(path, model->ck);
    return DGM_OK;
  });
}

void dgm_model_free(dgm_model* model) { delete model; }

uint64_t dgm_model_iterations(const dgm_model* model) { return model ? model->ck.meta.iteration : 0; }

dgm_status dgm_model_value(const dgm_model* model, const double* points, size_t rows, double* values) {
  if (model == nullptr) return null_arg("model");
  if (rows > 0 && (points == nullptr || values == nullptr)) return null_arg("buffer");
  return guarded([&] {
    if (rows == 0) return DGM_OK;
    const dgm::Matrix j = dgm::field_values(model->exp->net(), model->ck.params, map_points(model, points, rows));
    for (size_t i = 0; i < rows; ++i) values[i] = j(static_cast<Eigen::Index>(i), 0);
    return DGM_OK;
  });
}

dgm_status dgm_model_control(const dgm_model* model, const double* points, size_t rows, double* controls) {
  if (model == nullptr) return null_arg("model");
  if (rows > 0 && (points == nullptr || controls == nullptr)) return null_arg("buffer");
  return guarded([&] {
    if (rows == 0) return DGM_OK;
    const dgm::Matrix p = map_points(model, points, rows);
    const dgm::NetworkPolicy policy(model->exp->problem(), model->exp->net(), model->ck.params);
    const dgm::Matrix u = policy.controls_at(p.col(0), p.rightCols(p.cols() - 1));
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        controls, u.rows(), u.cols()) = u;
    return DGM_OK;
  });
}

dgm_status dgm_simulate(const dgm_experiment* exp, const dgm_model* model, const char* policy,
                        const char* out_dir, size_t* written) {
  if (exp == nullptr) return null_arg("experiment");
  if (policy == nullptr) return null_arg("policy");
  if (out_dir == nullptr) return null_arg("out_dir");
  return guarded([&] {
    dgm::PolicySpec spec;
    try {
      spec = dgm::PolicySpec::parse(policy);
    } catch (const dgm::ConfigError& e) {
      return fail(DGM_ERR_ARGUMENT, e.what());
    }
    const dgm::Experiment& e = *exp->exp;
    const auto pol = e.make_policy(spec, model ? &model->ck : nullptr);
    dgm::Matrix starts;
    std::vector<std::uint64_t> seeds;
    e.scenarios(e.config().eval.seeds, starts, seeds);
    const auto trajectories = dgm::rollout_batch(e.problem(), *pol, starts, e.config().eval.steps, seeds);
    const auto dir = out_dir_path(out_dir);
    std::ofstream costs(dir / "costs.csv");
    if (!costs) throw dgm::IoError("cannot open '" + (dir / "costs.csv").string() + "' for writing");
    costs.precision(10);
    costs << "scenario,seed,total_cost\n";
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
      dgm::write_trajectory_csv(dir / ("trajectory_" + std::to_string(i) + ".csv"), trajectories[i]);
      costs << i << ',' << trajectories[i].seed << ',' << trajectories[i].total_cost() << '\n';
    }
    if (written != nullptr) *written = trajectories.size();
    return DGM_OK;
  });
}

dgm_status dgm_evaluate(const dgm_experiment* exp, const dgm_model* model, const char* out_dir) {
  if (exp == nullptr) return null_arg("experiment");
  if (out_dir == nullptr) return null_arg("out_dir");
  return guarded([&] {
    const dgm::Evaluation ev = dgm::evaluate(*exp->exp, model ? &model->ck : nullptr);
    const auto dir = out_dir_path(out_dir);
    dgm::write_comparison_csv(dir / "comparison.csv", ev.comparison);
    dgm::write_metrics_csv(dir / "metrics.csv", ev.metrics);
    if (!ev.bound.empty()) dgm::write_bound_csv(dir / "bound.csv", ev.bound);
    return DGM_OK;
  });
}

dgm_status dgm_check(const char* config_path, const char* checkpoint_path, dgm_check_fn report,
                     void* user, int* failures) {
  return guarded([&] {
    dgm::CheckOptions opt;
    if (config_path != nullptr) opt.config = config_path;
    if (checkpoint_path != nullptr) opt.checkpoint = checkpoint_path;
    dgm::CheckReportFn fn;
    if (report != nullptr) {
      fn = [&](const dgm::CheckResult& r) { report(r.name.c_str(), r.passed ? 1 : 0, r.detail.c_str(), user); };
    }
    int failed = 0;
    std::string first;
    for (const auto& r : dgm::run_checks(opt, fn)) {
      if (!r.passed) {
        if (first.empty()) first = r.name + ": " + r.detail;
        ++failed;
      }
    }
    if (failures != nullptr) *failures = failed;
    if (failed > 0) return fail(DGM_ERR_CHECK_FAILED, std::to_string(failed) + " check(s) failed, first " + first);
    return DGM_OK;
  });
}

}  // extern "C"
