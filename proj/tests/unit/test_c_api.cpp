// Exercises the shared library through its C interface only.

#include "dgm/dgm.h"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const char* tiny_lqr = R"([experiment]
problem = lqr
seed = 3

[network]
width = 6
blocks = 1

[train]
iterations = 4
batch_domain = 16
batch_terminal = 8
monitor_every = 2
monitor_samples = 8

[evaluate]
seeds = 3
steps = 20
alphas = 1, 2
bound_samples = 50
bound_resamples = 20
riccati_steps = 200
)";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dgm_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string first_line(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

void count_row(const dgm_train_row*, void* user) { ++*static_cast<int*>(user); }

}  // namespace

TEST_CASE("c api: train, query, save and reload a model") {
  dgm_experiment* exp = nullptr;
  REQUIRE(dgm_experiment_parse(tiny_lqr, "tiny", &exp) == DGM_OK);
  CHECK(std::string(dgm_experiment_name(exp)) == "tiny");
  CHECK(std::string(dgm_experiment_problem(exp)) == "lqr");
  CHECK(dgm_experiment_state_dim(exp) == 2);

  const fs::path dir = scratch("train");
  const std::string log = (dir / "train_log.csv").string();
  int seen = 0;
  dgm_model* model = nullptr;
  REQUIRE(dgm_train(exp, count_row, &seen, log.c_str(), &model) == DGM_OK);
  CHECK(seen == 4);
  CHECK(dgm_model_iterations(model) == 4);
  CHECK(first_line(log) == "iteration,domain_loss,terminal_loss,total_loss,on_policy_error,alpha,lr,wall_ms");

  const std::vector<double> points{0.0, 0.1, -0.2, 0.5, 0.3, 0.4};
  std::vector<double> values(2), controls(4);
  REQUIRE(dgm_model_value(model, points.data(), 2, values.data()) == DGM_OK);
  REQUIRE(dgm_model_control(model, points.data(), 2, controls.data()) == DGM_OK);
  for (double v : values) CHECK(std::isfinite(v));
  for (double u : controls) CHECK(std::isfinite(u));

  const std::string ckpt = (dir / "model.ckpt").string();
  REQUIRE(dgm_model_save(model, ckpt.c_str()) == DGM_OK);
  dgm_model* back = nullptr;
  REQUIRE(dgm_model_load(exp, ckpt.c_str(), &back) == DGM_OK);
  std::vector<double> again(2);
  REQUIRE(dgm_model_value(back, points.data(), 2, again.data()) == DGM_OK);
  CHECK(again == values);

  dgm_model_free(back);
  dgm_model_free(model);
  dgm_experiment_free(exp);
}

TEST_CASE("c api: simulate and evaluate write their CSV files") {
  dgm_experiment* exp = nullptr;
  REQUIRE(dgm_experiment_parse(tiny_lqr, "tiny", &exp) == DGM_OK);
  dgm_model* model = nullptr;
  REQUIRE(dgm_train(exp, nullptr, nullptr, nullptr, &model) == DGM_OK);

  const fs::path dir = scratch("simulate");
  size_t written = 0;
  REQUIRE(dgm_simulate(exp, model, "network", dir.string().c_str(), &written) == DGM_OK);
  CHECK(written == 3);
  CHECK(first_line(dir / "trajectory_0.csv") == "time,agent_id,state,control,running_cost,cum_cost");
  CHECK(first_line(dir / "costs.csv") == "scenario,seed,total_cost");
  REQUIRE(dgm_simulate(exp, nullptr, "alpha=2", dir.string().c_str(), &written) == DGM_OK);

  CHECK(dgm_simulate(exp, nullptr, "network", dir.string().c_str(), &written) != DGM_OK);
  CHECK(dgm_simulate(exp, model, "sideways", dir.string().c_str(), &written) == DGM_ERR_ARGUMENT);
  CHECK(std::string(dgm_last_error()).find("sideways") != std::string::npos);

  const fs::path eval = scratch("evaluate");
  REQUIRE(dgm_evaluate(exp, model, eval.string().c_str()) == DGM_OK);
  CHECK(first_line(eval / "comparison.csv") == "policy,mean_cost,std_error,samples");
  CHECK(first_line(eval / "metrics.csv") == "metric,value");
  CHECK(fs::exists(eval / "bound.csv"));

  dgm_model_free(model);
  dgm_experiment_free(exp);
}

TEST_CASE("c api: errors map to status codes") {
  dgm_experiment* exp = nullptr;
  CHECK(dgm_experiment_parse("[train]\nbogus = 1\n", "bad", &exp) == DGM_ERR_CONFIG);
  CHECK(exp == nullptr);
  CHECK(dgm_last_error_line() == 2);
  CHECK(std::string(dgm_last_error()).find("bogus") != std::string::npos);

  CHECK(dgm_experiment_load("/nonexistent/dir/x.cfg", &exp) != DGM_OK);
  CHECK(dgm_experiment_parse(nullptr, "x", &exp) == DGM_ERR_ARGUMENT);
  std::string odd_steps = tiny_lqr;
  odd_steps.replace(odd_steps.find("steps = 20"), 10, "steps = 10");
  CHECK(dgm_experiment_parse(odd_steps.c_str(), "odd", &exp) == DGM_ERR_CONFIG);
  CHECK(dgm_train(nullptr, nullptr, nullptr, nullptr, nullptr) == DGM_ERR_ARGUMENT);

  REQUIRE(dgm_experiment_parse(tiny_lqr, "tiny", &exp) == DGM_OK);
  dgm_model* model = nullptr;
  CHECK(dgm_model_load(exp, "/nonexistent/model.ckpt", &model) == DGM_ERR_IO);

  const std::string other = std::string(tiny_lqr).replace(std::string(tiny_lqr).find("width = 6"), 9, "width = 7");
  dgm_experiment* wide = nullptr;
  REQUIRE(dgm_experiment_parse(other.c_str(), "wide", &wide) == DGM_OK);
  REQUIRE(dgm_train(wide, nullptr, nullptr, nullptr, &model) == DGM_OK);
  const fs::path dir = scratch("mismatch");
  const std::string ckpt = (dir / "wide.ckpt").string();
  REQUIRE(dgm_model_save(model, ckpt.c_str()) == DGM_OK);
  dgm_model_free(model);
  model = nullptr;
  CHECK(dgm_model_load(exp, ckpt.c_str(), &model) == DGM_ERR_CONFIG);
  CHECK(model == nullptr);

  dgm_experiment_free(wide);
  dgm_experiment_free(exp);
}

TEST_CASE("c api: divergence keeps the partial log") {
  std::string text = tiny_lqr;
  text.replace(text.find("iterations = 4"), 14, "iterations = 4\nlr = 1e6\ndivergence_threshold = 1e-9");
  dgm_experiment* exp = nullptr;
  REQUIRE(dgm_experiment_parse(text.c_str(), "diverge", &exp) == DGM_OK);
  const fs::path dir = scratch("diverge");
  const std::string log = (dir / "train_log.csv").string();
  dgm_model* model = nullptr;
  CHECK(dgm_train(exp, nullptr, nullptr, log.c_str(), &model) == DGM_ERR_DIVERGED);
  CHECK(model == nullptr);
  CHECK(fs::exists(log));
  dgm_experiment_free(exp);
}
