#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dgm {

struct InputDerivativeError {
  double first_order = 0.0;  ///< worst relative error of dJ/dt and grad_x J
  double laplacian = 0.0;
};

/// Jet derivatives of `cases` random residual nets (state dimension 1..5,
/// cycling) against central differences at one random point each.
InputDerivativeError input_derivative_fd_error(int cases, std::uint64_t seed);

/// Worst relative error of the reverse-mode loss gradient against central
/// differences over `coords` random parameters of a one-agent toy problem.
double loss_gradient_fd_error(int coords, std::uint64_t seed);

/// Largest |HJB residual| of the Riccati value at `points` random (t, x) in
/// [0, 1] x [-2, 2]^2.
double riccati_residual_max(int points, int riccati_steps, std::uint64_t seed);

struct CsvSchema {
  std::string name;
  std::vector<std::string> columns;
  /// Columns holding free text; every other column must parse as a number.
  std::vector<std::string> text_columns;
  /// Numeric columns that may be left empty.
  std::vector<std::string> optional_columns;
};

CsvSchema trajectory_schema();
CsvSchema train_log_schema();
CsvSchema bound_schema();
CsvSchema comparison_schema();
CsvSchema metrics_schema();
CsvSchema batch_schema(int dim);

/// Empty when the file has exactly the schema header, at least one row and
/// well-formed rows; otherwise a message naming the first problem.
std::string validate_csv(const std::filesystem::path& path, const CsvSchema& schema);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  /// Optional experiment config to validate.
  std::filesystem::path config;
  /// Optional checkpoint to verify (and match against the config when given).
  std::filesystem::path checkpoint;
  /// Scratch directory for round-trip files; a temporary one when empty.
  std::filesystem::path scratch;
};

using CheckReportFn = std::function<void(const CheckResult&)>;

/// Fast invariant battery: autodiff finite differences, Riccati residual,
/// checkpoint integrity, sampler and SDE invariants and CSV schemas. Each
/// check is reported as it finishes; an exception inside a check counts as a
/// failure of that check.
std::vector<CheckResult> run_checks(const CheckOptions& options, const CheckReportFn& report = {});

}  // namespace dgm
