#include "dgm/diagnostics.hpp"
#include "dgm/value_net.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dgm;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dgm_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path write_text(const std::filesystem::path& dir, const std::string& text) {
  const auto p = dir / "f.csv";
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("schema validator accepts well-formed files and names the first problem") {
  const auto dir = scratch_dir("schema");
  const CsvSchema s = comparison_schema();
  CHECK(validate_csv(write_text(dir, "policy,mean_cost,std_error,samples\nzero,1.5,0.1,50\n"), s).empty());
  CHECK(validate_csv(write_text(dir, "policy,mean_cost,std_error,samples\nnetwork,nan,0,50\n"), s).empty());

  const std::string header = validate_csv(write_text(dir, "policy,cost,std_error,samples\nzero,1,0,1\n"), s);
  CHECK(header.find("header") != std::string::npos);
  const std::string fields = validate_csv(write_text(dir, "policy,mean_cost,std_error,samples\nzero,1,0\n"), s);
  CHECK(fields.find("row 1") != std::string::npos);
  const std::string value = validate_csv(write_text(dir, "policy,mean_cost,std_error,samples\nzero,abc,0,1\n"), s);
  CHECK(value.find("mean_cost") != std::string::npos);
  CHECK_FALSE(validate_csv(write_text(dir, "policy,mean_cost,std_error,samples\n"), s).empty());
  CHECK_FALSE(validate_csv(dir / "missing.csv", s).empty());
}

TEST_CASE("batch schema has one column per coordinate") {
  const CsvSchema s = batch_schema(3);
  REQUIRE(s.columns.size() == 5);
  CHECK(s.columns[0] == "t");
  CHECK(s.columns[3] == "x3");
  CHECK(s.columns[4] == "provenance");
}

TEST_CASE("library finite-difference diagnostics are within tolerance") {
  const InputDerivativeError e = input_derivative_fd_error(20, 4);
  CHECK(e.first_order < 1e-5);
  CHECK(e.laplacian < 1e-5);
  CHECK(loss_gradient_fd_error(10, 9) < 1e-4);
  CHECK(riccati_residual_max(100, 10000, 1) < 1e-6);
}

TEST_CASE("check battery passes on a fresh build and names a corrupted checkpoint") {
  const auto dir = scratch_dir("battery");
  CheckOptions opt;
  opt.scratch = dir;
  const auto results = run_checks(opt);
  CHECK(results.size() >= 9);
  for (const auto& r : results) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.passed);
  }

  Checkpoint ck;
  ck.arch = NetArch{ArchKind::residual, 3, 4, 1};
  ck.params = init_params(ck.arch, 1);
  save_checkpoint(dir / "good.ckpt", ck);
  std::string bytes;
  {
    std::ifstream in(dir / "good.ckpt", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  bytes.resize(bytes.size() - 9);
  std::ofstream(dir / "bad.ckpt", std::ios::binary) << bytes;

  CheckOptions bad;
  bad.scratch = dir / "bad";
  bad.checkpoint = dir / "bad.ckpt";
  std::vector<std::string> names;
  const auto again = run_checks(bad, [&](const CheckResult& r) { names.push_back(r.name); });
  REQUIRE_FALSE(again.empty());
  CHECK(again.front().name == "checkpoint_file");
  CHECK_FALSE(again.front().passed);
  CHECK(names.front() == "checkpoint_file");
}
