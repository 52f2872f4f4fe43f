#include "helpers.hpp"

#include "dgm/value_net.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dgm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dgm_unit_" + name);
}

// Parameter count by walking the initialised tensors, independent of param_count().
std::size_t counted(const NetArch& arch) { return init_params(arch, 0).total_count(); }

}  // namespace

TEST_CASE("parameter count follows from the architecture fields") {
  for (ArchKind kind : {ArchKind::residual, ArchKind::mlp}) {
    for (int d : {2, 3, 21}) {
      for (int w : {1, 7, 64}) {
        for (int b : {1, 3}) {
          const NetArch arch{kind, d, w, b};
          CHECK(param_count(arch) == counted(arch));
        }
      }
    }
  }
}

TEST_CASE("widths matching the reported parameter counts") {
  // 20-agent HK network: 370 968 trainable parameters reported.
  const int hk = closest_width(ArchKind::residual, 21, 3, 370968);
  CHECK(hk == 246);
  const std::size_t hk_count = param_count({ArchKind::residual, 21, hk, 3});
  CHECK(hk_count == 370231);
  CHECK(std::abs(static_cast<double>(hk_count) - 370968.0) / 370968.0 < 0.002);

  // LQR network: 91 000 - 92 000 reported. With three residual blocks no width
  // lands inside the range; the closest is within 1% of its edge.
  for (int w = 1; w < 200; ++w) {
    const std::size_t c = param_count({ArchKind::residual, 3, w, 3});
    CHECK_FALSE((c >= 91000 && c <= 92000));
  }
  const int lqr = closest_width(ArchKind::residual, 3, 3, 91500);
  CHECK(lqr == 123);
  CHECK(param_count({ArchKind::residual, 3, lqr, 3}) == 92128);
}

TEST_CASE("architecture validation") {
  CHECK_THROWS_AS((NetArch{ArchKind::residual, 1, 4, 3}.validate()), ShapeError);
  CHECK_THROWS_AS((NetArch{ArchKind::residual, 3, 0, 3}.validate()), ShapeError);
  CHECK_THROWS_AS((NetArch{ArchKind::residual, 3, 4, 0}.validate()), ShapeError);
  CHECK_NOTHROW((NetArch{ArchKind::mlp, 3, 4, 1}.validate()));
}

TEST_CASE("initialisation is deterministic per seed") {
  const NetArch arch{ArchKind::residual, 3, 9, 3};
  CHECK(init_params(arch, 5).flatten() == init_params(arch, 5).flatten());
  CHECK(init_params(arch, 5).flatten() != init_params(arch, 6).flatten());
  const ParamStore p = init_params(arch, 5);
  CHECK(p.name(0) == "lift.weight");
  CHECK(p.name(p.size() - 1) == "head.bias");
}

TEST_CASE("head scale only touches the output weights") {
  const NetArch arch{ArchKind::residual, 3, 9, 3};
  const ParamStore a = init_params(arch, 5);
  const ParamStore b = init_params(arch, 5, 0.01);
  for (std::size_t i = 0; i + 2 < a.size(); ++i) CHECK(a[i] == b[i]);
  CHECK((b[a.size() - 2] - 0.01 * a[a.size() - 2]).cwiseAbs().maxCoeff() < 1e-18);
  CHECK(b[a.size() - 1].isZero());
}

TEST_CASE("parameters of the wrong layout are rejected") {
  const ValueNet net({ArchKind::residual, 3, 4, 2});
  CHECK_THROWS_AS(net.check_params(init_params({ArchKind::residual, 3, 5, 2}, 0)), ShapeError);
  CHECK_THROWS_AS(net.check_params(init_params({ArchKind::mlp, 3, 4, 2}, 0)), ShapeError);
  const std::vector<double> x{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(net.forward(init_params(net.arch(), 0), 0.0, x), ShapeError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Checkpoint ck;
  ck.arch = {ArchKind::residual, 21, 6, 3};
  ck.params = testing::random_params(ck.arch, 3);
  ck.meta = {42, 7, "hk_measure"};
  const auto path = temp_file("roundtrip.ckpt");
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.arch == ck.arch);
  CHECK(back.meta.iteration == 42);
  CHECK(back.meta.seed == 7);
  CHECK(back.meta.problem == "hk_measure");
  CHECK(back.params.flatten() == ck.params.flatten());
  CHECK(back.params.same_layout(ck.params));
  std::filesystem::remove(path);
}

TEST_CASE("corrupted or truncated checkpoints fail with a named error") {
  Checkpoint ck;
  ck.arch = {ArchKind::mlp, 3, 5, 2};
  ck.params = init_params(ck.arch, 1);
  ck.meta.problem = "lqr";
  const auto path = temp_file("corrupt.ckpt");
  save_checkpoint(path, ck);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(80);
    char c = 0;
    f.read(&c, 1);
    f.seekp(80);
    c = static_cast<char>(c ^ 0x5a);
    f.write(&c, 1);
  }
  try {
    load_checkpoint(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
  std::filesystem::resize_file(path, 20);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
}
