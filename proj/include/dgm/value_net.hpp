#pragma once

#include "dgm/field.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace dgm {

enum class ArchKind : std::uint32_t { residual = 0, mlp = 1 };

/// Network shape. input_dim is the state dimension plus one (time first).
///
/// residual: lift (affine + SiLU) -> `blocks` x [affine, SiLU, affine, + skip] -> affine head
/// mlp:      lift (affine + SiLU) -> `blocks` x [affine, SiLU]               -> affine head
struct NetArch {
  ArchKind kind = ArchKind::residual;
  int input_dim = 0;
  int width = 0;
  int blocks = 3;

  void validate() const;
  friend bool operator==(const NetArch&, const NetArch&) = default;
};

std::size_t param_count(const NetArch& arch);

/// Width whose parameter count is closest to target (ties go to the smaller width).
int closest_width(ArchKind kind, int input_dim, int blocks, std::size_t target);

/// Glorot-uniform weights, zero biases; deterministic per seed. The output
/// layer weights are multiplied by head_scale.
ParamStore init_params(const NetArch& arch, std::uint64_t seed, double head_scale = 1.0);

/// J_theta(t, x) over a fixed architecture. Parameters live outside the net.
class ValueNet final : public ScalarField {
 public:
  explicit ValueNet(NetArch arch);

  const NetArch& arch() const noexcept { return arch_; }
  int state_dim() const override { return arch_.input_dim - 1; }

  /// Throws ShapeError unless params has this architecture's layout.
  void check_params(const ParamStore& params) const;

  double forward(const ParamStore& params, double t, std::span<const double> x) const;
  /// Plain evaluation without a tape (B x 1).
  Matrix forward_batch(const ParamStore& params, const Matrix& points) const;

  ad::FieldJet record_jet(ad::Tape& tape, std::span<const ad::Var> params,
                          const Matrix& points) const override;
  ad::Var record_value(ad::Tape& tape, std::span<const ad::Var> params,
                       ad::Var points) const override;

 private:
  NetArch arch_;
};

struct TrainingMeta {
  std::uint64_t iteration = 0;
  std::uint64_t seed = 0;
  std::string problem;
};

struct Checkpoint {
  static constexpr std::uint32_t format_version = 1;

  NetArch arch;
  ParamStore params;
  TrainingMeta meta;
};

/// Binary container: magic, version, arch, metadata, little-endian float64
/// parameters, trailing CRC-32.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dgm
