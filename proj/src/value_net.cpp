#include "dgm/value_net.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

namespace dgm {

void NetArch::validate() const {
  if (input_dim < 2) throw ShapeError("NetArch: input_dim must be >= 2 (time + state)");
  if (width < 1) throw ShapeError("NetArch: width must be >= 1");
  if (blocks < 1) throw ShapeError("NetArch: blocks must be >= 1");
  if (kind != ArchKind::residual && kind != ArchKind::mlp) throw ShapeError("NetArch: bad kind");
}

std::size_t param_count(const NetArch& arch) {
  arch.validate();
  const std::size_t d = static_cast<std::size_t>(arch.input_dim);
  const std::size_t w = static_cast<std::size_t>(arch.width);
  const std::size_t b = static_cast<std::size_t>(arch.blocks);
  const std::size_t layers_per_block = arch.kind == ArchKind::residual ? 2 : 1;
  return (d * w + w) + b * layers_per_block * (w * w + w) + (w + 1);
}

int closest_width(ArchKind kind, int input_dim, int blocks, std::size_t target) {
  int best = 1;
  std::size_t best_gap = static_cast<std::size_t>(-1);
  for (int w = 1;; ++w) {
    const std::size_t count = param_count(NetArch{kind, input_dim, w, blocks});
    const std::size_t gap = count > target ? count - target : target - count;
    if (gap < best_gap) {
      best_gap = gap;
      best = w;
    }
    if (count > target) break;
  }
  return best;
}

namespace {

struct LayerShape {
  std::string name;
  int out;
  int in;
};

std::vector<LayerShape> layer_shapes(const NetArch& a) {
  std::vector<LayerShape> layers{{"lift", a.width, a.input_dim}};
  for (int b = 0; b < a.blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    if (a.kind == ArchKind::residual) {
      layers.push_back({prefix + ".fc1", a.width, a.width});
      layers.push_back({prefix + ".fc2", a.width, a.width});
    } else {
      layers.push_back({prefix + ".fc", a.width, a.width});
    }
  }
  layers.push_back({"head", 1, a.width});
  return layers;
}

Matrix silu_of(const Matrix& z) {
  return z.unaryExpr([](double v) { return ad::silu_derivative(v, 0); });
}

void check_finite(const Matrix& m, long layer) {
  if (!m.allFinite()) {
    throw NonFiniteError("value net: non-finite activation at layer " + std::to_string(layer),
                         layer);
  }
}

}  // namespace

ParamStore init_params(const NetArch& arch, std::uint64_t seed, double head_scale) {
  arch.validate();
  std::mt19937_64 rng(seed);
  ParamStore params;
  for (const auto& layer : layer_shapes(arch)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(layer.out, layer.in);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    params.add(layer.name + ".weight", std::move(w));
    params.add(layer.name + ".bias", Matrix::Zero(1, layer.out));
  }
  params[params.size() - 2] *= head_scale;
  return params;
}

ValueNet::ValueNet(NetArch arch) : arch_(arch) { arch_.validate(); }

void ValueNet::check_params(const ParamStore& params) const {
  const auto layers = layer_shapes(arch_);
  if (params.size() != 2 * layers.size()) {
    throw ShapeError("value net: expected " + std::to_string(2 * layers.size()) +
                     " parameter tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Matrix& w = params[2 * i];
    const Matrix& b = params[2 * i + 1];
    if (w.rows() != layers[i].out || w.cols() != layers[i].in || b.rows() != 1 ||
        b.cols() != layers[i].out) {
      throw ShapeError("value net: layer '" + layers[i].name + "' has weight " + shape_str(w) +
                       " and bias " + shape_str(b));
    }
  }
}

Matrix ValueNet::forward_batch(const ParamStore& params, const Matrix& points) const {
  check_params(params);
  if (points.cols() != arch_.input_dim) {
    throw ShapeError("value net: points " + shape_str(points) + " do not match input_dim " +
                     std::to_string(arch_.input_dim));
  }
  auto affine = [&](const Matrix& h, std::size_t layer) -> Matrix {
    return (h * params[2 * layer].transpose()).rowwise() + params[2 * layer + 1].row(0);
  };
  Matrix h = silu_of(affine(points, 0));
  std::size_t layer = 1;
  for (int b = 0; b < arch_.blocks; ++b) {
    if (arch_.kind == ArchKind::residual) {
      Matrix inner = silu_of(affine(h, layer));
      h += affine(inner, layer + 1);
      layer += 2;
    } else {
      h = silu_of(affine(h, layer));
      layer += 1;
    }
  }
  return affine(h, layer);
}

double ValueNet::forward(const ParamStore& params, double t, std::span<const double> x) const {
  if (static_cast<int>(x.size()) + 1 != arch_.input_dim) {
    throw ShapeError("value net: state has " + std::to_string(x.size()) +
                     " entries, expected " + std::to_string(arch_.input_dim - 1));
  }
  Matrix point(1, arch_.input_dim);
  point(0, 0) = t;
  for (std::size_t i = 0; i < x.size(); ++i) point(0, static_cast<Eigen::Index>(i) + 1) = x[i];
  return forward_batch(params, point)(0, 0);
}

ad::FieldJet ValueNet::record_jet(ad::Tape& tape, std::span<const ad::Var> params,
                                  const Matrix& points) const {
  if (points.cols() != arch_.input_dim) {
    throw ShapeError("value net: points " + shape_str(points) + " do not match input_dim " +
                     std::to_string(arch_.input_dim));
  }
  ad::Jet h = ad::silu(ad::affine(ad::seed_jet(tape, points), params[0], params[1]));
  check_finite(h.value.value(), 0);
  std::size_t layer = 1;
  for (int b = 0; b < arch_.blocks; ++b) {
    if (arch_.kind == ArchKind::residual) {
      ad::Jet inner = ad::silu(ad::affine(h, params[2 * layer], params[2 * layer + 1]));
      h = ad::add(h, ad::affine(inner, params[2 * layer + 2], params[2 * layer + 3]));
      layer += 2;
    } else {
      h = ad::silu(ad::affine(h, params[2 * layer], params[2 * layer + 1]));
      layer += 1;
    }
    check_finite(h.value.value(), b + 1);
    check_finite(h.tangent.value(), b + 1);
  }
  ad::FieldJet out = ad::project(h, params[2 * layer], params[2 * layer + 1]);
  check_finite(out.laplacian.value(), arch_.blocks + 1);
  return out;
}

ad::Var ValueNet::record_value(ad::Tape& tape, std::span<const ad::Var> params,
                               ad::Var points) const {
  (void)tape;
  if (points.cols() != arch_.input_dim) {
    throw ShapeError("value net: points " + shape_str(points.value()) +
                     " do not match input_dim " + std::to_string(arch_.input_dim));
  }
  auto affine = [&](ad::Var h, std::size_t layer) {
    return ad::add_row(ad::matmul_nt(h, params[2 * layer]), params[2 * layer + 1]);
  };
  ad::Var h = ad::silu(affine(points, 0));
  std::size_t layer = 1;
  for (int b = 0; b < arch_.blocks; ++b) {
    if (arch_.kind == ArchKind::residual) {
      h = ad::add(h, affine(ad::silu(affine(h, layer)), layer + 1));
      layer += 2;
    } else {
      h = ad::silu(affine(h, layer));
      layer += 1;
    }
  }
  ad::Var out = affine(h, layer);
  check_finite(out.value(), arch_.blocks + 1);
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr std::array<char, 8> kMagic{'D', 'G', 'M', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char>& data() { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& buf, std::size_t end)
      : buf_(buf), end_(end) {}

  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t remaining() const { return end_ - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw IoError("checkpoint: truncated file");
  }
  const std::vector<unsigned char>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const unsigned char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, data, static_cast<uInt>(n)));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ValueNet(ckpt.arch).check_params(ckpt.params);
  Writer w;
  w.bytes(kMagic.data(), kMagic.size());
  w.u32(Checkpoint::format_version);
  w.u32(static_cast<std::uint32_t>(ckpt.arch.kind));
  w.u32(static_cast<std::uint32_t>(ckpt.arch.input_dim));
  w.u32(static_cast<std::uint32_t>(ckpt.arch.width));
  w.u32(static_cast<std::uint32_t>(ckpt.arch.blocks));
  w.u64(ckpt.meta.iteration);
  w.u64(ckpt.meta.seed);
  w.u32(static_cast<std::uint32_t>(ckpt.meta.problem.size()));
  w.bytes(ckpt.meta.problem.data(), ckpt.meta.problem.size());
  const auto flat = ckpt.params.flatten();
  w.u64(flat.size());
  for (double v : flat) w.f64(v);
  w.u32(crc_of(w.data().data(), w.data().size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("checkpoint: cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(w.data().data()),
            static_cast<std::streamsize>(w.data().size()));
  if (!out) throw IoError("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open '" + path.string() + "'");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < kMagic.size() + 8) throw IoError("checkpoint: truncated file");
  const std::size_t body = buf.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(buf[body + i]) << (8 * i);
  if (stored != crc_of(buf.data(), body)) {
    throw IoError("checkpoint: checksum mismatch in '" + path.string() + "' (corrupted file)");
  }

  Reader r(buf, body);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw IoError("checkpoint: bad magic in '" + path.string() + "'");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::format_version) {
    throw IoError("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t kind = r.u32();
  if (kind > 1) throw IoError("checkpoint: unknown architecture kind");
  ckpt.arch.kind = static_cast<ArchKind>(kind);
  ckpt.arch.input_dim = static_cast<int>(r.u32());
  ckpt.arch.width = static_cast<int>(r.u32());
  ckpt.arch.blocks = static_cast<int>(r.u32());
  ckpt.arch.validate();
  ckpt.meta.iteration = r.u64();
  ckpt.meta.seed = r.u64();
  const std::uint32_t name_len = r.u32();
  ckpt.meta.problem.resize(name_len);
  r.bytes(ckpt.meta.problem.data(), name_len);
  const std::uint64_t count = r.u64();
  if (count != param_count(ckpt.arch)) {
    throw IoError("checkpoint: parameter count " + std::to_string(count) +
                  " does not match architecture");
  }
  std::vector<double> flat(count);
  for (auto& v : flat) v = r.f64();
  if (r.remaining() != 0) throw IoError("checkpoint: trailing bytes");
  ckpt.params = init_params(ckpt.arch, 0);
  ckpt.params.assign_flat(flat);
  return ckpt;
}

}  // namespace dgm
