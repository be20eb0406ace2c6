#include "icoreg/groupnet.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "icoreg/error.hpp"

namespace icoreg::groupnet {

namespace {

void check_conv(const GroupConvLayer& l, int in_dim, const char* where) {
  if (l.in_dim != in_dim || l.support < 1 || l.weights.cols() != static_cast<Eigen::Index>(l.support) * l.in_dim ||
      l.weights.rows() != l.bias.size())
    throw Error(ErrorKind::kDimensionMismatch, std::string(where) + ": group convolution shapes do not chain");
}

GroupConvLayer make_conv(int in, int out, std::mt19937_64& rng) {
  GroupConvLayer l;
  l.in_dim = in;
  l.support = icosa::kNeighborhoodSize;
  const double a = std::sqrt(6.0 / (icosa::kNeighborhoodSize * in + out));
  std::uniform_real_distribution<double> u(-a, a);
  l.weights.resize(out, static_cast<Eigen::Index>(l.support) * in);
  for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = u(rng);
  l.bias = Eigen::VectorXd::Zero(out);
  return l;
}

DenseLayer make_dense(int in, int out, std::mt19937_64& rng) {
  DenseLayer l;
  const double a = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-a, a);
  l.weights.resize(out, in);
  for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = u(rng);
  l.bias = Eigen::VectorXd::Zero(out);
  return l;
}

template <class M>
void snap(M& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

Matrix relu(Matrix m) { return m.cwiseMax(0.0); }

}  // namespace

Eigen::VectorXd row_mean(const Matrix& m) {
  // Sorted per-column summation: bit-identical under any row permutation.
  Eigen::VectorXd mean(m.cols());
  std::vector<double> col(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) col[static_cast<std::size_t>(r)] = m(r, c);
    std::sort(col.begin(), col.end());
    double s = 0.0;
    for (double v : col) s += v;
    mean[c] = s / static_cast<double>(m.rows());
  }
  return mean;
}

void NetworkWeights::validate() const {
  if (embedder.empty()) throw Error(ErrorKind::kDimensionMismatch, "embedder has no layers");
  int d = embedder.front().in_dim;
  for (const auto& l : embedder) {
    check_conv(l, d, "embedder");
    d = l.out_dim();
  }
  if (regressor_convs.empty() != regressor_mlp.empty())
    throw Error(ErrorKind::kDimensionMismatch, "regressor needs both convolution and MLP layers");
  if (!has_regressor()) return;
  d = 2 * input_dim() + 2 * descriptor_dim();
  for (const auto& l : regressor_convs) {
    check_conv(l, d, "regressor");
    d = l.out_dim();
  }
  for (const auto& l : regressor_mlp) {
    if (l.in_dim() != d || l.bias.size() != l.out_dim())
      throw Error(ErrorKind::kDimensionMismatch, "regressor MLP shapes do not chain");
    d = l.out_dim();
  }
  if (d != 4) throw Error(ErrorKind::kDimensionMismatch, "regressor must output a 4-vector");
}

NetworkWeights NetworkWeights::zeros_like() const {
  NetworkWeights z = *this;
  for (auto* v : {&z.embedder, &z.regressor_convs})
    for (auto& l : *v) {
      l.weights.setZero();
      l.bias.setZero();
    }
  for (auto& l : z.regressor_mlp) {
    l.weights.setZero();
    l.bias.setZero();
  }
  return z;
}

NetworkWeights init_weights(const NetworkShape& shape, std::uint64_t seed, bool with_regressor) {
  if (shape.input_dim < 1) throw Error(ErrorKind::kInvalidArgument, "input dimension must be positive");
  std::mt19937_64 rng(seed);
  NetworkWeights w;
  int d = shape.input_dim;
  for (int width : shape.embedder_widths) {
    w.embedder.push_back(make_conv(d, width, rng));
    d = width;
  }
  if (with_regressor) {
    d = 2 * shape.input_dim + 2 * d;
    for (int width : shape.regressor_widths) {
      w.regressor_convs.push_back(make_conv(d, width, rng));
      d = width;
    }
    for (int width : shape.mlp_hidden) {
      w.regressor_mlp.push_back(make_dense(d, width, rng));
      d = width;
    }
    w.regressor_mlp.push_back(make_dense(d, 4, rng));
    w.regressor_mlp.back().bias = Eigen::Vector4d(1.0, 0.0, 0.0, 0.0);
  }
  snap_to_float(w);
  w.validate();
  return w;
}

void snap_to_float(NetworkWeights& w) {
  for (auto* v : {&w.embedder, &w.regressor_convs})
    for (auto& l : *v) {
      snap(l.weights);
      snap(l.bias);
    }
  for (auto& l : w.regressor_mlp) {
    snap(l.weights);
    snap(l.bias);
  }
}

GroupFeature extract_group_feature(const backbone::Patch& patch, const backbone::Backbone& phi,
                                   const IcosahedralGroup& group) {
  if (patch.neighbors.empty()) throw Error(ErrorKind::kEmptyPatch, "group feature of an empty patch");
  Matrix values(icosa::kGroupOrder, phi.output_dim());
  phi.extract_rotated(patch.neighbors, patch.radius, group.rotations(), values.data());
  return GroupFeature(std::move(values), 0);
}

Matrix gather_support(const Matrix& x, std::span<const GroupElement> support, const IcosahedralGroup& group) {
  const Eigen::Index n = x.cols();
  Matrix cat(icosa::kGroupOrder, static_cast<Eigen::Index>(support.size()) * n);
  for (int g = 0; g < icosa::kGroupOrder; ++g)
    for (std::size_t i = 0; i < support.size(); ++i)
      cat.block(g, static_cast<Eigen::Index>(i) * n, 1, n) = x.row(group.compose(support[i], GroupElement(g)).index);
  return cat;
}

void scatter_support_add(const Matrix& dcat, std::span<const GroupElement> support, const IcosahedralGroup& group,
                         Matrix& dx) {
  const Eigen::Index n = dx.cols();
  for (int g = 0; g < icosa::kGroupOrder; ++g)
    for (std::size_t i = 0; i < support.size(); ++i)
      dx.row(group.compose(support[i], GroupElement(g)).index) += dcat.block(g, static_cast<Eigen::Index>(i) * n, 1, n);
}

GroupFeature group_conv(const GroupFeature& f, const GroupConvLayer& layer, std::span<const GroupElement> support,
                        const IcosahedralGroup& group) {
  if (f.values.rows() != icosa::kGroupOrder)
    throw Error(ErrorKind::kDimensionMismatch, "group feature must have 60 rows");
  if (static_cast<int>(support.size()) != layer.support)
    throw Error(ErrorKind::kDimensionMismatch, "kernel support size does not match the layer");
  check_conv(layer, static_cast<int>(f.dim()), "group_conv");
  Matrix y = gather_support(f.values, support, group) * layer.weights.transpose();
  y.rowwise() += layer.bias.transpose();
  return GroupFeature(std::move(y), f.layer + 1);
}

GroupFeature group_conv(const GroupFeature& f, const GroupConvLayer& layer, const IcosahedralGroup& group) {
  return group_conv(f, layer, group.neighborhood(), group);
}

GroupFeature embed_prefix(const GroupFeature& f0, const NetworkWeights& w, int layers,
                          const IcosahedralGroup& group) {
  if (layers < 0 || layers > static_cast<int>(w.embedder.size()))
    throw Error(ErrorKind::kInvalidArgument, "embed_prefix layer count out of range");
  GroupFeature f = f0;
  for (int k = 0; k < layers; ++k) {
    f = group_conv(f, w.embedder[k], group);
    f.values = relu(std::move(f.values));
  }
  return f;
}

GroupFeature embed(const GroupFeature& f0, const NetworkWeights& w, const IcosahedralGroup& group) {
  GroupFeature f = embed_prefix(f0, w, static_cast<int>(w.embedder.size()), group);
  const double norm = f.values.norm();
  if (norm > 0.0) f.values /= norm;
  return f;
}

Descriptor pool_descriptor(const GroupFeature& f) {
  if (f.values.rows() != icosa::kGroupOrder)
    throw Error(ErrorKind::kDimensionMismatch, "group feature must have 60 rows");
  const Eigen::VectorXd mean = row_mean(f.values);
  const double norm = mean.norm();
  if (!(norm > 0.0)) throw Error(ErrorKind::kDegenerateDescriptor, "pooled group feature is zero");
  return Descriptor{mean / norm};
}

GroupFeature regressor_input(const GroupFeature& f0_p, const GroupFeature& fl_p, const GroupFeature& f0_q,
                             const GroupFeature& fl_q, GroupElement coarse, const IcosahedralGroup& group) {
  if (f0_p.dim() != f0_q.dim() || fl_p.dim() != fl_q.dim())
    throw Error(ErrorKind::kDimensionMismatch, "regressor inputs differ in width");
  const GroupFeature a = icosa::permute(f0_p, coarse, group);
  const GroupFeature b = icosa::permute(fl_p, coarse, group);
  Matrix cat(icosa::kGroupOrder, 2 * f0_p.dim() + 2 * fl_p.dim());
  cat << f0_q.values, fl_q.values, a.values, b.values;
  return GroupFeature(std::move(cat), 0);
}

Eigen::VectorXd regressor_pooled(const GroupFeature& input, const NetworkWeights& w, const IcosahedralGroup& group) {
  if (!w.has_regressor()) throw Error(ErrorKind::kInvalidArgument, "network has no regressor weights");
  GroupFeature f = input;
  for (const auto& l : w.regressor_convs) {
    f = group_conv(f, l, group);
    f.values = relu(std::move(f.values));
  }
  return row_mean(f.values);
}

Quat4 regress_residual(const GroupFeature& input, const NetworkWeights& w, const IcosahedralGroup& group) {
  Eigen::VectorXd v = regressor_pooled(input, w, group);
  for (std::size_t k = 0; k < w.regressor_mlp.size(); ++k) {
    const DenseLayer& l = w.regressor_mlp[k];
    v = l.weights * v + l.bias;
    if (k + 1 < w.regressor_mlp.size()) v = v.cwiseMax(0.0);
  }
  return Quat4(v[0], v[1], v[2], v[3]);
}

// ---------------------------------------------------------------------------
// Weights file

namespace {

constexpr char kMagic[4] = {'I', 'C', 'O', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxDim = 1u << 16;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

template <class M>
void put_values(std::string& out, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f32(out, m(r, c));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  std::uint32_t u32() {
    if (buf.size() - pos < 4) throw Error(ErrorKind::kFormat, "weights file is truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
  std::uint32_t dim() {
    const std::uint32_t v = u32();
    if (v == 0 || v > kMaxDim) throw Error(ErrorKind::kFormat, "weights file has an implausible layer shape");
    return v;
  }
  template <class M>
  void values(M& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f32();
  }
};

}  // namespace

void save_weights(const NetworkWeights& w, const std::filesystem::path& path) {
  w.validate();
  std::string out(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(w.embedder.size()));
  put_u32(out, static_cast<std::uint32_t>(w.regressor_convs.size()));
  put_u32(out, static_cast<std::uint32_t>(w.regressor_mlp.size()));
  for (const auto* v : {&w.embedder, &w.regressor_convs})
    for (const auto& l : *v) {
      put_u32(out, static_cast<std::uint32_t>(l.in_dim));
      put_u32(out, static_cast<std::uint32_t>(l.support));
      put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
    }
  for (const auto& l : w.regressor_mlp) {
    put_u32(out, static_cast<std::uint32_t>(l.in_dim()));
    put_u32(out, static_cast<std::uint32_t>(l.out_dim()));
  }
  for (const auto* v : {&w.embedder, &w.regressor_convs})
    for (const auto& l : *v) {
      put_values(out, l.weights);
      put_values(out, l.bias.transpose());
    }
  for (const auto& l : w.regressor_mlp) {
    put_values(out, l.weights);
    put_values(out, l.bias.transpose());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

NetworkWeights load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw Error(ErrorKind::kFormat, path.string() + " is not a weights file (bad magic)");
  Reader in{buf, 4};
  const std::uint32_t version = in.u32();
  if (version != kVersion)
    throw Error(ErrorKind::kFormat, "unsupported weights version " + std::to_string(version));
  const std::uint32_t n_embed = in.u32(), n_conv = in.u32(), n_mlp = in.u32();
  if (n_embed > 64 || n_conv > 64 || n_mlp > 64) throw Error(ErrorKind::kFormat, "implausible layer count");

  NetworkWeights w;
  std::size_t payload = 0;
  auto read_conv = [&](std::vector<GroupConvLayer>& v, std::uint32_t n) {
    for (std::uint32_t k = 0; k < n; ++k) {
      GroupConvLayer l;
      l.in_dim = static_cast<int>(in.dim());
      l.support = static_cast<int>(in.dim());
      const auto out = static_cast<Eigen::Index>(in.dim());
      payload += static_cast<std::size_t>(out) * (static_cast<std::size_t>(l.support) * l.in_dim + 1);
      l.weights.resize(out, static_cast<Eigen::Index>(l.support) * l.in_dim);
      l.bias.resize(out);
      v.push_back(std::move(l));
    }
  };
  read_conv(w.embedder, n_embed);
  read_conv(w.regressor_convs, n_conv);
  for (std::uint32_t k = 0; k < n_mlp; ++k) {
    DenseLayer l;
    const auto in_dim = static_cast<Eigen::Index>(in.dim());
    const auto out = static_cast<Eigen::Index>(in.dim());
    payload += static_cast<std::size_t>(out) * (in_dim + 1);
    l.weights.resize(out, in_dim);
    l.bias.resize(out);
    w.regressor_mlp.push_back(std::move(l));
  }
  if (buf.size() - in.pos != 4 * payload)
    throw Error(ErrorKind::kFormat, buf.size() - in.pos < 4 * payload ? "weights file is truncated"
                                                                      : "weights file has trailing bytes");
  for (auto* v : {&w.embedder, &w.regressor_convs})
    for (auto& l : *v) {
      in.values(l.weights);
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = in.f32();
    }
  for (auto& l : w.regressor_mlp) {
    in.values(l.weights);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = in.f32();
  }
  w.validate();
  return w;
}

}  // namespace icoreg::groupnet
