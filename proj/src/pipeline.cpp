#include "icoreg/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "icoreg/error.hpp"
#include "icoreg/parallel.hpp"

namespace icoreg::pipeline {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ index);
}

// ---------------------------------------------------------------------------
// Features

void FeatureConfig::validate() const {
  if (!(voxel > 0.0) || !(patch_radius > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "voxel and patch radius must be positive");
  if (keypoints == 0) throw Error(ErrorKind::kInvalidArgument, "keypoint count must be positive");
  if (!(planarity >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "planarity threshold must be non-negative");
}

void finalize_features(CloudFeatures& f) {
  f.tree = geom::make_kdtree(f.cloud);
  f.descriptors.resize(f.fl.size());
  for (std::size_t i = 0; i < f.fl.size(); ++i) f.descriptors[i] = groupnet::pool_descriptor(f.fl[i]).values;
}

CloudFeatures describe_cloud(const PointCloud& raw, const FeatureConfig& cfg, const backbone::Backbone& phi,
                             const groupnet::NetworkWeights& w) {
  cfg.validate();
  if (!w.embedder.empty() && w.input_dim() != phi.output_dim())
    throw Error(ErrorKind::kDimensionMismatch, "embedder input width differs from the backbone output");
  CloudFeatures f;
  f.cloud = geom::voxel_downsample(raw, cfg.voxel);
  f.tree = geom::make_kdtree(f.cloud);
  f.patch_radius = cfg.patch_radius;

  std::vector<std::size_t> order(f.cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k : order) {
    if (f.keypoints.size() == cfg.keypoints) break;
    const double e = geom::neighborhood_min_eigenvalue(f.cloud, f.tree, k, cfg.patch_radius);
    if (e >= 0.0 && e >= cfg.planarity) f.keypoints.push_back(k);
  }
  if (f.keypoints.empty()) throw Error(ErrorKind::kInvalidArgument, "no keypoint passes the planarity filter");

  const std::size_t n = f.keypoints.size();
  f.f0.resize(n);
  f.fl.resize(n);
  parallel_for(n, [&](std::size_t i) {
    const auto patch = backbone::extract_patch(f.cloud, f.tree, f.keypoints[i], cfg.patch_radius);
    f.f0[i] = groupnet::extract_group_feature(patch, phi);
    f.fl[i] = w.embedder.empty() ? f.f0[i] : groupnet::embed(f.f0[i], w);
  });
  f.descriptors.resize(n);
  for (std::size_t i = 0; i < n; ++i) f.descriptors[i] = groupnet::pool_descriptor(f.fl[i]).values;
  return f;
}

namespace {

constexpr char kFeatureMagic[4] = {'I', 'C', 'O', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class ByteReader {
 public:
  ByteReader(std::string data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}
  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > data_.size()) throw Error(ErrorKind::kFormat, name_ + ": truncated feature file");
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string data_, name_;
  std::size_t pos_ = 0;
};

void put_features(std::string& out, const std::vector<icosa::GroupFeature>& fs) {
  const std::uint64_t dim = fs.empty() ? 0 : static_cast<std::uint64_t>(fs.front().dim());
  put(out, dim);
  for (const auto& g : fs)
    for (Eigen::Index i = 0; i < g.values.size(); ++i) put(out, g.values.data()[i]);
}

std::vector<icosa::GroupFeature> get_features(ByteReader& in, std::size_t count, int tag) {
  const auto dim = in.get<std::uint64_t>();
  if (dim > (1u << 20)) throw Error(ErrorKind::kFormat, "implausible feature width");
  std::vector<icosa::GroupFeature> fs(count);
  for (auto& g : fs) {
    icosa::GroupFeature::Matrix m(icosa::kGroupOrder, static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.get<double>();
    g = icosa::GroupFeature(std::move(m), tag);
  }
  return fs;
}

}  // namespace

void save_features(const CloudFeatures& f, const std::filesystem::path& path) {
  std::string out(kFeatureMagic, 4);
  put(out, kFeatureVersion);
  put(out, f.patch_radius);
  put(out, static_cast<std::uint64_t>(f.cloud.size()));
  for (const auto& p : f.cloud.points)
    for (int k = 0; k < 3; ++k) put(out, p[k]);
  put(out, static_cast<std::uint64_t>(f.keypoints.size()));
  for (std::size_t k : f.keypoints) put(out, static_cast<std::uint64_t>(k));
  put_features(out, f.f0);
  put_features(out, f.fl);
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

CloudFeatures load_features(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  if (data.size() < 4 || std::memcmp(data.data(), kFeatureMagic, 4) != 0)
    throw Error(ErrorKind::kFormat, path.string() + " is not a feature file (bad magic)");
  ByteReader in(data.substr(4), path.string());
  if (in.get<std::uint32_t>() != kFeatureVersion)
    throw Error(ErrorKind::kFormat, path.string() + ": unsupported feature file version");
  CloudFeatures f;
  f.patch_radius = in.get<double>();
  const auto points = in.get<std::uint64_t>();
  if (points > data.size()) throw Error(ErrorKind::kFormat, path.string() + ": implausible point count");
  f.cloud.points.resize(points);
  for (auto& p : f.cloud.points)
    for (int k = 0; k < 3; ++k) p[k] = in.get<double>();
  const auto kp = in.get<std::uint64_t>();
  if (kp > data.size()) throw Error(ErrorKind::kFormat, path.string() + ": implausible keypoint count");
  f.keypoints.resize(kp);
  for (auto& k : f.keypoints) {
    k = in.get<std::uint64_t>();
    if (k >= points) throw Error(ErrorKind::kFormat, path.string() + ": keypoint index out of range");
  }
  f.f0 = get_features(in, kp, 0);
  f.fl = get_features(in, kp, 1);
  if (!in.done()) throw Error(ErrorKind::kFormat, path.string() + ": trailing bytes");
  finalize_features(f);
  return f;
}

// ---------------------------------------------------------------------------
// Matching

const char* to_string(RotationSource s) {
  switch (s) {
    case RotationSource::kAuto: return "auto";
    case RotationSource::kRegressor: return "regressor";
    case RotationSource::kPatchIcp: return "patch_icp";
    case RotationSource::kNone: return "none";
  }
  return "?";
}

RotationSource parse_rotation_source(const std::string& name) {
  for (auto s : {RotationSource::kAuto, RotationSource::kRegressor, RotationSource::kPatchIcp, RotationSource::kNone})
    if (name == to_string(s)) return s;
  throw Error(ErrorKind::kInvalidArgument, "unknown rotation source '" + name + "'");
}

namespace {

PointCloud patch_cloud(const CloudFeatures& f, std::size_t cloud_index) {
  const auto patch = backbone::extract_patch(f.cloud, f.tree, cloud_index, f.patch_radius);
  PointCloud out;
  out.points.reserve(patch.neighbors.size() + 1);
  out.points.push_back(patch.center);
  for (const auto& v : patch.neighbors) out.points.push_back(patch.center + v);
  return out;
}

}  // namespace

std::vector<Correspondence> match_features(const CloudFeatures& p, const CloudFeatures& q,
                                           const groupnet::NetworkWeights& w, const MatchConfig& cfg,
                                           RotationSource* used) {
  RotationSource source = cfg.rotation_source;
  if (source == RotationSource::kAuto)
    source = w.has_regressor() ? RotationSource::kRegressor : RotationSource::kPatchIcp;
  if (source == RotationSource::kRegressor && !w.has_regressor())
    throw Error(ErrorKind::kInvalidArgument, "regressor rotations requested but the weights have no regressor");
  if (used) *used = source;

  const auto matches = matchrot::match_mutual_nn(p.descriptors, q.descriptors);
  const auto& group = icosa::group();
  std::vector<Correspondence> out(matches.size());
  parallel_for(matches.size(), [&](std::size_t i) {
    const auto& m = matches[i];
    Correspondence& c = out[i];
    c.p_index = p.keypoints[m.p_index];
    c.q_index = q.keypoints[m.q_index];
    c.p = p.cloud.points[c.p_index];
    c.q = q.cloud.points[c.q_index];
    c.desc_dist = m.distance;
    c.coarse_rotation = matchrot::coarse_rotation(p.fl[m.p_index], q.fl[m.q_index], group).first;
    switch (source) {
      case RotationSource::kRegressor:
        c.refined_rotation = matchrot::refine_rotation(p.f0[m.p_index], p.fl[m.p_index], q.f0[m.q_index],
                                                       q.fl[m.q_index], c.coarse_rotation, w, group);
        break;
      case RotationSource::kPatchIcp: {
        RigidTransform init;
        init.rotation = group.rotation(c.coarse_rotation);
        init.translation = c.q - init.rotation * c.p;
        geom::IcpOptions opt;
        opt.max_iterations = cfg.patch_icp_iterations;
        opt.max_correspondence_distance = cfg.patch_icp_distance;
        c.refined_rotation = geom::icp(patch_cloud(p, c.p_index), patch_cloud(q, c.q_index), init, opt)
                                 .transform.rotation;
        break;
      }
      case RotationSource::kAuto:
      case RotationSource::kNone:
        break;
    }
  });
  return out;
}

void write_correspondences(std::span<const Correspondence> c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.precision(17);
  out << "p_index,q_index,px,py,pz,qx,qy,qz,desc_dist,coarse";
  for (int k = 0; k < 9; ++k) out << ",r" << k / 3 << k % 3;
  out << "\n";
  for (const auto& x : c) {
    out << x.p_index << ',' << x.q_index;
    for (int k = 0; k < 3; ++k) out << ',' << x.p[k];
    for (int k = 0; k < 3; ++k) out << ',' << x.q[k];
    out << ',' << x.desc_dist << ',' << static_cast<int>(x.coarse_rotation.index);
    for (int k = 0; k < 9; ++k) {
      out << ',';
      if (x.refined_rotation) out << (*x.refined_rotation)(k / 3, k % 3);
    }
    out << "\n";
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::vector<Correspondence> read_correspondences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<Correspondence> out;
  for (int lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string item; std::getline(ls, item, ',');) f.push_back(item);
    if (line.back() == ',') f.emplace_back();
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (f.size() != 19) throw Error(ErrorKind::kFormat, where + ": expected 19 fields");
    auto num = [&](const std::string& s) {
      double v;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorKind::kFormat, where + ": bad number '" + s + "'");
      return v;
    };
    auto idx = [&](const std::string& s) {
      std::size_t v;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) throw Error(ErrorKind::kFormat, where + ": bad index '" + s + "'");
      return v;
    };
    Correspondence c;
    c.p_index = idx(f[0]);
    c.q_index = idx(f[1]);
    c.p = Vec3(num(f[2]), num(f[3]), num(f[4]));
    c.q = Vec3(num(f[5]), num(f[6]), num(f[7]));
    c.desc_dist = num(f[8]);
    const std::size_t g = idx(f[9]);
    if (g >= static_cast<std::size_t>(icosa::kGroupOrder)) throw Error(ErrorKind::kFormat, where + ": bad group element");
    c.coarse_rotation = icosa::GroupElement(static_cast<int>(g));
    const auto empty = std::count_if(f.begin() + 10, f.end(), [](const std::string& s) { return s.empty(); });
    if (empty == 0) {
      Mat3 r;
      for (int k = 0; k < 9; ++k) r(k / 3, k % 3) = num(f[10 + k]);
      c.refined_rotation = r;
    } else if (empty != 9) {
      throw Error(ErrorKind::kFormat, where + ": partial refined rotation");
    }
    out.push_back(c);
  }
  return out;
}

std::vector<groupnet::TrainingPair> synth_training_pairs(const TrainingSetConfig& cfg, const backbone::Backbone& phi) {
  cfg.features.validate();
  if (cfg.pairs == 0) throw Error(ErrorKind::kInvalidArgument, "training set needs at least one pair");
  const auto shapes = scene_shapes();
  std::mt19937_64 rng(cfg.seed);
  struct Draw {
    std::size_t center;
    std::size_t scene;
    Mat3 rotation;
    std::uint64_t drop_a, drop_b;
  };
  // Scenes are shared by groups of pairs; each pair draws its own center.
  constexpr std::size_t kPairsPerScene = 25;
  std::vector<PointCloud> scenes((cfg.pairs + kPairsPerScene - 1) / kPairsPerScene);
  std::vector<KdTree> trees(scenes.size());
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    scenes[s] = geom::voxel_downsample(sample_scene(shapes[s % shapes.size()], cfg.scene_points, rng()), cfg.features.voxel);
    trees[s] = geom::make_kdtree(scenes[s]);
  }
  std::vector<Draw> draws;
  for (std::size_t i = 0; i < cfg.pairs; ++i) {
    const std::size_t s = i / kPairsPerScene;
    std::uniform_int_distribution<std::size_t> pick(0, scenes[s].size() - 1);
    std::size_t center;
    for (int attempt = 0;; ++attempt) {
      center = pick(rng);
      const double e = geom::neighborhood_min_eigenvalue(scenes[s], trees[s], center, cfg.features.patch_radius);
      if (e >= 0.0 && e >= cfg.features.planarity) break;
      if (attempt == 10000) throw Error(ErrorKind::kInvalidArgument, "no training center passes the planarity filter");
    }
    draws.push_back({center, s, random_rotation(rng), rng(), rng()});
  }
  std::vector<groupnet::TrainingPair> out(cfg.pairs);
  parallel_for(cfg.pairs, [&](std::size_t i) {
    const Draw& d = draws[i];
    const auto patch = backbone::extract_patch(scenes[d.scene], trees[d.scene], d.center, cfg.features.patch_radius);
    const auto a = perturb_patch(patch, Perturbation::kDropout, cfg.dropout, d.drop_a);
    const auto b = perturb_patch(patch, Perturbation::kDropout, cfg.dropout, d.drop_b);
    out[i] = groupnet::make_training_pair(a, backbone::rotate_patch(b, d.rotation), d.rotation, phi);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> kv;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw Error(ErrorKind::kFormat, where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::kFormat, where + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw Error(ErrorKind::kFormat, where + ": repeated key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return parse_key_values(in, path.string());
}

RigidTransform parse_transform(const std::string& text) {
  std::istringstream in(text);
  std::vector<double> v;
  for (std::string tok; in >> tok;) {
    double x;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), x);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
      throw Error(ErrorKind::kFormat, "bad number '" + tok + "' in transform");
    v.push_back(x);
  }
  RigidTransform t;
  if (v.size() == 12) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[3 * r + c];
    t.translation = Vec3(v[9], v[10], v[11]);
  } else if (v.size() == 16) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = v[4 * r + c];
      t.translation[r] = v[4 * r + 3];
    }
  } else {
    throw Error(ErrorKind::kFormat, "a transform needs 12 or 16 numbers, got " + std::to_string(v.size()));
  }
  if ((t.rotation.transpose() * t.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      std::abs(t.rotation.determinant() - 1.0) > 1e-6)
    throw Error(ErrorKind::kInvalidRotation, "transform rotation is not orthonormal");
  return t;
}

std::string format_transform(const RigidTransform& t) {
  std::ostringstream out;
  out.precision(17);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out << t.rotation(r, c) << ' ';
  out << t.translation.x() << ' ' << t.translation.y() << ' ' << t.translation.z();
  return out.str();
}

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

double to_double(const std::string& key, const std::string& v) {
  double x;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(x))
    throw Error(ErrorKind::kInvalidArgument, key + ": expected a number, got '" + v + "'");
  return x;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t x;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw Error(ErrorKind::kInvalidArgument, key + ": expected a non-negative integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrorKind::kInvalidArgument, key + ": expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  for (std::string item; std::getline(in, item, ',');)
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

template <typename T, typename F>
std::string join(const std::vector<T>& items, F f) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + f(items[i]);
  return out;
}

const char* rr_name(evalmetrics::RrDistance d) { return d == evalmetrics::RrDistance::kRmse ? "rmse" : "mean"; }

}  // namespace

BenchmarkConfig::BenchmarkConfig() {
  synth.noise_sigma = 0.5 * features.voxel;
}

void BenchmarkConfig::apply(const std::map<std::string, std::string>& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "pairs") pairs = to_uint(key, v);
    else if (key == "seed") seed = to_uint(key, v);
    else if (key == "trials") trials = to_uint(key, v);
    else if (key == "pair_list") pair_list = v;
    else if (key == "shape") synth.base_shape = v;
    else if (key == "point_count") synth.point_count = to_uint(key, v);
    else if (key == "overlap") synth.overlap_fraction = to_double(key, v);
    else if (key == "noise_sigma") synth.noise_sigma = to_double(key, v);
    else if (key == "dropout") synth.dropout_fraction = to_double(key, v);
    else if (key == "outliers") synth.outlier_fraction = to_double(key, v);
    else if (key == "max_angle") synth.max_angle = to_double(key, v);
    else if (key == "max_translation") synth.max_translation = to_double(key, v);
    else if (key == "voxel") features.voxel = to_double(key, v);
    else if (key == "patch_radius") features.patch_radius = to_double(key, v);
    else if (key == "keypoints") features.keypoints = to_uint(key, v);
    else if (key == "planarity") features.planarity = to_double(key, v);
    else if (key == "rotation_source") match.rotation_source = parse_rotation_source(v);
    else if (key == "patch_icp_iterations") match.patch_icp_iterations = static_cast<int>(to_uint(key, v));
    else if (key == "patch_icp_distance") match.patch_icp_distance = to_double(key, v);
    else if (key == "weights") weights = v;
    else if (key == "weights_seed") weights_seed = to_uint(key, v);
    else if (key == "modes") {
      modes.clear();
      for (const auto& m : split_list(v)) modes.push_back(ransac::parse_mode(m));
    } else if (key == "budgets") {
      budgets.clear();
      for (const auto& b : split_list(v)) budgets.push_back(to_uint(key, b));
    } else if (key == "tau") inlier_threshold = to_double(key, v);
    else if (key == "refit") refit = to_bool(key, v);
    else if (key == "distance_check") distance_check = to_bool(key, v);
    else if (key == "tau_c") tau_c = to_double(key, v);
    else if (key == "tau_r") tau_r = to_double(key, v);
    else if (key == "rr_distance") {
      if (v == "rmse") rr_distance = evalmetrics::RrDistance::kRmse;
      else if (v == "mean") rr_distance = evalmetrics::RrDistance::kMean;
      else throw Error(ErrorKind::kInvalidArgument, "rr_distance: expected rmse or mean, got '" + v + "'");
    } else if (key == "curve_budgets") {
      curve_budgets.clear();
      for (const auto& b : split_list(v)) curve_budgets.push_back(to_uint(key, b));
    } else if (key == "icp") icp = to_bool(key, v);
    else if (key == "icp_iterations") icp_options.max_iterations = static_cast<int>(to_uint(key, v));
    else if (key == "icp_distance") icp_options.max_correspondence_distance = to_double(key, v);
    else throw Error(ErrorKind::kInvalidArgument, "unknown configuration key '" + key + "'");
  }
}

std::map<std::string, std::string> BenchmarkConfig::to_key_values() const {
  auto u = [](std::uint64_t x) { return std::to_string(x); };
  return {
      {"pairs", u(pairs)},
      {"seed", u(seed)},
      {"trials", u(trials)},
      {"pair_list", pair_list},
      {"shape", synth.base_shape},
      {"point_count", u(synth.point_count)},
      {"overlap", fmt(synth.overlap_fraction)},
      {"noise_sigma", fmt(synth.noise_sigma)},
      {"dropout", fmt(synth.dropout_fraction)},
      {"outliers", fmt(synth.outlier_fraction)},
      {"max_angle", fmt(synth.max_angle)},
      {"max_translation", fmt(synth.max_translation)},
      {"voxel", fmt(features.voxel)},
      {"patch_radius", fmt(features.patch_radius)},
      {"keypoints", u(features.keypoints)},
      {"planarity", fmt(features.planarity)},
      {"rotation_source", to_string(match.rotation_source)},
      {"patch_icp_iterations", u(static_cast<std::uint64_t>(match.patch_icp_iterations))},
      {"patch_icp_distance", fmt(match.patch_icp_distance)},
      {"weights", weights},
      {"weights_seed", u(weights_seed)},
      {"modes", join(modes, [](ransac::Mode m) { return std::string(ransac::to_string(m)); })},
      {"budgets", join(budgets, [&](std::size_t b) { return u(b); })},
      {"tau", fmt(inlier_threshold)},
      {"refit", fmt_bool(refit)},
      {"distance_check", fmt_bool(distance_check)},
      {"tau_c", fmt(tau_c)},
      {"tau_r", fmt(tau_r)},
      {"rr_distance", rr_name(rr_distance)},
      {"curve_budgets", join(curve_budgets, [&](std::size_t b) { return u(b); })},
      {"icp", fmt_bool(icp)},
      {"icp_iterations", u(static_cast<std::uint64_t>(icp_options.max_iterations))},
      {"icp_distance", fmt(icp_options.max_correspondence_distance)},
  };
}

void BenchmarkConfig::validate() const {
  if (pair_list.empty()) {
    if (pairs == 0) throw Error(ErrorKind::kInvalidArgument, "pairs must be positive");
    synth.validate();
  }
  if (trials == 0) throw Error(ErrorKind::kInvalidArgument, "trials must be positive");
  features.validate();
  if (modes.empty() || budgets.empty()) throw Error(ErrorKind::kInvalidArgument, "modes and budgets must be non-empty");
  for (std::size_t b : budgets)
    if (b == 0) throw Error(ErrorKind::kInvalidArgument, "budgets must be positive");
  if (!(inlier_threshold > 0.0) || !(tau_c > 0.0) || !(tau_r > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "tau, tau_c and tau_r must be positive");
  if (match.patch_icp_iterations < 0 || !(match.patch_icp_distance > 0.0) || icp_options.max_iterations < 0 ||
      !(icp_options.max_correspondence_distance > 0.0))
    throw Error(ErrorKind::kInvalidArgument, "ICP settings must be non-negative with a positive distance");
}

SynthConfig BenchmarkConfig::pair_synth_config(std::size_t index) const {
  SynthConfig s = synth;
  s.seed = derive_seed(seed, 1, index);
  return s;
}

}  // namespace icoreg::pipeline
