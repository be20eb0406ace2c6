#include "icoreg/icosa.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

#include "icoreg/error.hpp"

namespace icoreg::icosa {

namespace {

constexpr double kMatchTolerance = 1e-6;  // radians

// Geodesic distance from the Frobenius norm of the difference:
// ‖A − B‖_F = 2√2·sin(θ/2). Well conditioned near zero, unlike acos(trace).
double chordal_angle(const Mat3& a, const Mat3& b) {
  const double s = std::min(1.0, (a - b).norm() / (2.0 * std::numbers::sqrt2));
  return 2.0 * std::asin(s);
}

int find_element(const std::vector<Mat3>& elements, const Mat3& r) {
  int best = -1;
  double best_angle = kMatchTolerance;
  for (std::size_t i = 0; i < elements.size(); ++i) {
    const double a = chordal_angle(elements[i], r);
    if (a <= best_angle) {
      if (best < 0 || a < best_angle) {
        best = static_cast<int>(i);
        best_angle = a;
      }
    }
  }
  return best;
}

std::array<long long, 9> canonical_key(const Mat3& r) {
  std::array<long long, 9> key{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) key[3 * i + j] = std::llround(r(i, j) * 1e12);
  return key;
}

std::array<Vec3, 12> canonical_vertices() {
  const double phi = std::numbers::phi;
  std::array<Vec3, 12> v = {
      Vec3(0, 1, phi),  Vec3(0, -1, phi),  Vec3(0, 1, -phi),  Vec3(0, -1, -phi),
      Vec3(1, phi, 0),  Vec3(-1, phi, 0),  Vec3(1, -phi, 0),  Vec3(-1, -phi, 0),
      Vec3(phi, 0, 1),  Vec3(-phi, 0, 1),  Vec3(phi, 0, -1),  Vec3(-phi, 0, -1),
  };
  for (auto& x : v) x.normalize();
  return v;
}

}  // namespace

IcosahedralGroup IcosahedralGroup::build() {
  IcosahedralGroup out;
  out.vertices_ = canonical_vertices();

  // v0 and v1 share an edge; its midpoint lies on the z axis.
  const Mat3 gen_vertex = axis_angle(out.vertices_[0], 2.0 * std::numbers::pi / 5.0);
  const Mat3 gen_edge = axis_angle((out.vertices_[0] + out.vertices_[1]).normalized(),
                                   std::numbers::pi);

  std::vector<Mat3> elements{Mat3::Identity()};
  for (std::size_t head = 0; head < elements.size(); ++head) {
    for (const Mat3* gen : {&gen_vertex, &gen_edge}) {
      const Mat3 candidate = elements[head] * *gen;
      if (find_element(elements, candidate) < 0) elements.push_back(candidate);
      if (elements.size() > kGroupOrder)
        throw Error(ErrorKind::kInternal, "group closure exceeded 60 elements");
    }
  }
  if (elements.size() != kGroupOrder)
    throw Error(ErrorKind::kInternal,
                "group closure produced " + std::to_string(elements.size()) + " elements");

  // Canonical ordering: identity first, the rest by rounded lexicographic key.
  const auto identity_it = std::find_if(elements.begin(), elements.end(), [](const Mat3& r) {
    return chordal_angle(r, Mat3::Identity()) <= kMatchTolerance;
  });
  std::iter_swap(elements.begin(), identity_it);
  std::sort(elements.begin() + 1, elements.end(), [](const Mat3& a, const Mat3& b) {
    return canonical_key(a) < canonical_key(b);
  });
  std::copy(elements.begin(), elements.end(), out.rotations_.begin());

  for (int a = 0; a < kGroupOrder; ++a) {
    for (int b = 0; b < kGroupOrder; ++b) {
      const int c = find_element(elements, elements[a] * elements[b]);
      if (c < 0) throw Error(ErrorKind::kInternal, "group product matches no element");
      out.cayley_[a][b] = GroupElement(c);
      if (c == 0) out.inverse_[a] = GroupElement(b);
    }
  }

  out.neighborhood_[0] = GroupElement::identity();
  for (int v = 0; v < 12; ++v) {
    const int e = find_element(elements, axis_angle(out.vertices_[v], 2.0 * std::numbers::pi / 5.0));
    if (e < 0) throw Error(ErrorKind::kInternal, "72 degree vertex rotation not in group");
    out.neighborhood_[v + 1] = GroupElement(e);
  }
  return out;
}

std::pair<GroupElement, double> IcosahedralGroup::quantize(const Mat3& r) const {
  if (!is_rotation(r, 1e-6))
    throw Error(ErrorKind::kInvalidRotation, "quantize expects an orthonormal matrix");
  // Largest trace of r·R_gᵀ is the smallest geodesic angle.
  int best = 0;
  double best_trace = -1e300;
  for (int g = 0; g < kGroupOrder; ++g) {
    const double t = r.cwiseProduct(rotations_[g]).sum();
    if (t > best_trace) {
      best_trace = t;
      best = g;
    }
  }
  return {GroupElement(best), rotation_distance(r, rotations_[best])};
}

void IcosahedralGroup::write_tables(std::ostream& os) const {
  os << "# icosahedral group tables v1\n";
  os << "order " << kGroupOrder << '\n';
  os << std::setprecision(17);
  for (int g = 0; g < kGroupOrder; ++g) {
    os << "rotation " << g;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) os << ' ' << rotations_[g](i, j);
    os << '\n';
  }
  for (int a = 0; a < kGroupOrder; ++a) {
    os << "cayley " << a;
    for (int b = 0; b < kGroupOrder; ++b) os << ' ' << cayley_[a][b].value();
    os << '\n';
  }
  os << "inverse";
  for (const auto& g : inverse_) os << ' ' << g.value();
  os << "\nneighborhood";
  for (const auto& g : neighborhood_) os << ' ' << g.value();
  os << '\n';
}

const IcosahedralGroup& group() {
  static const IcosahedralGroup instance = IcosahedralGroup::build();
  return instance;
}

GroupFeature::GroupFeature(Matrix v, int layer_tag) : values(std::move(v)), layer(layer_tag) {
  if (values.rows() != kGroupOrder)
    throw Error(ErrorKind::kDimensionMismatch,
                "group feature needs 60 rows, got " + std::to_string(values.rows()));
}

GroupFeature permute(const GroupFeature& f, GroupElement m, const IcosahedralGroup& g) {
  if (f.values.rows() != kGroupOrder)
    throw Error(ErrorKind::kDimensionMismatch, "permute expects a 60-row group feature");
  GroupFeature::Matrix out(kGroupOrder, f.values.cols());
  for (int r = 0; r < kGroupOrder; ++r)
    out.row(r) = f.values.row(g.compose(GroupElement(r), m).value());
  return GroupFeature(std::move(out), f.layer);
}

}  // namespace icoreg::icosa
