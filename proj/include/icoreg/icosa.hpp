#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>

#include <Eigen/Core>

#include "icoreg/rotation.hpp"

namespace icoreg::icosa {

inline constexpr int kGroupOrder = 60;
inline constexpr int kNeighborhoodSize = 13;

/// Index into the canonical enumeration of the icosahedral rotation group.
/// Index 0 is always the identity.
struct GroupElement {
  std::uint8_t index = 0;

  constexpr GroupElement() = default;
  constexpr explicit GroupElement(int i) : index(static_cast<std::uint8_t>(i)) {}

  static constexpr GroupElement identity() { return GroupElement{}; }
  constexpr int value() const { return index; }
  friend constexpr auto operator<=>(GroupElement, GroupElement) = default;
};

/// The 60 rotations preserving a regular icosahedron, with composition and
/// inverse tables and the 13-element convolution support H.
///
/// Element order is canonical: the identity first, then ascending
/// lexicographic order of the row-major matrix entries rounded to 12
/// decimals. Two constructions are bit-identical.
class IcosahedralGroup {
 public:
  /// Builds the group by closure from a 72° vertex rotation and a 180°
  /// edge-midpoint rotation. Throws Error(kInternal) if closure does not give
  /// exactly 60 elements or a product matches no element.
  static IcosahedralGroup build();

  const Mat3& rotation(GroupElement g) const { return rotations_[g.index]; }
  std::span<const Mat3, kGroupOrder> rotations() const { return rotations_; }

  /// Element whose matrix is rotation(a) * rotation(b).
  GroupElement compose(GroupElement a, GroupElement b) const {
    return cayley_[a.index][b.index];
  }
  GroupElement inverse(GroupElement a) const { return inverse_[a.index]; }

  /// H: identity followed by the twelve 72° rotations, ordered by the
  /// canonical vertex their (right-handed) axis passes through.
  std::span<const GroupElement, kNeighborhoodSize> neighborhood() const {
    return neighborhood_;
  }

  /// The 12 unit vertices of the canonical icosahedron.
  std::span<const Vec3, 12> vertices() const { return vertices_; }

  /// Nearest group element to an arbitrary rotation together with the
  /// geodesic residual angle (radians). Ties go to the lowest index.
  /// Throws Error(kInvalidRotation) unless r is orthonormal within 1e-6.
  std::pair<GroupElement, double> quantize(const Mat3& r) const;

  /// Plain-text dump of rotations, Cayley table, inverses and H.
  void write_tables(std::ostream& os) const;

 private:
  IcosahedralGroup() = default;

  std::array<Mat3, kGroupOrder> rotations_;
  std::array<std::array<GroupElement, kGroupOrder>, kGroupOrder> cayley_{};
  std::array<GroupElement, kGroupOrder> inverse_{};
  std::array<GroupElement, kNeighborhoodSize> neighborhood_{};
  std::array<Vec3, 12> vertices_;
};

/// Process-wide instance, built on first use.
const IcosahedralGroup& group();

/// Maximum geodesic distance from any rotation to its nearest group element,
/// as measured by the seeded 10^6-sample brute force in the test suite
/// (radians). Used as the bound on coarse-rotation quantization error.
inline constexpr double kCoveringRadius = 0.77332170051708005;

/// A function G -> R^n stored as a 60 x n matrix, row = group element.
struct GroupFeature {
  using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Matrix values;
  int layer = 0;

  GroupFeature() = default;
  explicit GroupFeature(Matrix v, int layer_tag = 0);

  Eigen::Index dim() const { return values.cols(); }
};

/// f'(g) = f(g·m): the row permutation induced by rotating the input by m.
GroupFeature permute(const GroupFeature& f, GroupElement m,
                     const IcosahedralGroup& g = group());

}  // namespace icoreg::icosa
