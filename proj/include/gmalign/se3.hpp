#pragma once

#include <vector>

#include <Eigen/Dense>

namespace gmalign {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Rotations are angle-axis 3-vectors: rotation angle |r|, axis r/|r|. Every
// rotation has a representative inside the closed pi-ball; cube corners of
// the search domain may exceed pi but still map to valid rotations.

// Rodrigues map r -> R. Falls back to the second-order series below the
// small-angle threshold so the angle never divides by zero.
Mat3 rotation_from_angle_axis(const Vec3& r);

// Derivative of R(r)*x with respect to r (3x3, column i = d(Rx)/dr_i).
// Uses the compact closed form away from the origin and the second-order
// series for |r| < 1e-6 where the exact expression is 0/0.
Mat3 rotation_point_jacobian(const Vec3& r, const Vec3& x);

// Equivalent representative with |r| <= pi.
Vec3 wrap_angle_axis(const Vec3& r);

Mat3 skew(const Vec3& v);

struct RigidTransform {
  Vec3 rotation = Vec3::Zero();  // angle-axis
  Vec3 translation = Vec3::Zero();

  Mat3 rotation_matrix() const { return rotation_from_angle_axis(rotation); }
  Vec3 apply(const Vec3& x) const { return rotation_matrix() * x + translation; }

  static RigidTransform identity() { return {}; }
};

// One cell of the 6D search domain: a rotation cube times a translation cube,
// each given by center and half-width.
struct TransformCube {
  Vec3 rotation_center = Vec3::Zero();
  double rotation_half_width = 0.0;
  Vec3 translation_center = Vec3::Zero();
  double translation_half_width = 0.0;
  int depth = 0;

  RigidTransform center_transform() const { return {rotation_center, translation_center}; }

  // Full domain [-pi,pi]^3 x [-tau,tau]^3.
  static TransformCube root(double tau);
};

// Tiles the cube into split^6 children with half-widths divided by split.
// Throws std::invalid_argument for split < 2.
std::vector<TransformCube> subdivide(const TransformCube& cube, int split);

// True only when the whole rotation cube lies outside the pi-ball, i.e.
// |r0| - sqrt(3)*dr > pi. Such cubes hold no rotation that is not also
// represented inside the ball, so discarding them never loses the optimum.
bool rotation_cube_prunable(const TransformCube& cube);

// rho = sqrt(3) * dt, the half space diagonal of the translation cube.
double translation_uncertainty_radius(double translation_half_width);

// beta = min(sqrt(3) * dr, pi), the largest possible angle between x rotated
// by the cube center and x rotated by any rotation in the cube.
double max_aperture_angle(double rotation_half_width);

}  // namespace gmalign
