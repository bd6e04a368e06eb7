#include "gmalign/se3.hpp"

#include <cmath>
#include <stdexcept>

namespace gmalign {

namespace {
constexpr double kIdentityAngleThreshold = 1e-10;
constexpr double kJacobianSeriesThreshold = 1e-6;
}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 rotation_from_angle_axis(const Vec3& r) {
  const double theta = r.norm();
  const Mat3 k = skew(r);
  if (theta < kIdentityAngleThreshold) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * k + c * k * k;
}

Mat3 rotation_point_jacobian(const Vec3& r, const Vec3& x) {
  const double theta2 = r.squaredNorm();
  if (theta2 < kJacobianSeriesThreshold * kJacobianSeriesThreshold) {
    // d(Rx)/dr for R ~ I + [r]x + 0.5 [r]x^2.
    return -skew(x) - 0.5 * (skew(r.cross(x)) + skew(r) * skew(x));
  }
  // Compact closed form: column i is
  //   (r_i [r]x + [r x ((I - R) e_i)]x) R x / |r|^2.
  const Mat3 rot = rotation_from_angle_axis(r);
  const Vec3 w = rot * x;
  const Mat3 i_minus_r = Mat3::Identity() - rot;
  const Vec3 rxw = r.cross(w);
  Mat3 jac;
  for (int i = 0; i < 3; ++i) {
    const Vec3 v = r.cross(Vec3(i_minus_r.col(i)));
    jac.col(i) = (r[i] * rxw + v.cross(w)) / theta2;
  }
  return jac;
}

Vec3 wrap_angle_axis(const Vec3& r) {
  Vec3 out = r;
  double theta = out.norm();
  while (theta > M_PI) {
    out *= (theta - 2.0 * M_PI) / theta;
    theta = out.norm();
  }
  return out;
}

TransformCube TransformCube::root(double tau) {
  TransformCube cube;
  cube.rotation_half_width = M_PI;
  cube.translation_half_width = tau;
  cube.depth = 0;
  return cube;
}

std::vector<TransformCube> subdivide(const TransformCube& cube, int split) {
  if (split < 2) {
    throw std::invalid_argument("subdivide: split factor must be >= 2");
  }
  const double child_dr = cube.rotation_half_width / split;
  const double child_dt = cube.translation_half_width / split;
  auto offset = [split](double center, double half_width, double child_half, int k) {
    return center - half_width + (2 * k + 1) * child_half;
  };

  std::vector<TransformCube> children;
  children.reserve(static_cast<std::size_t>(split) * split * split * split * split * split);
  TransformCube child;
  child.rotation_half_width = child_dr;
  child.translation_half_width = child_dt;
  child.depth = cube.depth + 1;
  for (int a = 0; a < split; ++a)
    for (int b = 0; b < split; ++b)
      for (int c = 0; c < split; ++c)
        for (int d = 0; d < split; ++d)
          for (int e = 0; e < split; ++e)
            for (int f = 0; f < split; ++f) {
              child.rotation_center =
                  Vec3(offset(cube.rotation_center.x(), cube.rotation_half_width, child_dr, a),
                       offset(cube.rotation_center.y(), cube.rotation_half_width, child_dr, b),
                       offset(cube.rotation_center.z(), cube.rotation_half_width, child_dr, c));
              child.translation_center =
                  Vec3(offset(cube.translation_center.x(), cube.translation_half_width, child_dt, d),
                       offset(cube.translation_center.y(), cube.translation_half_width, child_dt, e),
                       offset(cube.translation_center.z(), cube.translation_half_width, child_dt, f));
              children.push_back(child);
            }
  return children;
}

bool rotation_cube_prunable(const TransformCube& cube) {
  return cube.rotation_center.norm() - std::sqrt(3.0) * cube.rotation_half_width > M_PI;
}

double translation_uncertainty_radius(double translation_half_width) {
  return std::sqrt(3.0) * translation_half_width;
}

double max_aperture_angle(double rotation_half_width) {
  return std::min(std::sqrt(3.0) * rotation_half_width, M_PI);
}

}  // namespace gmalign
