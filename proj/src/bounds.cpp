#include "gmalign/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "gmalign/parallel.hpp"

namespace gmalign {

namespace {

// Minimum distance from y_prime to the cap swept by x0 within aperture beta.
// Outside the cone the nearest cap point lies on the great arc from x0
// toward y_prime at angle beta, so its angular gap to y_prime is alpha-beta
// and the law of cosines gives the chord directly — no edge point needs to
// be constructed, which also makes alpha ~ 0 and alpha ~ pi non-special.
// The radial sphere distance |x_norm - y_norm| is a floor for every branch,
// which keeps the dominance over the sphere bound exact in floating point.
// cos_beta/sin_beta are passed in so per-cube callers hoist the trig.
double cap_distance_impl(double x_norm, double y_norm, double cos_alpha, double cos_beta,
                         double sin_beta) {
  const double radial = std::abs(x_norm - y_norm);
  if (cos_alpha >= cos_beta) {
    return radial;  // y_prime inside the rotation cone (or a degenerate pair)
  }
  const double sin_alpha = std::sqrt(std::max(0.0, 1.0 - cos_alpha * cos_alpha));
  const double cos_gap = cos_alpha * cos_beta + sin_alpha * sin_beta;  // cos(alpha-beta)
  const double dist_sq =
      x_norm * x_norm + y_norm * y_norm - 2.0 * x_norm * y_norm * cos_gap;
  return std::max(std::sqrt(std::max(dist_sq, 0.0)), radial);
}

// Clamped cos(alpha); returns 1 (the radial branch) for degenerate norms,
// where the cap or the target collapses and the radial distance is exact.
double clamped_cos_alpha(const Vec3& x0, const Vec3& y_prime, double x_norm,
                         double y_norm) {
  if (x_norm <= 0.0 || y_norm <= 0.0) return 1.0;
  return std::clamp(x0.dot(y_prime) / (x_norm * y_norm), -1.0, 1.0);
}

}  // namespace

PairGeometry make_pair_geometry(const Vec3& x, const Vec3& y, const TransformCube& cube) {
  PairGeometry geom;
  geom.x0 = rotation_from_angle_axis(cube.rotation_center) * x;
  geom.y_prime = y - cube.translation_center;
  // The cap radius is the unrotated norm: rotations preserve it exactly, and
  // reusing the sphere bound's expression keeps the dominance over that bound
  // exact in floating point (the rounded |x0| can land an ulp below |x|).
  geom.x_norm = x.norm();
  geom.beta = max_aperture_angle(cube.rotation_half_width);
  geom.rho = translation_uncertainty_radius(cube.translation_half_width);
  const double y_norm = geom.y_prime.norm();
  if (geom.x_norm > 0.0 && y_norm > 0.0) {
    geom.alpha = std::acos(
        std::clamp(geom.x0.dot(geom.y_prime) / (geom.x_norm * y_norm), -1.0, 1.0));
  }
  return geom;
}

double pairwise_upper(const Vec3& x, const Vec3& y, const RigidTransform& center) {
  return (center.apply(x) - y).norm();
}

double spherical_cap_distance(const PairGeometry& geom) {
  const double y_norm = geom.y_prime.norm();
  return cap_distance_impl(geom.x_norm, y_norm,
                           clamped_cos_alpha(geom.x0, geom.y_prime, geom.x_norm, y_norm),
                           std::cos(geom.beta), std::sin(geom.beta));
}

double pairwise_lower(const Vec3& x, const Vec3& y, const TransformCube& cube) {
  const PairGeometry geom = make_pair_geometry(x, y, cube);
  return std::max(spherical_cap_distance(geom) - geom.rho, 0.0);
}

double pairwise_lower_sphere(const Vec3& x, const Vec3& y, const TransformCube& cube) {
  const double rho = translation_uncertainty_radius(cube.translation_half_width);
  const double radial = std::abs(x.norm() - (y - cube.translation_center).norm());
  return std::max(radial - rho, 0.0);
}

namespace {

// Scratch for the vectorized node kernel; one set per thread because
// batch_node_bounds may fan cubes out across workers.
struct NodeScratch {
  Eigen::ArrayXd yp_x, yp_y, yp_z, y_norm, cos_alpha, e_lo, up_args, lo_args;
};

NodeScratch& node_scratch() {
  thread_local NodeScratch scratch;
  return scratch;
}

}  // namespace

NodeBounds node_bounds(const MixturePair& pair, const TransformCube& cube) {
  const std::size_t m = pair.x_count();
  const std::size_t n = pair.y_count();
  const Mat3 rot0 = rotation_from_angle_axis(cube.rotation_center);
  const double beta = max_aperture_angle(cube.rotation_half_width);
  const double rho = translation_uncertainty_radius(cube.translation_half_width);
  const double cos_beta = std::cos(beta);
  const double sin_beta = std::sin(beta);

  // Array-at-a-time evaluation of the same per-pair arithmetic as
  // spherical_cap_distance; the exp calls dominate the search cost and Eigen
  // evaluates them with its vectorized kernel.
  NodeScratch& s = node_scratch();
  const auto size = static_cast<Eigen::Index>(n);
  const auto total = static_cast<Eigen::Index>(m * n);
  s.yp_x.resize(size);
  s.yp_y.resize(size);
  s.yp_z.resize(size);
  s.up_args.resize(total);
  s.lo_args.resize(total);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 yp = pair.y_means()[j] - cube.translation_center;
    s.yp_x[static_cast<Eigen::Index>(j)] = yp.x();
    s.yp_y[static_cast<Eigen::Index>(j)] = yp.y();
    s.yp_z[static_cast<Eigen::Index>(j)] = yp.z();
  }
  s.y_norm = (s.yp_x.square() + s.yp_y.square() + s.yp_z.square()).sqrt();

  Eigen::Map<const Eigen::ArrayXd> coeffs(pair.pair_coeff().data(), total);
  Eigen::Map<const Eigen::ArrayXd> invs(pair.pair_inv_two_s().data(), total);
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 x0 = rot0 * pair.x_means()[i];
    const double x_norm = pair.x_means()[i].norm();  // cap radius; see make_pair_geometry
    const auto row = static_cast<Eigen::Index>(i * n);
    const auto inv_row = invs.segment(row, size);

    const auto e_up2 = (x0.x() - s.yp_x).square() + (x0.y() - s.yp_y).square() +
                       (x0.z() - s.yp_z).square();
    s.up_args.segment(row, size) = -e_up2 * inv_row;

    if (x_norm > 0.0) {
      const auto dot = x0.x() * s.yp_x + x0.y() * s.yp_y + x0.z() * s.yp_z;
      s.cos_alpha = (dot / (x_norm * s.y_norm)).max(-1.0).min(1.0);
      s.cos_alpha = (s.y_norm > 0.0).select(s.cos_alpha, 1.0);
    } else {
      s.cos_alpha = Eigen::ArrayXd::Constant(size, 1.0);
    }
    const auto sin_alpha = (1.0 - s.cos_alpha.square()).max(0.0).sqrt();
    const auto cos_gap = s.cos_alpha * cos_beta + sin_alpha * sin_beta;
    const auto radial = (x_norm - s.y_norm).abs();
    const auto dist = (x_norm * x_norm + s.y_norm.square() -
                       2.0 * x_norm * s.y_norm * cos_gap)
                          .max(0.0)
                          .sqrt()
                          .max(radial);
    s.e_lo = ((s.cos_alpha >= cos_beta).select(radial, dist) - rho).max(0.0);
    s.lo_args.segment(row, size) = -s.e_lo.square() * inv_row;
  }

  NodeBounds bounds;
  bounds.upper = -(coeffs * s.up_args.exp()).sum();
  bounds.lower = -(coeffs * s.lo_args.exp()).sum();
  bounds.center_transform = cube.center_transform();
  return bounds;
}

NodeBounds node_bounds(const GaussianMixture& gx, const GaussianMixture& gy,
                       const TransformCube& cube) {
  return node_bounds(MixturePair(gx, gy), cube);
}

std::vector<NodeBounds> batch_node_bounds(const MixturePair& pair,
                                          const std::vector<TransformCube>& cubes,
                                          int threads) {
  std::vector<NodeBounds> out(cubes.size());
  parallel_for_index(cubes.size(), threads,
                     [&](std::size_t i) { out[i] = node_bounds(pair, cubes[i]); });
  return out;
}

}  // namespace gmalign
