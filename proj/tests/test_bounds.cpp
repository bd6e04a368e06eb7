#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gmalign/bounds.hpp"
#include "gmalign/mixture.hpp"
#include "gmalign/objective.hpp"
#include "test_support.hpp"

using namespace gmalign;
using test_support::random_cube;
using test_support::random_mixture;
using test_support::random_transform_in_cube;
using test_support::sampled_min_objective;

namespace {

// Cube with prescribed rho and beta, centered at the identity.
TransformCube cube_with_radii(double rho, double beta) {
  TransformCube cube;
  cube.rotation_half_width = beta / std::sqrt(3.0);
  cube.translation_half_width = rho / std::sqrt(3.0);
  return cube;
}

PairGeometry geometry(const Vec3& x0, const Vec3& y_prime, double beta) {
  PairGeometry geom;
  geom.x_norm = x0.norm();
  geom.x0 = x0;
  geom.y_prime = y_prime;
  const double denom = x0.norm() * y_prime.norm();
  geom.alpha = denom < 1e-30
                   ? 0.0
                   : std::acos(std::clamp(x0.dot(y_prime) / denom, -1.0, 1.0));
  geom.beta = beta;
  geom.rho = 0.0;
  return geom;
}

// Dense minimum over the cap: rotate x0 toward (and past) y_prime through the
// full great arc for many apertures <= beta, plus ring samples around the
// cone axis; the true cap minimum lies on the x0/y_prime plane so the arc
// sweep alone converges, while the ring samples guard the claim itself.
double cap_distance_oracle(const Vec3& x0, const Vec3& y_prime, double beta,
                           std::size_t arc_samples) {
  const double x_norm = x0.norm();
  const double y_norm = y_prime.norm();
  if (x_norm < 1e-15 || y_norm < 1e-15) return std::abs(x_norm - y_norm);

  Vec3 axis = x0.cross(y_prime);
  if (axis.norm() < 1e-12) {
    // Degenerate: pick any perpendicular of x0.
    const Vec3 probe = std::abs(x0.x()) < 0.9 * x_norm ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
    axis = x0.cross(probe);
  }
  axis.normalize();

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k <= arc_samples; ++k) {
    const double angle = beta * static_cast<double>(k) / static_cast<double>(arc_samples);
    const Vec3 rotated = rotation_from_angle_axis(axis * angle) * x0;
    best = std::min(best, (rotated - y_prime).norm());
    const Vec3 rotated_back = rotation_from_angle_axis(axis * -angle) * x0;
    best = std::min(best, (rotated_back - y_prime).norm());
  }
  return best;
}

}  // namespace

TEST_CASE("pairwise_upper is the center residual") {
  CHECK(pairwise_upper(Vec3(0.3, 0.2, -0.1), Vec3(0.3, 0.2, -0.1),
                       RigidTransform::identity()) == doctest::Approx(0.0));
  const RigidTransform quarter{Vec3(0, 0, M_PI / 2), Vec3::Zero()};
  CHECK(pairwise_upper(Vec3(1, 0, 0), Vec3(0, 1, 0), quarter) ==
        doctest::Approx(0.0).epsilon(1e-12));

  Rng rng(60);
  for (int trial = 0; trial < 20; ++trial) {
    const TransformCube cube = random_cube(rng);
    const Vec3 x = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const Vec3 y = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const double upper = pairwise_upper(x, y, cube.center_transform());
    double sampled_min = upper;
    for (int k = 0; k < 10000; ++k) {
      const RigidTransform t = random_transform_in_cube(cube, rng);
      sampled_min = std::min(sampled_min, (t.apply(x) - y).norm());
    }
    CHECK(upper >= sampled_min - 1e-12);  // center is one of the candidates
  }
}

TEST_CASE("spherical_cap_distance named cases") {
  // Radial case: y_prime inside the cone.
  CHECK(spherical_cap_distance(geometry(Vec3(1, 0, 0), Vec3(2, 0, 0), M_PI / 2)) ==
        doctest::Approx(1.0));
  // Perpendicular target, quarter-circle cap: closest cap-edge point is
  // x0 rotated 45 degrees toward y_prime.
  const double expected =
      (Vec3(std::sqrt(0.5), 0, std::sqrt(0.5)) - Vec3(0, 0, 2)).norm();
  CHECK(expected == doctest::Approx(1.4736).epsilon(1e-4));
  CHECK(spherical_cap_distance(geometry(Vec3(1, 0, 0), Vec3(0, 0, 2), M_PI / 4)) ==
        doctest::Approx(expected).epsilon(1e-12));
  // Coincident points.
  CHECK(spherical_cap_distance(geometry(Vec3(0.4, -0.3, 0.25), Vec3(0.4, -0.3, 0.25),
                                        0.3)) == doctest::Approx(0.0));
}

TEST_CASE("spherical_cap_distance matches the law-of-cosines form outside the cone") {
  Rng rng(61);
  for (int trial = 0; trial < 2000; ++trial) {
    const Vec3 x0 = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const Vec3 yp = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const PairGeometry geom = geometry(x0, yp, rng.uniform(0.0, M_PI));
    if (geom.x_norm < 1e-6 || geom.y_prime.norm() < 1e-6) continue;
    if (geom.alpha <= geom.beta) continue;
    const double nx = geom.x_norm, ny = geom.y_prime.norm();
    const double want = std::sqrt(std::max(
        0.0, nx * nx + ny * ny - 2.0 * nx * ny * std::cos(geom.alpha - geom.beta)));
    CHECK(spherical_cap_distance(geom) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("spherical_cap_distance branches agree at alpha == beta") {
  Rng rng(62);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec3 x0 = rng.unit_vector() * rng.uniform(0.1, 1.5);
    const double alpha = rng.uniform(0.05, M_PI - 0.05);
    // Build y_prime at exactly angle alpha from x0.
    const Vec3 axis = x0.cross(rng.unit_vector()).normalized();
    const Vec3 y_dir = rotation_from_angle_axis(axis * alpha) * x0.normalized();
    const Vec3 yp = y_dir * rng.uniform(0.1, 1.5);

    const double at_beta = spherical_cap_distance(geometry(x0, yp, alpha));
    const double just_below = spherical_cap_distance(geometry(x0, yp, alpha - 1e-9));
    const double radial = std::abs(x0.norm() - yp.norm());
    CHECK(at_beta == doctest::Approx(radial).epsilon(1e-9));
    CHECK(std::abs(just_below - at_beta) < 1e-7);
  }
}

TEST_CASE("spherical_cap_distance agrees with dense cap sampling") {
  Rng rng(63);
  for (int trial = 0; trial < 300; ++trial) {
    const Vec3 x0 = rng.vector_in_cube(Vec3::Zero(), 1.2);
    const Vec3 yp = rng.vector_in_cube(Vec3::Zero(), 1.2);
    const double beta = rng.uniform(0.0, M_PI);
    if (x0.norm() < 1e-3 || yp.norm() < 1e-3) continue;
    const double fast = spherical_cap_distance(geometry(x0, yp, beta));
    const double oracle = cap_distance_oracle(x0, yp, beta, 4000);
    // The oracle only samples the cap, so it can only overestimate; its
    // resolution is bounded by the arc step length.
    const double resolution = x0.norm() * beta / 4000.0;
    CHECK(fast <= oracle + 1e-12);
    CHECK(fast >= oracle - resolution - 1e-9);
  }
}

TEST_CASE("pairwise_lower named cases") {
  CHECK(pairwise_lower(Vec3(1, 0, 0), Vec3(3, 0, 0), cube_with_radii(0.1, 0.2)) ==
        doctest::Approx(1.9));
  CHECK(pairwise_lower(Vec3(0.5, -0.2, 0.3), Vec3(0.5, -0.2, 0.3),
                       cube_with_radii(0.05, 0.4)) == doctest::Approx(0.0));
}

TEST_CASE("pairwise_lower_sphere named cases") {
  CHECK(pairwise_lower_sphere(Vec3(1, 0, 0), Vec3(3, 0, 0), cube_with_radii(0.1, 0.2)) ==
        doctest::Approx(1.9));
  // Equal radii: bound collapses to zero regardless of direction.
  CHECK(pairwise_lower_sphere(Vec3(0, 0.7, 0), Vec3(0.7, 0, 0),
                              cube_with_radii(0.2, 0.1)) == doctest::Approx(0.0));
}

TEST_CASE("pairwise_lower is a valid bound over sampled transforms") {
  Rng rng(64);
  for (int trial = 0; trial < 30; ++trial) {
    const TransformCube cube = random_cube(rng);
    const Vec3 x = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const Vec3 y = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const double lower = pairwise_lower(x, y, cube);
    CHECK(lower >= 0.0);
    for (int k = 0; k < 10000; ++k) {
      const RigidTransform t = random_transform_in_cube(cube, rng);
      CHECK((t.apply(x) - y).norm() >= lower - 1e-9);
    }
  }
}

TEST_CASE("cap-based lower bound dominates the sphere bound") {
  Rng rng(65);
  for (int trial = 0; trial < 10000; ++trial) {
    const TransformCube cube = random_cube(rng);
    const Vec3 x = rng.vector_in_cube(Vec3::Zero(), 1.2);
    const Vec3 y = rng.vector_in_cube(Vec3::Zero(), 1.2);
    CHECK(pairwise_lower(x, y, cube) >= pairwise_lower_sphere(x, y, cube));
  }
}

TEST_CASE("node_bounds on a zero-width cube collapses to the center value") {
  Rng rng(66);
  const GaussianMixture gx = random_mixture(3, rng);
  const GaussianMixture gy = random_mixture(4, rng);
  TransformCube cube;
  cube.rotation_center = Vec3(0.4, -0.2, 0.8);
  cube.translation_center = Vec3(0.1, 0.05, -0.2);
  const NodeBounds nb = node_bounds(gx, gy, cube);
  const double value = l2_objective(gx, gy, cube.center_transform());
  CHECK(nb.upper == doctest::Approx(value).epsilon(1e-14));
  CHECK(nb.lower == doctest::Approx(value).epsilon(1e-14));
  CHECK((nb.center_transform.rotation - cube.rotation_center).norm() == 0.0);
}

TEST_CASE("node_bounds sandwiches the self-alignment value on the root cube") {
  Rng rng(67);
  const GaussianMixture g = random_mixture(6, rng);
  const NodeBounds nb = node_bounds(g, g, TransformCube::root(0.5));
  const double f_self = l2_objective(g, g, RigidTransform::identity());
  CHECK(nb.lower <= f_self);
  CHECK(f_self <= nb.upper);
  CHECK(nb.lower <= nb.upper);
}

TEST_CASE("node_bounds sandwich sampled minima on random cubes") {
  Rng rng(68);
  for (int trial = 0; trial < 40; ++trial) {
    const GaussianMixture gx = random_mixture(3, rng);
    const GaussianMixture gy = random_mixture(3, rng);
    const MixturePair pair(gx, gy);
    const TransformCube cube = random_cube(rng);
    const NodeBounds nb = node_bounds(pair, cube);
    const double sampled_min = sampled_min_objective(pair, cube, 1000, rng);
    CHECK(nb.lower - 1e-9 <= sampled_min);
    CHECK(nb.upper >= sampled_min);
    CHECK(nb.upper ==
          doctest::Approx(pair.objective(cube.center_transform())).epsilon(1e-14));
  }
}

TEST_CASE("bound gap shrinks to zero on nested cubes") {
  Rng rng(75);
  const GaussianMixture gx = random_mixture(5, rng);
  const GaussianMixture gy = random_mixture(5, rng);
  const MixturePair pair(gx, gy);

  TransformCube cube = TransformCube::root(0.5);
  cube.rotation_center = Vec3(0.3, -0.5, 0.2);
  cube.translation_center = Vec3(0.1, 0.0, -0.15);
  cube.rotation_half_width = 1.0;
  cube.translation_half_width = 0.4;

  double previous_gap = std::numeric_limits<double>::infinity();
  for (int level = 0; level < 20; ++level) {
    const NodeBounds nb = node_bounds(pair, cube);
    const double gap = nb.upper - nb.lower;
    CHECK(gap >= 0.0);
    CHECK(gap <= previous_gap + 1e-12);
    previous_gap = gap;
    cube.rotation_half_width *= 0.5;
    cube.translation_half_width *= 0.5;
  }
  CHECK(previous_gap < 1e-6);
}

TEST_CASE("batch_node_bounds equals the sequential mapping") {
  Rng rng(70);
  const GaussianMixture gx = random_mixture(4, rng);
  const GaussianMixture gy = random_mixture(5, rng);
  const MixturePair pair(gx, gy);

  CHECK(batch_node_bounds(pair, {}).empty());

  const TransformCube parent = random_cube(rng);
  const std::vector<TransformCube> children = subdivide(parent, 2);
  const std::vector<NodeBounds> sequential = batch_node_bounds(pair, children, 1);
  REQUIRE(sequential.size() == children.size());
  for (std::size_t i = 0; i < children.size(); ++i) {
    const NodeBounds direct = node_bounds(pair, children[i]);
    CHECK(std::abs(sequential[i].lower - direct.lower) <= 1e-14);
    CHECK(std::abs(sequential[i].upper - direct.upper) <= 1e-14);
  }

  for (int threads : {2, 3, 8}) {
    const std::vector<NodeBounds> parallel = batch_node_bounds(pair, children, threads);
    REQUIRE(parallel.size() == sequential.size());
    for (std::size_t i = 0; i < sequential.size(); ++i) {
      CHECK(parallel[i].lower == sequential[i].lower);  // bitwise: same code path
      CHECK(parallel[i].upper == sequential[i].upper);
    }
  }

  const std::vector<TransformCube> singleton = {parent};
  const std::vector<NodeBounds> one = batch_node_bounds(pair, singleton);
  const NodeBounds direct = node_bounds(pair, parent);
  CHECK(one.size() == 1);
  CHECK(one[0].lower == direct.lower);
  CHECK(one[0].upper == direct.upper);
}

TEST_CASE("make_pair_geometry satisfies its invariants") {
  Rng rng(71);
  for (int trial = 0; trial < 2000; ++trial) {
    const TransformCube cube = random_cube(rng);
    const Vec3 x = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const Vec3 y = rng.vector_in_cube(Vec3::Zero(), 1.0);
    const PairGeometry geom = make_pair_geometry(x, y, cube);
    CHECK(geom.alpha >= 0.0);
    CHECK(geom.alpha <= M_PI);
    CHECK(geom.beta >= 0.0);
    CHECK(geom.beta <= M_PI);
    CHECK(geom.rho >= 0.0);
    CHECK(geom.x0.norm() == doctest::Approx(geom.x_norm).epsilon(1e-12));
    CHECK((geom.y_prime - (y - cube.translation_center)).norm() < 1e-15);
  }
}
