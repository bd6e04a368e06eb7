#pragma once

#include <vector>

#include "gmalign/objective.hpp"
#include "gmalign/se3.hpp"

namespace gmalign {

// Geometry of one (x_i, y_j) pair relative to a transform cube: x0 is the
// x mean rotated by the cube's rotation center, y_prime the y mean shifted
// by the translation center, alpha the angle between them, beta the aperture
// of the spherical cap swept by the rotation cube and rho the translation
// sphere radius.
struct PairGeometry {
  double x_norm = 0.0;
  Vec3 x0 = Vec3::Zero();
  Vec3 y_prime = Vec3::Zero();
  double alpha = 0.0;
  double beta = 0.0;
  double rho = 0.0;
};

PairGeometry make_pair_geometry(const Vec3& x, const Vec3& y, const TransformCube& cube);

// Residual at the cube center, an upper bound on the minimal pairwise
// residual over the cube.
double pairwise_upper(const Vec3& x, const Vec3& y, const RigidTransform& center);

// Minimum Euclidean distance from y_prime to the spherical cap swept by x0
// under rotations within aperture beta: the radial distance when y_prime
// lies inside the rotation cone (alpha <= beta), otherwise the distance to
// the cap edge point coplanar with x0 and y_prime.
double spherical_cap_distance(const PairGeometry& geom);

// Cap distance minus the translation radius, clamped at zero: a valid lower
// bound on the pairwise residual over the whole cube.
double pairwise_lower(const Vec3& x, const Vec3& y, const TransformCube& cube);

// Rotation-independent sphere-distance bound, kept as the comparison
// baseline the cap bound dominates.
double pairwise_lower_sphere(const Vec3& x, const Vec3& y, const TransformCube& cube);

struct NodeBounds {
  double lower = 0.0;
  double upper = 0.0;
  RigidTransform center_transform;
};

// Kernelised objective bounds over a cube: upper is the exact objective at
// the cube center, lower sums the kernelised pairwise lower bounds.
NodeBounds node_bounds(const MixturePair& pair, const TransformCube& cube);
NodeBounds node_bounds(const GaussianMixture& gx, const GaussianMixture& gy,
                       const TransformCube& cube);

// Element-wise node_bounds over a list of cubes. Work may fan out across
// `threads` workers; each slot is computed independently so the output is
// order-preserving and identical for any worker count.
std::vector<NodeBounds> batch_node_bounds(const MixturePair& pair,
                                          const std::vector<TransformCube>& cubes,
                                          int threads = 1);

}  // namespace gmalign
