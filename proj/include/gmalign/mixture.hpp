#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "gmalign/se3.hpp"

namespace gmalign {

using PointCloud = std::vector<Vec3>;

// Map between source coordinates and the canonical centered frame:
// normalized = (source - centroid_offset) / scale.
struct FrameNormalization {
  Vec3 centroid_offset = Vec3::Zero();
  double scale = 1.0;

  Vec3 to_normalized(const Vec3& p) const { return (p - centroid_offset) / scale; }
  Vec3 to_source(const Vec3& p) const { return p * scale + centroid_offset; }
};

// Weighted set of isotropic Gaussian components.
struct GaussianMixture {
  std::vector<Vec3> means;
  std::vector<double> variances;
  std::vector<double> weights;

  std::size_t size() const { return means.size(); }

  // Throws std::invalid_argument when the component lists disagree, a weight
  // or variance is non-positive, or the weights do not sum to 1 within 1e-9.
  void validate() const;
};

// Centers the cloud on its centroid and scales so the largest absolute
// coordinate is 1 (scale 1 for a degenerate single-point cloud). Throws on
// empty clouds and non-finite coordinates.
std::pair<PointCloud, FrameNormalization> normalize_point_cloud(const PointCloud& cloud);

// Seeded uniform subsample of min(target_components, cloud size) points,
// reused by build_kde_mixture and the bandwidth heuristic.
std::vector<Vec3> kde_select_means(const PointCloud& cloud, std::size_t target_components,
                                   std::uint64_t seed);

// Fixed-bandwidth kernel density estimate: equal-weight components at a
// seeded subsample of the points, variance = bandwidth^2 everywhere.
GaussianMixture build_kde_mixture(const PointCloud& cloud, std::size_t target_components,
                                  double bandwidth, std::uint64_t seed);

// Twice the mean nearest-neighbor distance of the seeded KDE subsample.
double default_kde_bandwidth(const PointCloud& cloud, std::size_t target_components,
                             std::uint64_t seed);

// Isotropic-covariance EM fit. Means seeded by farthest-point traversal from
// a seeded start, uniform initial weights, initial variance from the global
// spread. Stops after max_iters or when the log-likelihood improves by less
// than tol. Pass loglik_history to capture the per-iteration log-likelihood.
GaussianMixture build_em_mixture(const PointCloud& cloud, std::size_t components,
                                 int max_iters, double tol, std::uint64_t seed,
                                 std::vector<double>* loglik_history = nullptr);

// Mixture density sum_i w_i * N(p | mu_i, var_i * I).
double mixture_density(const GaussianMixture& mixture, const Vec3& p);

// Mixture with every mean replaced by R * mean + t. Exact mixture-level
// analogue of rigidly transforming the underlying point set.
GaussianMixture transformed_mixture(const GaussianMixture& mixture, const RigidTransform& t);

}  // namespace gmalign
