#pragma once

#include <vector>

#include "gmalign/mixture.hpp"
#include "gmalign/se3.hpp"

namespace gmalign {

// Precomputed per-pair constants of the kernelised L2 objective
//   f(R, t) = -sum_ij coeff_ij * exp(-|R x_i + t - y_j|^2 / (2 s_ij))
// with s_ij = var_xi + var_yj and coeff_ij = w_xi * w_yj / (2 pi s_ij)^(3/2),
// so each summand is the closed-form Gaussian overlap of the pair. The value
// is the (negated) cross term of the L2 distance between the two densities;
// the discarded self-overlap terms are constant in (R, t).
class MixturePair {
 public:
  MixturePair(const GaussianMixture& gx, const GaussianMixture& gy);

  double objective(const RigidTransform& t) const;
  Vec6 gradient(const RigidTransform& t) const;
  double objective_and_gradient(const RigidTransform& t, Vec6* grad) const;

  std::size_t x_count() const { return x_means_.size(); }
  std::size_t y_count() const { return y_means_.size(); }
  const std::vector<Vec3>& x_means() const { return x_means_; }
  const std::vector<Vec3>& y_means() const { return y_means_; }
  // Row-major [i * y_count + j] pair tables.
  const std::vector<double>& pair_coeff() const { return coeff_; }
  const std::vector<double>& pair_inv_two_s() const { return inv_two_s_; }

 private:
  std::vector<Vec3> x_means_;
  std::vector<Vec3> y_means_;
  std::vector<double> coeff_;
  std::vector<double> inv_two_s_;
};

double l2_objective(const GaussianMixture& gx, const GaussianMixture& gy,
                    const RigidTransform& t);

// Gradient with respect to (rotation, translation), rotation part through the
// Rodrigues map.
Vec6 l2_objective_gradient(const GaussianMixture& gx, const GaussianMixture& gy,
                           const RigidTransform& t);

struct RefineOptions {
  int max_iters = 200;
  double grad_tol = 1e-6;
  int memory = 10;
  // When set, receives the objective value of every accepted iterate
  // (starting value first).
  std::vector<double>* value_history = nullptr;

  void validate() const;  // throws std::invalid_argument
};

struct LocalRefineResult {
  RigidTransform transform;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Limited-memory quasi-Newton descent with backtracking line search from
// `start`, unconstrained in all six parameters. Returns the best transform
// visited; the result value is never worse than the starting value.
LocalRefineResult local_refine(const MixturePair& pair, const RigidTransform& start,
                               const RefineOptions& options = {});
LocalRefineResult local_refine(const GaussianMixture& gx, const GaussianMixture& gy,
                               const RigidTransform& start, const RefineOptions& options = {});

}  // namespace gmalign
