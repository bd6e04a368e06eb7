#include "gmalign/objective.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace gmalign {

MixturePair::MixturePair(const GaussianMixture& gx, const GaussianMixture& gy) {
  gx.validate();
  gy.validate();
  x_means_ = gx.means;
  y_means_ = gy.means;
  const std::size_t m = x_means_.size();
  const std::size_t n = y_means_.size();
  coeff_.resize(m * n);
  inv_two_s_.resize(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double s = gx.variances[i] + gy.variances[j];
      coeff_[i * n + j] =
          gx.weights[i] * gy.weights[j] / std::pow(2.0 * M_PI * s, 1.5);
      inv_two_s_[i * n + j] = 1.0 / (2.0 * s);
    }
  }
}

double MixturePair::objective(const RigidTransform& t) const {
  const Mat3 rot = t.rotation_matrix();
  const std::size_t m = x_means_.size();
  const std::size_t n = y_means_.size();
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 moved = rot * x_means_[i] + t.translation;
    const double* coeff_row = coeff_.data() + i * n;
    const double* inv_row = inv_two_s_.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double e2 = (moved - y_means_[j]).squaredNorm();
      total += coeff_row[j] * std::exp(-e2 * inv_row[j]);
    }
  }
  return -total;
}

double MixturePair::objective_and_gradient(const RigidTransform& t, Vec6* grad) const {
  const Mat3 rot = rotation_from_angle_axis(t.rotation);
  const std::size_t m = x_means_.size();
  const std::size_t n = y_means_.size();
  double total = 0.0;
  Vec3 grad_r = Vec3::Zero();
  Vec3 grad_t = Vec3::Zero();
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 moved = rot * x_means_[i] + t.translation;
    const double* coeff_row = coeff_.data() + i * n;
    const double* inv_row = inv_two_s_.data() + i * n;
    // d f / d d_ij = coeff * exp(.) * d_ij / s; fold the j-sum per i so the
    // rotation Jacobian is applied once per x mean.
    Vec3 accum = Vec3::Zero();
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 diff = moved - y_means_[j];
      const double kernel = coeff_row[j] * std::exp(-diff.squaredNorm() * inv_row[j]);
      total += kernel;
      accum += (2.0 * inv_row[j] * kernel) * diff;
    }
    grad_t += accum;
    grad_r += rotation_point_jacobian(t.rotation, x_means_[i]).transpose() * accum;
  }
  if (grad) {
    grad->head<3>() = grad_r;
    grad->tail<3>() = grad_t;
  }
  return -total;
}

Vec6 MixturePair::gradient(const RigidTransform& t) const {
  Vec6 grad;
  objective_and_gradient(t, &grad);
  return grad;
}

double l2_objective(const GaussianMixture& gx, const GaussianMixture& gy,
                    const RigidTransform& t) {
  return MixturePair(gx, gy).objective(t);
}

Vec6 l2_objective_gradient(const GaussianMixture& gx, const GaussianMixture& gy,
                           const RigidTransform& t) {
  return MixturePair(gx, gy).gradient(t);
}

namespace {

constexpr double kSufficientDecrease = 1e-4;
constexpr double kStepShrink = 0.5;
constexpr int kMaxBacktracks = 40;

RigidTransform to_transform(const Vec6& x) {
  return {x.head<3>(), x.tail<3>()};
}

}  // namespace

void RefineOptions::validate() const {
  if (max_iters < 0) throw std::invalid_argument("max_iters must be non-negative");
  if (!(grad_tol >= 0.0)) throw std::invalid_argument("grad_tol must be non-negative");
  if (memory < 1) throw std::invalid_argument("memory must be at least 1");
}

LocalRefineResult local_refine(const MixturePair& pair, const RigidTransform& start,
                               const RefineOptions& options) {
  Vec6 x;
  x.head<3>() = start.rotation;
  x.tail<3>() = start.translation;

  Vec6 grad;
  double value = pair.objective_and_gradient(to_transform(x), &grad);
  if (options.value_history) options.value_history->push_back(value);

  Vec6 best_x = x;
  double best_value = value;

  struct CurvaturePair {
    Vec6 s;
    Vec6 y;
    double rho;
  };
  std::deque<CurvaturePair> history;

  LocalRefineResult result;
  result.converged = false;

  int iter = 0;
  for (; iter < options.max_iters; ++iter) {
    if (grad.lpNorm<Eigen::Infinity>() <= options.grad_tol) {
      result.converged = true;
      break;
    }

    // Two-loop recursion for the quasi-Newton direction.
    Vec6 q = grad;
    std::vector<double> alpha(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      alpha[k] = history[k].rho * history[k].s.dot(q);
      q -= alpha[k] * history[k].y;
    }
    if (!history.empty()) {
      const CurvaturePair& last = history.back();
      q *= last.s.dot(last.y) / last.y.squaredNorm();
    }
    for (std::size_t k = 0; k < history.size(); ++k) {
      const double beta = history[k].rho * history[k].y.dot(q);
      q += (alpha[k] - beta) * history[k].s;
    }
    Vec6 direction = -q;
    double directional = direction.dot(grad);
    if (!(directional < 0.0)) {
      direction = -grad;
      directional = -grad.squaredNorm();
    }

    // Backtracking line search with the sufficient-decrease test.
    double step = 1.0;
    bool accepted = false;
    Vec6 next_x;
    double next_value = 0.0;
    for (int bt = 0; bt < kMaxBacktracks; ++bt) {
      next_x = x + step * direction;
      next_value = pair.objective(to_transform(next_x));
      if (next_value < best_value) {
        best_value = next_value;
        best_x = next_x;
      }
      if (next_value <= value + kSufficientDecrease * step * directional) {
        accepted = true;
        break;
      }
      step *= kStepShrink;
    }
    if (!accepted) {
      break;
    }

    Vec6 next_grad;
    pair.objective_and_gradient(to_transform(next_x), &next_grad);

    CurvaturePair cp;
    cp.s = next_x - x;
    cp.y = next_grad - grad;
    const double sy = cp.s.dot(cp.y);
    if (sy > 1e-10 * cp.s.norm() * cp.y.norm()) {
      cp.rho = 1.0 / sy;
      history.push_back(cp);
      if (static_cast<int>(history.size()) > options.memory) history.pop_front();
    }

    x = next_x;
    value = next_value;
    grad = next_grad;
    if (options.value_history) options.value_history->push_back(value);
  }

  result.transform = to_transform(best_x);
  result.value = best_value;
  result.iterations = iter;
  return result;
}

LocalRefineResult local_refine(const GaussianMixture& gx, const GaussianMixture& gy,
                               const RigidTransform& start, const RefineOptions& options) {
  return local_refine(MixturePair(gx, gy), start, options);
}

}  // namespace gmalign
