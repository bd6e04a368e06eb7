#include "gmalign/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "gmalign/rng.hpp"

namespace gmalign {

namespace {

constexpr double kVarianceFloor = 1e-8;  // normalized units

double gaussian_log_density(const Vec3& p, const Vec3& mean, double variance) {
  const double d2 = (p - mean).squaredNorm();
  return -1.5 * std::log(2.0 * M_PI * variance) - d2 / (2.0 * variance);
}

}  // namespace

void GaussianMixture::validate() const {
  if (means.empty()) {
    throw std::invalid_argument("mixture: no components");
  }
  if (variances.size() != means.size() || weights.size() != means.size()) {
    throw std::invalid_argument("mixture: component lists have mismatched sizes");
  }
  double weight_sum = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (!(variances[i] > 0.0)) {
      throw std::invalid_argument("mixture: non-positive variance");
    }
    if (!(weights[i] > 0.0)) {
      throw std::invalid_argument("mixture: non-positive weight");
    }
    weight_sum += weights[i];
  }
  if (std::abs(weight_sum - 1.0) > 1e-9) {
    throw std::invalid_argument("mixture: weights do not sum to 1");
  }
}

std::pair<PointCloud, FrameNormalization> normalize_point_cloud(const PointCloud& cloud) {
  if (cloud.empty()) {
    throw std::invalid_argument("normalize_point_cloud: empty cloud");
  }
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cloud) {
    if (!p.allFinite()) {
      throw std::invalid_argument("normalize_point_cloud: non-finite coordinate");
    }
    centroid += p;
  }
  centroid /= static_cast<double>(cloud.size());

  double max_abs = 0.0;
  for (const Vec3& p : cloud) {
    max_abs = std::max(max_abs, (p - centroid).cwiseAbs().maxCoeff());
  }
  FrameNormalization frame;
  frame.centroid_offset = centroid;
  frame.scale = max_abs > 0.0 ? max_abs : 1.0;

  PointCloud normalized;
  normalized.reserve(cloud.size());
  for (const Vec3& p : cloud) {
    normalized.push_back(frame.to_normalized(p));
  }
  return {std::move(normalized), frame};
}

std::vector<Vec3> kde_select_means(const PointCloud& cloud, std::size_t target_components,
                                   std::uint64_t seed) {
  if (cloud.empty()) {
    throw std::invalid_argument("kde_select_means: empty cloud");
  }
  if (target_components < 1) {
    throw std::invalid_argument("kde_select_means: target_components must be >= 1");
  }
  const std::size_t count = std::min(target_components, cloud.size());
  // Partial Fisher-Yates over an index array; draws are hand-mapped so the
  // subsample is reproducible across standard libraries.
  std::vector<std::size_t> indices(cloud.size());
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(seed);
  std::vector<Vec3> means;
  means.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.index(indices.size() - i);
    std::swap(indices[i], indices[j]);
    means.push_back(cloud[indices[i]]);
  }
  return means;
}

GaussianMixture build_kde_mixture(const PointCloud& cloud, std::size_t target_components,
                                  double bandwidth, std::uint64_t seed) {
  if (!(bandwidth > 0.0)) {
    throw std::invalid_argument("build_kde_mixture: bandwidth must be positive");
  }
  GaussianMixture mixture;
  mixture.means = kde_select_means(cloud, target_components, seed);
  const std::size_t count = mixture.means.size();
  mixture.variances.assign(count, bandwidth * bandwidth);
  mixture.weights.assign(count, 1.0 / static_cast<double>(count));
  return mixture;
}

double default_kde_bandwidth(const PointCloud& cloud, std::size_t target_components,
                             std::uint64_t seed) {
  const std::vector<Vec3> means = kde_select_means(cloud, target_components, seed);
  if (means.size() < 2) {
    return 1.0;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < means.size(); ++j) {
      if (j == i) continue;
      nearest = std::min(nearest, (means[i] - means[j]).norm());
    }
    total += nearest;
  }
  return 2.0 * total / static_cast<double>(means.size());
}

namespace {

std::vector<Vec3> farthest_point_seeds(const PointCloud& cloud, std::size_t components,
                                       Rng& rng) {
  std::vector<Vec3> seeds;
  seeds.reserve(components);
  seeds.push_back(cloud[rng.index(cloud.size())]);
  std::vector<double> dist2(cloud.size(), std::numeric_limits<double>::infinity());
  while (seeds.size() < components) {
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t k = 0; k < cloud.size(); ++k) {
      dist2[k] = std::min(dist2[k], (cloud[k] - seeds.back()).squaredNorm());
      if (dist2[k] > best_d2) {
        best_d2 = dist2[k];
        best = k;
      }
    }
    seeds.push_back(cloud[best]);
  }
  return seeds;
}

double global_spread_variance(const PointCloud& cloud) {
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : cloud) centroid += p;
  centroid /= static_cast<double>(cloud.size());
  double sum = 0.0;
  for (const Vec3& p : cloud) sum += (p - centroid).squaredNorm();
  return std::max(sum / (3.0 * static_cast<double>(cloud.size())), kVarianceFloor);
}

// log p(point | mixture) for every point, via log-sum-exp.
double log_likelihood(const PointCloud& cloud, const GaussianMixture& mixture,
                      std::vector<double>* log_resp_buffer) {
  const std::size_t n = cloud.size();
  const std::size_t k = mixture.size();
  double total = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    double max_term = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c) {
      const double term = std::log(mixture.weights[c]) +
                          gaussian_log_density(cloud[p], mixture.means[c], mixture.variances[c]);
      (*log_resp_buffer)[p * k + c] = term;
      max_term = std::max(max_term, term);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      sum += std::exp((*log_resp_buffer)[p * k + c] - max_term);
    }
    const double log_norm = max_term + std::log(sum);
    for (std::size_t c = 0; c < k; ++c) {
      (*log_resp_buffer)[p * k + c] -= log_norm;
    }
    total += log_norm;
  }
  return total;
}

}  // namespace

GaussianMixture build_em_mixture(const PointCloud& cloud, std::size_t components,
                                 int max_iters, double tol, std::uint64_t seed,
                                 std::vector<double>* loglik_history) {
  if (components < 1) {
    throw std::invalid_argument("build_em_mixture: components must be >= 1");
  }
  if (components > cloud.size()) {
    throw std::invalid_argument("build_em_mixture: more components than points");
  }
  Rng rng(seed);
  GaussianMixture mixture;
  mixture.means = farthest_point_seeds(cloud, components, rng);
  mixture.variances.assign(components, global_spread_variance(cloud));
  mixture.weights.assign(components, 1.0 / static_cast<double>(components));

  const std::size_t n = cloud.size();
  const std::size_t k = components;
  std::vector<double> log_resp(n * k);
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < max_iters; ++iter) {
    const double ll = log_likelihood(cloud, mixture, &log_resp);
    if (loglik_history) loglik_history->push_back(ll);
    if (ll - prev_ll < tol && iter > 0) break;
    prev_ll = ll;

    for (std::size_t c = 0; c < k; ++c) {
      double mass = 0.0;
      Vec3 mean_acc = Vec3::Zero();
      for (std::size_t p = 0; p < n; ++p) {
        const double r = std::exp(log_resp[p * k + c]);
        mass += r;
        mean_acc += r * cloud[p];
      }
      if (mass <= 1e-12) {
        // Dead component: restart it at the point the mixture explains worst.
        std::size_t worst = 0;
        double worst_density = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < n; ++p) {
          const double d = mixture_density(mixture, cloud[p]);
          if (d < worst_density) {
            worst_density = d;
            worst = p;
          }
        }
        mixture.means[c] = cloud[worst];
        mixture.variances[c] = global_spread_variance(cloud);
        mixture.weights[c] = 1.0 / static_cast<double>(n);
        continue;
      }
      const Vec3 mean = mean_acc / mass;
      double var_acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        var_acc += std::exp(log_resp[p * k + c]) * (cloud[p] - mean).squaredNorm();
      }
      mixture.means[c] = mean;
      mixture.variances[c] = std::max(var_acc / (3.0 * mass), kVarianceFloor);
      mixture.weights[c] = mass / static_cast<double>(n);
    }
    // Reinitialized components above may leave the weights off unity.
    const double weight_sum =
        std::accumulate(mixture.weights.begin(), mixture.weights.end(), 0.0);
    for (double& w : mixture.weights) w /= weight_sum;
  }
  return mixture;
}

double mixture_density(const GaussianMixture& mixture, const Vec3& p) {
  double density = 0.0;
  for (std::size_t i = 0; i < mixture.size(); ++i) {
    density += mixture.weights[i] *
               std::exp(gaussian_log_density(p, mixture.means[i], mixture.variances[i]));
  }
  return density;
}

GaussianMixture transformed_mixture(const GaussianMixture& mixture, const RigidTransform& t) {
  GaussianMixture out = mixture;
  const Mat3 rot = t.rotation_matrix();
  for (Vec3& mean : out.means) {
    mean = rot * mean + t.translation;
  }
  return out;
}

}  // namespace gmalign
