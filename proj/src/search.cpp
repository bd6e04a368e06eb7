#include "gmalign/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>

#include "gmalign/parallel.hpp"

namespace gmalign {
namespace {

constexpr double kDomainSlack = 1e-9;  // tolerance for boundary-touching refinements

struct QueueNode {
  TransformCube cube;
  double lower = 0.0;
  double upper = 0.0;
  std::uint64_t seq = 0;
};

// Min-heap on the lower bound; among equals prefer deeper cubes, then older ones.
struct NodeOrder {
  bool operator()(const QueueNode& a, const QueueNode& b) const {
    if (a.lower != b.lower) return a.lower > b.lower;
    if (a.cube.depth != b.cube.depth) return a.cube.depth < b.cube.depth;
    return a.seq > b.seq;
  }
};

// Wraps the rotation into the pi-ball and checks the translation against the
// search domain. Returns false when the refined translation escaped the box.
bool canonicalize_into_domain(RigidTransform& t, const TransformCube& root) {
  t.rotation = wrap_angle_axis(t.rotation);
  const Vec3 offset = t.translation - root.translation_center;
  return offset.cwiseAbs().maxCoeff() <= root.translation_half_width + kDomainSlack;
}

// Refines from each listed child center in parallel; results land in slots
// indexed like `starts`, so the outcome is independent of the thread count.
std::vector<LocalRefineResult> refine_batch(const MixturePair& pair,
                                            const std::vector<RigidTransform>& starts,
                                            const RefineOptions& options, int threads) {
  std::vector<LocalRefineResult> results(starts.size());
  parallel_for_index(starts.size(), threads, [&](std::size_t i) {
    results[i] = local_refine(pair, starts[i], options);
  });
  return results;
}

double elapsed_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

const char* to_string(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kConverged:
      return "converged";
    case TerminationReason::kTimeBudget:
      return "time_budget";
    case TerminationReason::kQueueOverflow:
      return "queue_overflow";
  }
  return "unknown";
}

TransformCube SearchConfig::root_cube() const {
  if (root) return *root;
  return TransformCube::root(tau);
}

void SearchConfig::validate() const {
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (epsilon_relative && !(*epsilon_relative > 0.0))
    throw std::invalid_argument("epsilon_relative must be positive");
  if (split < 2) throw std::invalid_argument("split must be at least 2");
  if (!(tau > 0.0) || tau > 1.0) throw std::invalid_argument("tau must lie in (0, 1]");
  if (threads < 1) throw std::invalid_argument("threads must be at least 1");
  if (max_queue < 1) throw std::invalid_argument("max_queue must be at least 1");
  if (time_budget_seconds && !(*time_budget_seconds >= 0.0))
    throw std::invalid_argument("time_budget_seconds must be non-negative");
  if (root) {
    if (!(root->rotation_half_width > 0.0) || !(root->translation_half_width > 0.0))
      throw std::invalid_argument("root cube must have positive half-widths");
  }
  refine.validate();
}

std::pair<double, RigidTransform> batch_initialize(const MixturePair& pair,
                                                   const TransformCube& root, int split,
                                                   const RefineOptions& options, int threads) {
  const std::vector<TransformCube> children = subdivide(root, split);
  std::vector<RigidTransform> starts;
  starts.reserve(children.size());
  for (const TransformCube& child : children) starts.push_back(child.center_transform());
  const std::vector<LocalRefineResult> refined = refine_batch(pair, starts, options, threads);

  std::size_t best = 0;
  for (std::size_t i = 1; i < refined.size(); ++i)
    if (refined[i].value < refined[best].value) best = i;
  return {refined[best].value, refined[best].transform};
}

RegistrationResult align(const GaussianMixture& gx, const GaussianMixture& gy,
                         const SearchConfig& config) {
  config.validate();
  const MixturePair pair(gx, gy);
  const TransformCube root = config.root_cube();
  const auto start_time = std::chrono::steady_clock::now();

  RegistrationResult result;

  // Incumbent: the domain center is always feasible, so f* starts well defined.
  RigidTransform best_transform = root.center_transform();
  double best_value = pair.objective(best_transform);

  // Folds a refinement result into the incumbent; returns true on improvement.
  const auto accept = [&](const LocalRefineResult& refined) {
    RigidTransform candidate = refined.transform;
    if (!canonicalize_into_domain(candidate, root)) return false;
    // Re-evaluate at the wrapped transform so best_value always matches
    // the objective at best_transform exactly.
    const double value = pair.objective(candidate);
    if (value >= best_value) return false;
    best_value = value;
    best_transform = candidate;
    return true;
  };

  if (config.batch_init) {
    const std::vector<TransformCube> children = subdivide(root, config.split);
    std::vector<RigidTransform> starts;
    starts.reserve(children.size());
    for (const TransformCube& child : children) starts.push_back(child.center_transform());
    const std::vector<LocalRefineResult> refined =
        refine_batch(pair, starts, config.refine, config.threads);
    result.refinements_run += refined.size();
    for (const LocalRefineResult& r : refined) accept(r);
  } else {
    const LocalRefineResult refined = local_refine(pair, best_transform, config.refine);
    result.refinements_run += 1;
    accept(refined);
  }

  const NodeBounds root_bounds = node_bounds(pair, root);
  double reported_lower = std::min(root_bounds.lower, best_value);

  std::priority_queue<QueueNode, std::vector<QueueNode>, NodeOrder> queue;
  std::uint64_t seq = 0;
  queue.push(QueueNode{root, root_bounds.lower, root_bounds.upper, seq++});

  result.trace.push_back(TraceSample{elapsed_since(start_time), best_value, reported_lower});

  result.reason = TerminationReason::kConverged;
  result.epsilon_optimal = true;
  // Skip the line-8 refinements when expanding the root itself: batch
  // initialization already refined from those exact child centers.
  bool root_expansion_refined = config.batch_init;

  while (true) {
    if (queue.empty()) {
      // Every region was either expanded away or certified above f*.
      reported_lower = best_value;
      result.trace.push_back(
          TraceSample{elapsed_since(start_time), best_value, reported_lower});
      break;
    }
    if (config.time_budget_seconds &&
        elapsed_since(start_time) >= *config.time_budget_seconds) {
      result.reason = TerminationReason::kTimeBudget;
      result.epsilon_optimal = false;
      break;
    }

    const QueueNode node = queue.top();
    queue.pop();

    const double effective_lower = std::min(node.lower, best_value);
    if (effective_lower > reported_lower) {
      reported_lower = effective_lower;
      result.trace.push_back(
          TraceSample{elapsed_since(start_time), best_value, reported_lower});
    }

    const double epsilon = config.epsilon_relative
                               ? *config.epsilon_relative * std::abs(best_value)
                               : config.epsilon;
    if (best_value - reported_lower <= epsilon) break;

    std::vector<TransformCube> children = subdivide(node.cube, config.split);
    if (config.prune_rotation_cubes) {
      children.erase(std::remove_if(children.begin(), children.end(),
                                    [](const TransformCube& c) {
                                      return rotation_cube_prunable(c);
                                    }),
                     children.end());
    }
    const std::vector<NodeBounds> child_bounds =
        batch_node_bounds(pair, children, config.threads);
    result.nodes_expanded += 1;

    // Decide the refinement set against a snapshot of f* so the set (and with
    // it the whole run) does not depend on how refinements are scheduled.
    const bool skip_refine = root_expansion_refined && node.cube.depth == root.depth;
    root_expansion_refined = false;
    if (!skip_refine) {
      const double snapshot = best_value;
      std::vector<std::size_t> refine_set;
      std::vector<RigidTransform> starts;
      for (std::size_t i = 0; i < children.size(); ++i) {
        if (child_bounds[i].upper < snapshot) {
          refine_set.push_back(i);
          starts.push_back(child_bounds[i].center_transform);
        }
      }
      const std::vector<LocalRefineResult> refined =
          refine_batch(pair, starts, config.refine, config.threads);
      result.refinements_run += refined.size();
      bool improved = false;
      for (const LocalRefineResult& r : refined) improved = accept(r) || improved;
      if (improved) {
        result.trace.push_back(
            TraceSample{elapsed_since(start_time), best_value, reported_lower});
      }
    }

    for (std::size_t i = 0; i < children.size(); ++i) {
      if (child_bounds[i].lower < best_value) {
        queue.push(
            QueueNode{children[i], child_bounds[i].lower, child_bounds[i].upper, seq++});
      }
    }
    if (queue.size() > config.max_queue) {
      result.reason = TerminationReason::kQueueOverflow;
      result.epsilon_optimal = false;
      break;
    }
  }

  result.best_transform = best_transform;
  result.best_value = best_value;
  result.final_lower = std::min(reported_lower, best_value);
  result.gap = result.best_value - result.final_lower;
  result.runtime_seconds = elapsed_since(start_time);
  result.trace.push_back(
      TraceSample{result.runtime_seconds, result.best_value, result.final_lower});
  return result;
}

void export_trace(const RegistrationResult& result, std::ostream& out) {
  char line[128];
  for (const TraceSample& sample : result.trace) {
    std::snprintf(line, sizeof(line), "%.9g %.17g %.17g\n", sample.elapsed_seconds,
                  sample.upper, sample.lower);
    out << line;
  }
}

}  // namespace gmalign
