#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <utility>
#include <vector>

#include "gmalign/bounds.hpp"
#include "gmalign/mixture.hpp"
#include "gmalign/objective.hpp"
#include "gmalign/se3.hpp"

namespace gmalign {

enum class TerminationReason {
  kConverged,      // gap closed below epsilon (or the queue emptied)
  kTimeBudget,     // wall-clock budget expired; best-so-far returned
  kQueueOverflow,  // node cap exceeded; best-so-far returned
};

const char* to_string(TerminationReason reason);

struct SearchConfig {
  double epsilon = 0.1;                    // absolute optimality gap
  std::optional<double> epsilon_relative;  // when set, gap target is eps_rel * |f*|
  int split = 2;                           // per-axis branching factor
  double tau = 0.5;                        // translation domain half-width
  bool batch_init = true;                  // refine from every first-level child center
  bool prune_rotation_cubes = true;        // drop rotation cubes outside the pi-ball
  std::optional<double> time_budget_seconds;
  std::size_t max_queue = 50'000'000;
  int threads = 1;
  std::optional<TransformCube> root;  // defaults to [-pi,pi]^3 x [-tau,tau]^3
  RefineOptions refine;

  TransformCube root_cube() const;
  void validate() const;  // throws std::invalid_argument
};

struct TraceSample {
  double elapsed_seconds = 0.0;
  double upper = 0.0;  // incumbent f*
  double lower = 0.0;  // certified global lower bound
};

struct RegistrationResult {
  RigidTransform best_transform;
  double best_value = 0.0;
  double final_lower = 0.0;
  double gap = 0.0;
  bool epsilon_optimal = false;
  TerminationReason reason = TerminationReason::kConverged;
  std::uint64_t nodes_expanded = 0;
  std::uint64_t refinements_run = 0;
  double runtime_seconds = 0.0;
  std::vector<TraceSample> trace;
};

// Branch-and-bound search for the globally optimal alignment of gx onto gy:
// best-first on lower bounds, epsilon-optimal termination, local refinement
// from the center of any sub-cube whose upper bound beats the incumbent.
RegistrationResult align(const GaussianMixture& gx, const GaussianMixture& gy,
                         const SearchConfig& config);

// Local refinement from every child-cube center of the first subdivision;
// returns the best value found and its transform.
std::pair<double, RigidTransform> batch_initialize(const MixturePair& pair,
                                                   const TransformCube& root, int split,
                                                   const RefineOptions& options = {},
                                                   int threads = 1);

// Writes trace rows as "elapsed_seconds upper lower" lines.
void export_trace(const RegistrationResult& result, std::ostream& out);

}  // namespace gmalign
