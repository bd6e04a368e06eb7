#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmalign/harness.hpp"
#include "gmalign/mixture.hpp"
#include "gmalign/objective.hpp"
#include "gmalign/search.hpp"
#include "test_support.hpp"

using namespace gmalign;
using test_support::random_mixture;
using test_support::synthetic_cloud;

namespace {

GaussianMixture small_self_mixture(std::uint64_t seed, std::size_t components = 8) {
  const PointCloud cloud = synthetic_cloud(120, seed);
  auto [normalized, frame] = normalize_point_cloud(cloud);
  return build_kde_mixture(normalized, components, 0.18, seed);
}

void check_trace_monotone(const RegistrationResult& result) {
  REQUIRE(!result.trace.empty());
  for (std::size_t i = 1; i < result.trace.size(); ++i) {
    CHECK(result.trace[i].upper <= result.trace[i - 1].upper + 1e-12);
    CHECK(result.trace[i].lower >= result.trace[i - 1].lower - 1e-12);
    CHECK(result.trace[i].elapsed_seconds >= result.trace[i - 1].elapsed_seconds);
  }
}

}  // namespace

TEST_CASE("SearchConfig::validate rejects bad settings") {
  SearchConfig config;
  config.epsilon = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SearchConfig{};
  config.split = 1;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SearchConfig{};
  config.tau = 1.5;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SearchConfig{};
  config.tau = 0.0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SearchConfig{};
  config.threads = 0;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SearchConfig{};
  config.epsilon_relative = -0.5;
  CHECK_THROWS_AS(config.validate(), std::invalid_argument);
  config = SearchConfig{};
  config.validate();

  Rng rng(80);
  const GaussianMixture g = random_mixture(2, rng);
  SearchConfig bad;
  bad.split = 0;
  CHECK_THROWS_AS(align(g, g, bad), std::invalid_argument);
}

TEST_CASE("identical mixtures on a tiny domain converge to the identity") {
  Rng rng(81);
  const GaussianMixture g = random_mixture(5, rng);

  // With first-order bounds the node count scales like (width/epsilon)^3, so
  // the absolute gap target has to stay commensurate with the domain size;
  // the sub-1e-3 transform recovery below comes from refinement, not epsilon.
  SearchConfig config;
  config.epsilon = 1e-3;
  TransformCube root;
  root.rotation_half_width = 0.05;
  root.translation_half_width = 0.05;
  config.root = root;

  const RegistrationResult result = align(g, g, config);
  CHECK(result.epsilon_optimal);
  CHECK(result.reason == TerminationReason::kConverged);
  CHECK(result.gap <= config.epsilon);
  CHECK(result.gap >= -1e-12);
  CHECK(result.best_transform.rotation.norm() < 1e-3);
  CHECK(result.best_transform.translation.norm() < 1e-3);
  CHECK(result.best_value ==
        doctest::Approx(l2_objective(g, g, result.best_transform)).epsilon(1e-12));
  check_trace_monotone(result);
  CHECK(result.trace.back().upper - result.trace.back().lower <= config.epsilon + 1e-15);
}

TEST_CASE("full-domain self-alignment recovers a rotated copy") {
  const GaussianMixture g = small_self_mixture(82);
  const Vec3 rotation = sample_rotations(1, 5)[0];
  const GaussianMixture rotated =
      transformed_mixture(g, RigidTransform{rotation, Vec3::Zero()});

  SearchConfig config;
  config.epsilon_relative = 0.1;
  const RegistrationResult result = align(g, rotated, config);

  const double f_self = l2_objective(g, g, RigidTransform::identity());
  CHECK(result.epsilon_optimal);
  CHECK(result.best_value <= f_self + 0.1 * std::abs(f_self));
  CHECK(result.final_lower <= result.best_value);

  const AlignmentErrors errors =
      alignment_errors(result.best_transform, RigidTransform{rotation, Vec3::Zero()});
  CHECK(errors.rotation_degrees < 5.0);
  CHECK(errors.translation < 0.05);
  check_trace_monotone(result);

  // Batch initialization captures the optimum early: the upper bound after
  // initialization is already within 1e-6 of the final value.
  CHECK(std::abs(result.trace.front().upper - result.best_value) < 1e-6);
}

TEST_CASE("zero time budget returns the initialization incumbent") {
  const GaussianMixture g = small_self_mixture(83);
  SearchConfig config;
  config.epsilon = 1e-9;  // unreachable, so only the budget can stop the run
  config.time_budget_seconds = 0.0;

  const RegistrationResult result = align(g, g, config);
  CHECK(result.reason == TerminationReason::kTimeBudget);
  CHECK_FALSE(result.epsilon_optimal);
  CHECK(result.nodes_expanded == 0);
  CHECK(result.refinements_run >= 1);
  CHECK(result.best_value ==
        doctest::Approx(l2_objective(g, g, result.best_transform)).epsilon(1e-12));
  CHECK(result.gap >= -1e-12);
  check_trace_monotone(result);
}

TEST_CASE("queue cap terminates with a distinct status") {
  Rng rng(84);
  const GaussianMixture gx = random_mixture(4, rng);
  const GaussianMixture gy = random_mixture(4, rng);
  SearchConfig config;
  config.epsilon = 1e-12;
  config.max_queue = 1;

  const RegistrationResult result = align(gx, gy, config);
  CHECK(result.reason == TerminationReason::kQueueOverflow);
  CHECK_FALSE(result.epsilon_optimal);
  CHECK(result.nodes_expanded >= 1);
  CHECK(result.gap >= -1e-12);
}

TEST_CASE("disabling batch initialization still seeds a refined incumbent") {
  Rng rng(85);
  const GaussianMixture g = random_mixture(5, rng);
  SearchConfig config;
  config.epsilon = 1e-3;
  config.batch_init = false;
  TransformCube root;
  root.rotation_half_width = 0.05;
  root.translation_half_width = 0.05;
  config.root = root;

  const RegistrationResult result = align(g, g, config);
  CHECK(result.epsilon_optimal);
  CHECK(result.refinements_run >= 1);
  CHECK(result.best_transform.rotation.norm() < 1e-3);
}

TEST_CASE("runs are deterministic and independent of the worker count") {
  const GaussianMixture g = small_self_mixture(86, 6);
  const Vec3 rotation = sample_rotations(1, 9)[0];
  const GaussianMixture rotated =
      transformed_mixture(g, RigidTransform{rotation, Vec3::Zero()});

  SearchConfig config;
  config.epsilon_relative = 0.15;

  const RegistrationResult a = align(g, rotated, config);
  const RegistrationResult b = align(g, rotated, config);
  SearchConfig threaded = config;
  threaded.threads = 3;
  const RegistrationResult c = align(g, rotated, threaded);

  for (const RegistrationResult* other : {&b, &c}) {
    CHECK(a.best_value == other->best_value);
    CHECK(a.final_lower == other->final_lower);
    CHECK((a.best_transform.rotation - other->best_transform.rotation).norm() == 0.0);
    CHECK((a.best_transform.translation - other->best_transform.translation).norm() ==
          0.0);
    CHECK(a.nodes_expanded == other->nodes_expanded);
    CHECK(a.refinements_run == other->refinements_run);
    REQUIRE(a.trace.size() == other->trace.size());
    for (std::size_t i = 0; i < a.trace.size(); ++i) {
      CHECK(a.trace[i].upper == other->trace[i].upper);
      CHECK(a.trace[i].lower == other->trace[i].lower);
    }
  }
}

TEST_CASE("batch_initialize equals the sequential minimum over child refinements") {
  Rng rng(87);
  const GaussianMixture gx = random_mixture(4, rng);
  const GaussianMixture gy = random_mixture(4, rng);
  const MixturePair pair(gx, gy);
  const TransformCube root = TransformCube::root(0.5);

  const auto [value, transform] = batch_initialize(pair, root, 2);

  double best = std::numeric_limits<double>::infinity();
  RigidTransform best_transform;
  for (const TransformCube& child : subdivide(root, 2)) {
    const LocalRefineResult refined = local_refine(pair, child.center_transform());
    if (refined.value < best) {
      best = refined.value;
      best_transform = refined.transform;
    }
  }
  CHECK(value == best);
  CHECK((transform.rotation - best_transform.rotation).norm() == 0.0);
  CHECK((transform.translation - best_transform.translation).norm() == 0.0);

  // Worker fan-out does not change the outcome.
  const auto [value4, transform4] = batch_initialize(pair, root, 2, {}, 4);
  CHECK(value4 == value);
  CHECK((transform4.rotation - transform.rotation).norm() == 0.0);
}

TEST_CASE("batch_initialize beats the domain-center value on identical mixtures") {
  GaussianMixture g;
  g.means = {Vec3(0.2, -0.1, 0.3)};
  g.variances = {0.05};
  g.weights = {1.0};
  const MixturePair pair(g, g);
  const TransformCube root = TransformCube::root(0.5);
  const auto [value, transform] = batch_initialize(pair, root, 2);
  CHECK(value <= pair.objective(root.center_transform()) + 1e-12);
  const double f_self = pair.objective(RigidTransform::identity());
  CHECK(value <= f_self + 1e-9);  // the optimum is reachable from some child
}

TEST_CASE("export_trace emits parseable monotone rows") {
  const GaussianMixture g = small_self_mixture(88, 5);
  SearchConfig config;
  config.epsilon_relative = 0.2;
  const RegistrationResult result = align(g, g, config);

  std::ostringstream out;
  export_trace(result, out);
  std::istringstream in(out.str());

  std::vector<TraceSample> parsed;
  double e, u, l;
  while (in >> e >> u >> l) parsed.push_back({e, u, l});
  REQUIRE(parsed.size() == result.trace.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    CHECK(parsed[i].upper == result.trace[i].upper);  // %.17g round-trips exactly
    CHECK(parsed[i].lower == result.trace[i].lower);
  }
  const double eps = 0.2 * std::abs(result.best_value);
  CHECK(parsed.back().upper - parsed.back().lower <= eps + 1e-15);
}

TEST_CASE("register rejects invalid mixtures up front") {
  Rng rng(89);
  GaussianMixture bad = random_mixture(3, rng);
  bad.weights[0] += 0.5;
  const GaussianMixture good = random_mixture(3, rng);
  SearchConfig config;
  CHECK_THROWS_AS(align(bad, good, config), std::invalid_argument);
  CHECK_THROWS_AS(align(good, bad, config), std::invalid_argument);
}
