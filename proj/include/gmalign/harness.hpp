#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gmalign/mixture.hpp"
#include "gmalign/search.hpp"
#include "gmalign/se3.hpp"

namespace gmalign {

// Seeded uniform random rotations (unit-quaternion sampling) as angle-axis
// vectors with norm <= pi.
std::vector<Vec3> sample_rotations(std::size_t count, std::uint64_t seed);

struct AlignmentErrors {
  double rotation_degrees = 0.0;  // angle of R_est * R_gt^T, in [0, 180]
  double translation = 0.0;       // |t_est - t_gt|
};

AlignmentErrors alignment_errors(const RigidTransform& estimate,
                                 const RigidTransform& ground_truth);

struct MixtureSettings {
  enum class Constructor { kKde, kEm };
  Constructor constructor = Constructor::kKde;
  int components = 20;
  std::optional<double> bandwidth;  // KDE only; default derived from the cloud
  int em_max_iters = 100;
  double em_tol = 1e-7;
};

struct NormalizedMixture {
  GaussianMixture mixture;
  FrameNormalization frame;
  double bandwidth = 0.0;  // resolved KDE bandwidth (0 for EM)
};

// Normalizes the cloud and fits a mixture in the normalized frame.
NormalizedMixture build_mixture(const PointCloud& cloud, const MixtureSettings& settings,
                                std::uint64_t seed);

// Fits a mixture to an already-normalized cloud (shared frame supplied by the caller).
NormalizedMixture build_mixture_in_frame(const PointCloud& normalized_cloud,
                                         const FrameNormalization& frame,
                                         const MixtureSettings& settings,
                                         std::uint64_t seed);

// A rigid transform composed with the frame normalizations: maps raw source
// coordinates to raw target coordinates as y = scale * R * x + t.
struct SourceTransform {
  RigidTransform transform;
  double scale = 1.0;
};

SourceTransform to_source_frame(const RigidTransform& normalized,
                                const FrameNormalization& source_frame,
                                const FrameNormalization& target_frame);

// Drops the `fraction` of points furthest along a seeded random direction —
// a contiguous (half-space) occlusion. The remainder keeps its frame.
PointCloud remove_contiguous_fraction(const PointCloud& cloud, double fraction,
                                      std::uint64_t seed);

// Aligns `source` onto a copy of `target` whose means were rotated by
// `rotation`; in the shared normalized frame the ground truth is
// (rotation, 0) and the perfectly-aligned objective value equals the
// identity-transform value of the unrotated pair.
struct SelfAlignmentRun {
  RigidTransform ground_truth;
  RegistrationResult result;
  AlignmentErrors errors;  // normalized frame
  double f_self = 0.0;     // objective of the unrotated pair at the identity
};

SelfAlignmentRun run_self_alignment(const GaussianMixture& source,
                                    const GaussianMixture& target, const Vec3& rotation,
                                    const SearchConfig& config);

struct BenchmarkRun {
  std::size_t index = 0;
  Vec3 rotation = Vec3::Zero();  // ground-truth angle-axis
  SelfAlignmentRun run;
  double translation_error_source = 0.0;
};

struct BenchmarkSummary {
  std::vector<BenchmarkRun> runs;
  std::size_t epsilon_optimal_count = 0;
  double mean_rotation_error = 0.0;  // degrees
  double max_rotation_error = 0.0;
  double mean_translation_error = 0.0;  // source units
  double max_translation_error = 0.0;
  double mean_runtime_seconds = 0.0;
  // Success counts under (rotation deg, translation) thresholds
  // (10, 2), (5, 1), (2.5, 0.5).
  std::size_t success_coarse = 0;
  std::size_t success_medium = 0;
  std::size_t success_fine = 0;
};

// Self-alignment sweep over `rotation_count` seeded rotations of one cloud.
// With occlusion_fraction > 0 the source mixture is rebuilt from the cloud
// with a contiguous fraction removed (fresh cut per run).
BenchmarkSummary run_benchmark(const PointCloud& cloud, const MixtureSettings& settings,
                               const SearchConfig& config, std::size_t rotation_count,
                               std::uint64_t seed, double occlusion_fraction = 0.0);

// --- machine-readable records -----------------------------------------------

// Indented "key: value" tree writer; doubles are printed round-trip exact.
class RecordWriter {
 public:
  explicit RecordWriter(std::ostream& out) : out_(out) {}
  void field(const std::string& key, const std::string& value);
  void field(const std::string& key, const char* value);
  void field(const std::string& key, double value);
  void field(const std::string& key, bool value);
  void field(const std::string& key, std::uint64_t value);
  void field(const std::string& key, int value);
  void field(const std::string& key, const Vec3& value);
  void begin(const std::string& key);  // opens an indented block
  void end();
  void raw_line(const std::string& line);  // indented verbatim line

 private:
  void prefix(const std::string& key);
  std::ostream& out_;
  int depth_ = 0;
};

std::string format_double(double value);  // %.17g
std::string format_vec3(const Vec3& v);

int exit_code_for(TerminationReason reason);  // 0 / 2 / 3

// Result records embed the trace as indented rows under "trace:"; this pulls
// them back out (for the trace re-emission command).
std::vector<TraceSample> read_trace_from_record(std::istream& in,
                                                const std::string& name = "<stream>");

void write_mixture_record(std::ostream& out, const GaussianMixture& mixture,
                          const FrameNormalization& frame);
std::pair<GaussianMixture, FrameNormalization> read_mixture_record(
    std::istream& in, const std::string& name = "<stream>");

void write_transform_record(std::ostream& out, const RigidTransform& transform);
RigidTransform read_transform_record(std::istream& in,
                                     const std::string& name = "<stream>");

}  // namespace gmalign
