#include "gmalign/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "gmalign/objective.hpp"
#include "gmalign/rng.hpp"

namespace gmalign {
namespace {

std::string trimmed(const std::string& s) {
  const std::size_t first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const std::size_t last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Splits "key: value" (value may be empty). Returns false for non-field lines.
bool split_field(const std::string& line, std::string& key, std::string& value) {
  const std::size_t colon = line.find(':');
  if (colon == std::string::npos) return false;
  key = trimmed(line.substr(0, colon));
  value = trimmed(line.substr(colon + 1));
  return !key.empty();
}

Vec3 parse_vec3(const std::string& text, const std::string& context) {
  std::istringstream in(text);
  double x, y, z;
  if (!(in >> x >> y >> z))
    throw std::runtime_error(context + ": expected three numbers, got '" + text + "'");
  return {x, y, z};
}

double parse_double(const std::string& text, const std::string& context) {
  std::istringstream in(text);
  double v;
  if (!(in >> v)) throw std::runtime_error(context + ": expected a number, got '" + text + "'");
  return v;
}

}  // namespace

std::vector<Vec3> sample_rotations(std::size_t count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("rotation count must be at least 1");
  Rng rng(seed);
  std::vector<Vec3> rotations;
  rotations.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    // Normalized 4-vector of iid normals is uniform on S^3, hence uniform
    // over SO(3) after the quaternion double cover is folded by w >= 0.
    double w = rng.normal();
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double norm = std::sqrt(w * w + v.squaredNorm());
    w /= norm;
    v /= norm;
    if (w < 0.0) {
      w = -w;
      v = -v;
    }
    const double vnorm = v.norm();
    const double angle = 2.0 * std::atan2(vnorm, w);  // in [0, pi] since w >= 0
    rotations.push_back(vnorm > 1e-12 ? Vec3(v * (angle / vnorm)) : Vec3::Zero());
  }
  return rotations;
}

AlignmentErrors alignment_errors(const RigidTransform& estimate,
                                 const RigidTransform& ground_truth) {
  const Mat3 relative = estimate.rotation_matrix() * ground_truth.rotation_matrix().transpose();
  const double cos_angle = std::clamp(0.5 * (relative.trace() - 1.0), -1.0, 1.0);
  AlignmentErrors errors;
  errors.rotation_degrees = std::acos(cos_angle) * 180.0 / M_PI;
  errors.translation = (estimate.translation - ground_truth.translation).norm();
  return errors;
}

NormalizedMixture build_mixture(const PointCloud& cloud, const MixtureSettings& settings,
                                std::uint64_t seed) {
  auto [normalized, frame] = normalize_point_cloud(cloud);
  return build_mixture_in_frame(normalized, frame, settings, seed);
}

NormalizedMixture build_mixture_in_frame(const PointCloud& normalized_cloud,
                                         const FrameNormalization& frame,
                                         const MixtureSettings& settings,
                                         std::uint64_t seed) {
  if (settings.components < 1)
    throw std::invalid_argument("component count must be at least 1");
  NormalizedMixture out;
  out.frame = frame;
  const auto components = static_cast<std::size_t>(settings.components);
  if (settings.constructor == MixtureSettings::Constructor::kKde) {
    const double bandwidth =
        settings.bandwidth
            ? *settings.bandwidth
            : default_kde_bandwidth(normalized_cloud, components, seed);
    if (!(bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
    out.mixture = build_kde_mixture(normalized_cloud, components, bandwidth, seed);
    out.bandwidth = bandwidth;
  } else {
    out.mixture = build_em_mixture(normalized_cloud, components, settings.em_max_iters,
                                   settings.em_tol, seed);
  }
  return out;
}

SourceTransform to_source_frame(const RigidTransform& normalized,
                                const FrameNormalization& source_frame,
                                const FrameNormalization& target_frame) {
  // y_src = s_y * (R x_n + t) + c_y with x_n = (x_src - c_x) / s_x.
  SourceTransform out;
  out.scale = target_frame.scale / source_frame.scale;
  out.transform.rotation = normalized.rotation;
  out.transform.translation =
      target_frame.scale * normalized.translation + target_frame.centroid_offset -
      out.scale * (normalized.rotation_matrix() * source_frame.centroid_offset);
  return out;
}

PointCloud remove_contiguous_fraction(const PointCloud& cloud, double fraction,
                                      std::uint64_t seed) {
  if (!(fraction >= 0.0) || fraction >= 1.0)
    throw std::invalid_argument("occlusion fraction must lie in [0, 1)");
  if (cloud.empty()) throw std::invalid_argument("cannot occlude an empty cloud");
  if (fraction == 0.0) return cloud;

  Rng rng(seed);
  const Vec3 direction = rng.unit_vector();
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud[a].dot(direction) < cloud[b].dot(direction);
  });

  std::size_t drop = static_cast<std::size_t>(std::llround(fraction * cloud.size()));
  drop = std::min(drop, cloud.size() - 1);
  PointCloud kept;
  kept.reserve(cloud.size() - drop);
  for (std::size_t i = 0; i + drop < cloud.size(); ++i) kept.push_back(cloud[order[i]]);
  return kept;
}

SelfAlignmentRun run_self_alignment(const GaussianMixture& source,
                                    const GaussianMixture& target, const Vec3& rotation,
                                    const SearchConfig& config) {
  SelfAlignmentRun run;
  run.ground_truth = RigidTransform{rotation, Vec3::Zero()};
  const GaussianMixture rotated = transformed_mixture(target, run.ground_truth);
  run.result = align(source, rotated, config);
  run.errors = alignment_errors(run.result.best_transform, run.ground_truth);
  // The objective is rotation invariant, so the value of the rotated pair at
  // the ground truth equals the value of the unrotated pair at the identity.
  run.f_self = l2_objective(source, target, RigidTransform::identity());
  return run;
}

BenchmarkSummary run_benchmark(const PointCloud& cloud, const MixtureSettings& settings,
                               const SearchConfig& config, std::size_t rotation_count,
                               std::uint64_t seed, double occlusion_fraction) {
  if (rotation_count < 1) throw std::invalid_argument("need at least one rotation");
  auto [normalized, frame] = normalize_point_cloud(cloud);
  const NormalizedMixture target = build_mixture_in_frame(normalized, frame, settings, seed);
  const std::vector<Vec3> rotations = sample_rotations(rotation_count, seed);
  Rng cut_seeds(seed ^ 0x9e3779b97f4a7c15ULL);  // separate stream for occlusion cuts

  BenchmarkSummary summary;
  summary.runs.reserve(rotation_count);
  for (std::size_t k = 0; k < rotation_count; ++k) {
    NormalizedMixture source = target;
    if (occlusion_fraction > 0.0) {
      const PointCloud cut =
          remove_contiguous_fraction(normalized, occlusion_fraction, cut_seeds.next_u64());
      source = build_mixture_in_frame(cut, frame, settings, seed);
    }

    BenchmarkRun entry;
    entry.index = k;
    entry.rotation = rotations[k];
    entry.run = run_self_alignment(source.mixture, target.mixture, rotations[k], config);

    const SourceTransform est_src =
        to_source_frame(entry.run.result.best_transform, frame, frame);
    const SourceTransform gt_src = to_source_frame(entry.run.ground_truth, frame, frame);
    entry.translation_error_source =
        alignment_errors(est_src.transform, gt_src.transform).translation;
    summary.runs.push_back(std::move(entry));
  }

  for (const BenchmarkRun& r : summary.runs) {
    const double rot = r.run.errors.rotation_degrees;
    const double trans = r.translation_error_source;
    summary.epsilon_optimal_count += r.run.result.epsilon_optimal ? 1 : 0;
    summary.mean_rotation_error += rot;
    summary.max_rotation_error = std::max(summary.max_rotation_error, rot);
    summary.mean_translation_error += trans;
    summary.max_translation_error = std::max(summary.max_translation_error, trans);
    summary.mean_runtime_seconds += r.run.result.runtime_seconds;
    summary.success_coarse += (rot < 10.0 && trans < 2.0) ? 1 : 0;
    summary.success_medium += (rot < 5.0 && trans < 1.0) ? 1 : 0;
    summary.success_fine += (rot < 2.5 && trans < 0.5) ? 1 : 0;
  }
  const double n = static_cast<double>(summary.runs.size());
  summary.mean_rotation_error /= n;
  summary.mean_translation_error /= n;
  summary.mean_runtime_seconds /= n;
  return summary;
}

// --- records -----------------------------------------------------------------

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

std::string format_vec3(const Vec3& v) {
  return format_double(v.x()) + " " + format_double(v.y()) + " " + format_double(v.z());
}

void RecordWriter::prefix(const std::string& key) {
  for (int i = 0; i < depth_; ++i) out_ << "  ";
  out_ << key << ":";
}

void RecordWriter::field(const std::string& key, const std::string& value) {
  prefix(key);
  out_ << " " << value << "\n";
}

void RecordWriter::field(const std::string& key, const char* value) {
  field(key, std::string(value));
}

void RecordWriter::field(const std::string& key, double value) {
  field(key, format_double(value));
}

void RecordWriter::field(const std::string& key, bool value) {
  field(key, std::string(value ? "true" : "false"));
}

void RecordWriter::field(const std::string& key, std::uint64_t value) {
  field(key, std::to_string(value));
}

void RecordWriter::field(const std::string& key, int value) {
  field(key, std::to_string(value));
}

void RecordWriter::field(const std::string& key, const Vec3& value) {
  field(key, format_vec3(value));
}

void RecordWriter::begin(const std::string& key) {
  prefix(key);
  out_ << "\n";
  ++depth_;
}

void RecordWriter::end() {
  if (depth_ > 0) --depth_;
}

void RecordWriter::raw_line(const std::string& line) {
  for (int i = 0; i < depth_; ++i) out_ << "  ";
  out_ << line << "\n";
}

int exit_code_for(TerminationReason reason) {
  switch (reason) {
    case TerminationReason::kConverged:
      return 0;
    case TerminationReason::kTimeBudget:
      return 2;
    case TerminationReason::kQueueOverflow:
      return 3;
  }
  return 1;
}

std::vector<TraceSample> read_trace_from_record(std::istream& in, const std::string& name) {
  std::string line;
  bool in_trace = false;
  std::vector<TraceSample> trace;
  while (std::getline(in, line)) {
    const std::string body = trimmed(line);
    if (!in_trace) {
      if (body == "trace:") in_trace = true;
      continue;
    }
    std::istringstream row(body);
    TraceSample sample;
    if (!(row >> sample.elapsed_seconds >> sample.upper >> sample.lower)) break;
    trace.push_back(sample);
  }
  if (!in_trace) throw std::runtime_error(name + ": no trace section found");
  return trace;
}

void write_mixture_record(std::ostream& out, const GaussianMixture& mixture,
                          const FrameNormalization& frame) {
  mixture.validate();
  RecordWriter w(out);
  w.field("schema", "gmalign.mixture/1");
  w.begin("normalization");
  w.field("centroid", frame.centroid_offset);
  w.field("scale", frame.scale);
  w.end();
  w.field("components", std::to_string(mixture.size()));
  for (std::size_t i = 0; i < mixture.size(); ++i) {
    w.begin("component");
    w.field("mean", mixture.means[i]);
    w.field("variance", mixture.variances[i]);
    w.field("weight", mixture.weights[i]);
    w.end();
  }
}

std::pair<GaussianMixture, FrameNormalization> read_mixture_record(std::istream& in,
                                                                   const std::string& name) {
  GaussianMixture mixture;
  FrameNormalization frame;
  bool saw_schema = false;
  std::string line, key, value;
  while (std::getline(in, line)) {
    if (!split_field(line, key, value)) continue;
    if (key == "schema") {
      if (value.rfind("gmalign.mixture/", 0) != 0)
        throw std::runtime_error(name + ": not a mixture record (schema '" + value + "')");
      saw_schema = true;
    } else if (key == "centroid") {
      frame.centroid_offset = parse_vec3(value, name);
    } else if (key == "scale") {
      frame.scale = parse_double(value, name);
    } else if (key == "component") {
      mixture.means.emplace_back(Vec3::Zero());
      mixture.variances.push_back(0.0);
      mixture.weights.push_back(0.0);
    } else if (key == "mean" && !mixture.means.empty()) {
      mixture.means.back() = parse_vec3(value, name);
    } else if (key == "variance" && !mixture.variances.empty()) {
      mixture.variances.back() = parse_double(value, name);
    } else if (key == "weight" && !mixture.weights.empty()) {
      mixture.weights.back() = parse_double(value, name);
    }
  }
  if (!saw_schema) throw std::runtime_error(name + ": missing schema field");
  mixture.validate();
  return {std::move(mixture), frame};
}

void write_transform_record(std::ostream& out, const RigidTransform& transform) {
  RecordWriter w(out);
  w.field("schema", "gmalign.transform/1");
  w.field("rotation_angle_axis", transform.rotation);
  w.field("translation", transform.translation);
}

RigidTransform read_transform_record(std::istream& in, const std::string& name) {
  RigidTransform transform;
  bool saw_rotation = false, saw_translation = false;
  std::string line, key, value;
  while (std::getline(in, line)) {
    if (!split_field(line, key, value)) continue;
    if (key == "schema") {
      if (value.rfind("gmalign.transform/", 0) != 0)
        throw std::runtime_error(name + ": not a transform record (schema '" + value + "')");
    } else if (key == "rotation_angle_axis") {
      transform.rotation = parse_vec3(value, name);
      saw_rotation = true;
    } else if (key == "translation") {
      transform.translation = parse_vec3(value, name);
      saw_translation = true;
    }
  }
  if (!saw_rotation || !saw_translation)
    throw std::runtime_error(name + ": incomplete transform record");
  return transform;
}

}  // namespace gmalign
