// gmalign: globally optimal rigid alignment of Gaussian mixtures.
//
// Commands:
//   register    align a source cloud onto a target (or a rotated copy of itself)
//   benchmark   self-alignment sweep over seeded rotations with a summary table
//   build-gmm   fit a mixture to a cloud and dump it as a record
//   trace       re-emit the trace rows embedded in a result record
//   synthesize  apply a seeded rigid transform to a cloud and save both

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "gmalign/harness.hpp"
#include "gmalign/mixture.hpp"
#include "gmalign/objective.hpp"
#include "gmalign/point_cloud_io.hpp"
#include "gmalign/rng.hpp"
#include "gmalign/search.hpp"
#include "gmalign/se3.hpp"

namespace {

using namespace gmalign;

struct SearchFlags {
  std::optional<double> epsilon;           // absolute
  std::optional<double> epsilon_relative;  // relative to |f*|
  double tau = 0.5;
  int split = 2;
  bool batch_init = true;
  int threads = 1;
  std::optional<double> time_budget;
  std::size_t max_queue = 50'000'000;

  SearchConfig to_config() const {
    SearchConfig config;
    if (epsilon) {
      config.epsilon = *epsilon;
    } else {
      // Desk-scale default: terminate when the gap falls below 10% of |f*|.
      config.epsilon_relative = epsilon_relative.value_or(0.1);
    }
    if (epsilon_relative) config.epsilon_relative = *epsilon_relative;
    config.tau = tau;
    config.split = split;
    config.batch_init = batch_init;
    config.threads = threads;
    config.time_budget_seconds = time_budget;
    config.max_queue = max_queue;
    return config;
  }
};

struct MixtureFlags {
  std::string constructor = "kde";
  int components = 20;
  std::optional<double> bandwidth;

  MixtureSettings to_settings() const {
    MixtureSettings settings;
    settings.constructor = constructor == "em" ? MixtureSettings::Constructor::kEm
                                               : MixtureSettings::Constructor::kKde;
    settings.components = components;
    settings.bandwidth = bandwidth;
    return settings;
  }
};

void add_search_flags(CLI::App* cmd, SearchFlags& flags) {
  auto* eps = cmd->add_option("--epsilon", flags.epsilon,
                              "Absolute optimality gap for termination");
  auto* rel = cmd->add_option("--epsilon-relative", flags.epsilon_relative,
                              "Gap target as a fraction of |f*| (default 0.1)");
  eps->excludes(rel);
  cmd->add_option("--tau", flags.tau, "Translation domain half-width, in (0, 1]")
      ->capture_default_str();
  cmd->add_option("--split", flags.split, "Per-axis branching factor (>= 2)")
      ->capture_default_str();
  cmd->add_flag("--batch-init,!--no-batch-init", flags.batch_init,
                "Refine from every first-level sub-cube center before the search");
  cmd->add_option("--threads", flags.threads, "Worker threads for bounds and refinement")
      ->capture_default_str();
  cmd->add_option("--time-budget", flags.time_budget,
                  "Wall-clock budget in seconds; best-so-far on expiry");
  cmd->add_option("--max-queue", flags.max_queue, "Node cap for the search queue")
      ->capture_default_str();
}

void add_mixture_flags(CLI::App* cmd, MixtureFlags& flags) {
  cmd->add_option("--constructor", flags.constructor, "Mixture constructor")
      ->check(CLI::IsMember({"kde", "em"}))
      ->capture_default_str();
  cmd->add_option("--components", flags.components, "Mixture component count")
      ->capture_default_str();
  cmd->add_option("--bandwidth", flags.bandwidth,
                  "KDE bandwidth in normalized units (default: data-driven)");
}

void write_config_block(RecordWriter& w, const std::string& source,
                        const std::string& target, const MixtureFlags& mix,
                        const SearchFlags& search, std::uint64_t seed) {
  w.begin("config");
  w.field("source", source);
  w.field("target", target);
  w.field("constructor", mix.constructor);
  w.field("components", mix.components);
  if (mix.bandwidth) w.field("bandwidth", *mix.bandwidth);
  w.field("seed", static_cast<std::uint64_t>(seed));
  if (search.epsilon) {
    w.field("epsilon", *search.epsilon);
    w.field("epsilon_mode", "absolute");
  } else {
    w.field("epsilon_relative", search.epsilon_relative.value_or(0.1));
    w.field("epsilon_mode", "relative");
  }
  w.field("tau", search.tau);
  w.field("split", search.split);
  w.field("batch_init", search.batch_init);
  w.field("threads", search.threads);
  if (search.time_budget) w.field("time_budget_seconds", *search.time_budget);
  w.field("max_queue", static_cast<std::uint64_t>(search.max_queue));
  w.end();
}

void write_result_block(RecordWriter& w, const RegistrationResult& result) {
  w.begin("result");
  w.field("status", to_string(result.reason));
  w.field("epsilon_optimal", result.epsilon_optimal);
  w.field("best_value", result.best_value);
  w.field("final_lower", result.final_lower);
  w.field("gap", result.gap);
  w.field("nodes_expanded", result.nodes_expanded);
  w.field("refinements_run", result.refinements_run);
  w.field("runtime_seconds", result.runtime_seconds);
  w.end();
}

void write_transform_block(RecordWriter& w, const std::string& key,
                           const RigidTransform& t,
                           std::optional<double> scale = std::nullopt) {
  w.begin(key);
  if (scale) w.field("scale", *scale);
  w.field("rotation_angle_axis", t.rotation);
  w.field("translation", t.translation);
  w.end();
}

void write_trace_block(RecordWriter& w, const RegistrationResult& result) {
  w.begin("trace");
  for (const TraceSample& s : result.trace) {
    w.raw_line(format_double(s.elapsed_seconds) + " " + format_double(s.upper) + " " +
               format_double(s.lower));
  }
  w.end();
}

// Opens --output (or stdout), returning the stream to write the record to.
struct RecordSink {
  std::ofstream file;
  std::ostream* out = &std::cout;
  std::string trace_path;  // empty when no separate trace file is written

  explicit RecordSink(const std::string& path) {
    if (path.empty()) return;
    file.open(path);
    if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
    out = &file;
    trace_path = path + ".trace";
  }
};

void write_trace_file(const std::string& path, const RegistrationResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  export_trace(result, out);
}

int cmd_register(const std::string& source_path, const std::string& target_path,
                 bool self_mode, const std::string& ground_truth_path,
                 const MixtureFlags& mix, const SearchFlags& search, std::uint64_t seed,
                 const std::string& output_path) {
  const SearchConfig config = search.to_config();
  config.validate();
  const MixtureSettings settings = mix.to_settings();

  const PointCloud source_cloud = read_point_cloud(source_path);

  RegistrationResult result;
  SourceTransform est_src;
  std::optional<RigidTransform> gt_normalized;
  std::optional<RigidTransform> gt_source;
  std::optional<double> f_self;
  double resolved_bandwidth = 0.0;

  if (self_mode) {
    auto [normalized, frame] = normalize_point_cloud(source_cloud);
    const NormalizedMixture nm = build_mixture_in_frame(normalized, frame, settings, seed);
    resolved_bandwidth = nm.bandwidth;
    const Vec3 rotation = sample_rotations(1, seed)[0];
    SelfAlignmentRun run = run_self_alignment(nm.mixture, nm.mixture, rotation, config);
    result = std::move(run.result);
    est_src = to_source_frame(result.best_transform, frame, frame);
    gt_normalized = run.ground_truth;
    gt_source = to_source_frame(run.ground_truth, frame, frame).transform;
    f_self = run.f_self;
  } else {
    const PointCloud target_cloud = read_point_cloud(target_path);
    auto [nx, frame_x] = normalize_point_cloud(source_cloud);
    auto [ny, frame_y] = normalize_point_cloud(target_cloud);
    const NormalizedMixture mx = build_mixture_in_frame(nx, frame_x, settings, seed);
    const NormalizedMixture my = build_mixture_in_frame(ny, frame_y, settings, seed);
    resolved_bandwidth = mx.bandwidth;
    result = align(mx.mixture, my.mixture, config);
    est_src = to_source_frame(result.best_transform, frame_x, frame_y);
    if (!ground_truth_path.empty()) {
      std::ifstream gt_in(ground_truth_path);
      if (!gt_in) throw std::runtime_error("cannot open '" + ground_truth_path + "'");
      gt_source = read_transform_record(gt_in, ground_truth_path);
      // Pull the source-frame ground truth back into the normalized frames.
      RigidTransform gtn;
      gtn.rotation = gt_source->rotation;
      gtn.translation = (gt_source->translation - frame_y.centroid_offset +
                         est_src.scale * (gt_source->rotation_matrix() *
                                          frame_x.centroid_offset)) /
                        frame_y.scale;
      gt_normalized = gtn;
    }
  }

  RecordSink sink(output_path);
  RecordWriter w(*sink.out);
  w.field("schema", "gmalign.result/1");
  w.field("command", "register");
  write_config_block(w, source_path,
                     self_mode ? std::string("(self-alignment)") : target_path, mix,
                     search, seed);
  if (resolved_bandwidth > 0.0) w.field("resolved_bandwidth", resolved_bandwidth);
  write_result_block(w, result);
  if (f_self) w.field("f_self", *f_self);
  write_transform_block(w, "transform_normalized", result.best_transform);
  write_transform_block(w, "transform_source", est_src.transform, est_src.scale);
  if (gt_normalized) {
    write_transform_block(w, "ground_truth_normalized", *gt_normalized);
    const AlignmentErrors errs_n = alignment_errors(result.best_transform, *gt_normalized);
    w.begin("errors");
    w.field("rotation_degrees", errs_n.rotation_degrees);
    w.field("translation_normalized", errs_n.translation);
    if (gt_source)
      w.field("translation_source",
              alignment_errors(est_src.transform, *gt_source).translation);
    w.end();
  }
  if (!sink.trace_path.empty()) {
    write_trace_file(sink.trace_path, result);
    w.field("trace_file", sink.trace_path);
  }
  write_trace_block(w, result);
  return exit_code_for(result.reason);
}

int cmd_benchmark(const std::string& source_path, std::size_t rotations, double occlusion,
                  const MixtureFlags& mix, const SearchFlags& search, std::uint64_t seed,
                  const std::string& output_path) {
  const SearchConfig config = search.to_config();
  config.validate();
  const PointCloud cloud = read_point_cloud(source_path);
  const BenchmarkSummary summary =
      run_benchmark(cloud, mix.to_settings(), config, rotations, seed, occlusion);

  RecordSink sink(output_path);
  RecordWriter w(*sink.out);
  w.field("schema", "gmalign.benchmark/1");
  w.field("command", "benchmark");
  write_config_block(w, source_path, "(self-alignment sweep)", mix, search, seed);
  w.field("rotations", static_cast<std::uint64_t>(rotations));
  w.field("occlusion_fraction", occlusion);

  w.begin("runs");
  for (const BenchmarkRun& r : summary.runs) {
    w.begin("run");
    w.field("index", static_cast<std::uint64_t>(r.index));
    w.field("rotation_angle_axis", r.rotation);
    w.field("status", to_string(r.run.result.reason));
    w.field("epsilon_optimal", r.run.result.epsilon_optimal);
    w.field("best_value", r.run.result.best_value);
    w.field("f_self", r.run.f_self);
    w.field("gap", r.run.result.gap);
    w.field("rotation_error_degrees", r.run.errors.rotation_degrees);
    w.field("translation_error_source", r.translation_error_source);
    w.field("nodes_expanded", r.run.result.nodes_expanded);
    w.field("refinements_run", r.run.result.refinements_run);
    w.field("runtime_seconds", r.run.result.runtime_seconds);
    w.end();
  }
  w.end();

  const std::string n = std::to_string(summary.runs.size());
  w.begin("summary");
  w.field("runs", static_cast<std::uint64_t>(summary.runs.size()));
  w.field("epsilon_optimal", std::to_string(summary.epsilon_optimal_count) + "/" + n);
  w.field("mean_rotation_error_degrees", summary.mean_rotation_error);
  w.field("max_rotation_error_degrees", summary.max_rotation_error);
  w.field("mean_translation_error_source", summary.mean_translation_error);
  w.field("max_translation_error_source", summary.max_translation_error);
  w.field("success_coarse_10deg_2u", std::to_string(summary.success_coarse) + "/" + n);
  w.field("success_medium_5deg_1u", std::to_string(summary.success_medium) + "/" + n);
  w.field("success_fine_2.5deg_0.5u", std::to_string(summary.success_fine) + "/" + n);
  w.field("mean_runtime_seconds", summary.mean_runtime_seconds);
  w.end();
  return 0;
}

int cmd_build_gmm(const std::string& input_path, const MixtureFlags& mix,
                  std::uint64_t seed, const std::string& output_path) {
  const PointCloud cloud = read_point_cloud(input_path);
  const NormalizedMixture nm = build_mixture(cloud, mix.to_settings(), seed);
  RecordSink sink(output_path);
  write_mixture_record(*sink.out, nm.mixture, nm.frame);
  return 0;
}

int cmd_trace(const std::string& result_path, const std::string& output_path) {
  std::ifstream in(result_path);
  if (!in) throw std::runtime_error("cannot open '" + result_path + "'");
  RegistrationResult result;
  result.trace = read_trace_from_record(in, result_path);
  RecordSink sink(output_path);
  export_trace(result, *sink.out);
  return 0;
}

int cmd_synthesize(const std::string& input_path, std::uint64_t seed,
                   double translation_fraction, const std::string& output_path) {
  const PointCloud cloud = read_point_cloud(input_path);
  const Vec3 rotation = sample_rotations(1, seed)[0];

  // Translation scaled to the cloud's extent so the result stays comparable.
  Vec3 lo = cloud.front(), hi = cloud.front();
  for (const Vec3& p : cloud) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).norm();
  Rng rng(seed ^ 0xd1b54a32d192ed03ULL);  // independent of the rotation stream
  const RigidTransform transform{
      rotation, rng.vector_in_cube(Vec3::Zero(), 0.5 * translation_fraction * extent)};

  PointCloud moved;
  moved.reserve(cloud.size());
  const Mat3 rot = transform.rotation_matrix();
  for (const Vec3& p : cloud) moved.push_back(rot * p + transform.translation);

  write_point_cloud(output_path, moved);
  const std::string transform_path = output_path + ".transform";
  std::ofstream tf(transform_path);
  if (!tf) throw std::runtime_error("cannot open '" + transform_path + "' for writing");
  write_transform_record(tf, transform);
  std::cout << "wrote " << moved.size() << " points to " << output_path
            << "\nground truth: " << transform_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Globally optimal rigid alignment of isotropic Gaussian mixtures"};
  app.require_subcommand(1);
  app.set_config("--config");

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();

  // register
  auto* reg = app.add_subcommand("register", "Align a source cloud onto a target");
  std::string reg_source, reg_target, reg_gt, reg_output;
  bool reg_self = false;
  SearchFlags reg_search;
  MixtureFlags reg_mix;
  reg->add_option("source", reg_source, "Source point cloud (.xyz or .ply)")->required();
  reg->add_option("target", reg_target, "Target point cloud");
  reg->add_flag("--self", reg_self,
                "Align against a seeded-rotation copy of the source itself");
  reg->add_option("--ground-truth", reg_gt,
                  "Transform record with the true source->target map (file mode)");
  reg->add_option("--output", reg_output, "Result record path (default: stdout)");
  add_mixture_flags(reg, reg_mix);
  add_search_flags(reg, reg_search);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Seeded-rotation self-alignment sweep");
  std::string bench_source, bench_output;
  std::size_t bench_rotations = 20;
  double bench_occlusion = 0.0;
  SearchFlags bench_search;
  MixtureFlags bench_mix;
  bench->add_option("source", bench_source, "Point cloud to benchmark on")->required();
  bench->add_option("--rotations", bench_rotations, "Number of seeded test rotations")
      ->capture_default_str();
  bench->add_option("--occlusion", bench_occlusion,
                    "Contiguous fraction of the source to remove per run, in [0, 1)")
      ->capture_default_str();
  bench->add_option("--output", bench_output, "Summary record path (default: stdout)");
  add_mixture_flags(bench, bench_mix);
  add_search_flags(bench, bench_search);

  // build-gmm
  auto* build = app.add_subcommand("build-gmm", "Fit a mixture and dump it as a record");
  std::string build_input, build_output;
  MixtureFlags build_mix;
  build->add_option("input", build_input, "Point cloud to fit")->required();
  build->add_option("--output", build_output, "Mixture record path (default: stdout)");
  add_mixture_flags(build, build_mix);

  // trace
  auto* trace = app.add_subcommand("trace", "Re-emit trace rows from a result record");
  std::string trace_input, trace_output;
  trace->add_option("result", trace_input, "Result record written by register")->required();
  trace->add_option("--output", trace_output, "Trace destination (default: stdout)");

  // synthesize
  auto* synth = app.add_subcommand(
      "synthesize", "Apply a seeded rigid transform to a cloud and save it");
  std::string synth_input, synth_output;
  double synth_translation = 0.1;
  synth->add_option("input", synth_input, "Point cloud to transform")->required();
  synth->add_option("--output", synth_output, "Transformed cloud path (ASCII XYZ)")
      ->required();
  synth->add_option("--translation", synth_translation,
                    "Translation magnitude as a fraction of the cloud extent")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (reg->parsed()) {
      if (reg_self == !reg_target.empty())
        throw std::runtime_error("provide exactly one of: a target cloud, or --self");
      if (reg_self && !reg_gt.empty())
        throw std::runtime_error("--ground-truth only applies to file mode");
      return cmd_register(reg_source, reg_target, reg_self, reg_gt, reg_mix, reg_search,
                          seed, reg_output);
    }
    if (bench->parsed())
      return cmd_benchmark(bench_source, bench_rotations, bench_occlusion, bench_mix,
                           bench_search, seed, bench_output);
    if (build->parsed()) return cmd_build_gmm(build_input, build_mix, seed, build_output);
    if (trace->parsed()) return cmd_trace(trace_input, trace_output);
    if (synth->parsed())
      return cmd_synthesize(synth_input, seed, synth_translation, synth_output);
  } catch (const std::exception& e) {
    std::cerr << "gmalign: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
