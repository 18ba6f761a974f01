// cdog: generate benchmark scenes, associate points across views, score and
// sweep methods.

#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "cdog/cdog.hpp"

namespace fs = std::filesystem;
using namespace cdog;

namespace {

enum Exit : int { kOk = 0, kBadFlags = 2, kIo = 3, kBadInput = 4, kBenchFailed = 5 };

struct ConfigFlags {
  double delta = 0.5;
  double tau_alpha = 2.0;
  double tau_min = 1.0;
  double iqr_alpha = 2.0;
  double sigma = -1.0;
  bool no_gap = false;

  void attach(CLI::App* cmd, bool with_sigma = true) {
    cmd->add_option("--delta", delta, "overlap threshold for weak edges")->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--tau-alpha", tau_alpha, "epipolar threshold multiplier")->check(CLI::PositiveNumber);
    cmd->add_option("--tau-min", tau_min, "epipolar threshold floor (px)")->check(CLI::NonNegativeNumber);
    cmd->add_option("--iqr-alpha", iqr_alpha, "IQR fence multiplier")->check(CLI::PositiveNumber);
    if (with_sigma)
      cmd->add_option("--sigma", sigma, "noise level (px); default: scene metadata or estimate")
          ->check(CLI::NonNegativeNumber);
    cmd->add_flag("--no-gap-filter", no_gap, "keep all groups regardless of BPE gap");
  }

  CdogConfig config() const {
    CdogConfig c;
    if (sigma >= 0.0) c.sigma = sigma;
    c.delta = delta;
    c.tau_alpha = tau_alpha;
    c.tau_min = tau_min;
    c.refine.iqr_alpha = iqr_alpha;
    c.gap.enabled = !no_gap;
    return c;
  }
};

RigSpec load_rig(const std::string& path) {
  if (path.empty()) return {};
  try {
    return io::rig_from_json(io::json::parse(io::read_file(path)));
  } catch (const io::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

int cmd_generate(const fs::path& out, std::vector<int> points, std::vector<double> sigmas, int batches,
                 std::uint64_t seed, const std::string& rig_file, double min_sep) {
  BenchmarkSpec spec = BenchmarkSpec::defaults();
  if (!points.empty()) spec.point_counts = std::move(points);
  if (!sigmas.empty()) spec.sigmas = std::move(sigmas);
  spec.batches = batches;
  spec.seed = seed;
  spec.scene_options.min_separation_px = min_sep;
  const io::Manifest m = io::write_dataset(spec, load_rig(rig_file), out);
  log::info("wrote " + std::to_string(m.scenes.size()) + " scenes to " + out.string());
  return kOk;
}

int cmd_associate(const fs::path& scene_path, const fs::path& out, const std::string& method,
                  const ConfigFlags& flags, int keep_views, std::uint64_t view_seed, bool with_points) {
  Scene scene = io::load_scene(scene_path);
  if (keep_views > 0) {
    if (keep_views < 2 || keep_views > static_cast<int>(scene.num_views())) {
      std::cerr << "--keep-views must be in [2, " << scene.num_views() << "]\n";
      return kBadFlags;
    }
    scene = drop_views(scene, keep_views, view_seed);
  }
  const MethodRegistry registry = MethodRegistry::with_defaults();
  AssociationResult result;
  const double ms = timed_run(registry, method, scene, flags.config(), result);
  if (result.timings.total_ms == 0.0) result.timings.total_ms = ms;
  if (with_points) result.points3d = reconstruct(result, scene);
  io::write_file(out, io::association_to_json(result).dump(2) + "\n");
  log::info(method + ": " + std::to_string(result.groups.size()) + " groups, " +
            std::to_string(result.outliers.size()) + " outliers");
  return kOk;
}

int cmd_evaluate(const fs::path& pred_path, const fs::path& scene_path, const fs::path& out) {
  const AssociationResult pred = io::load_association(pred_path);
  Scene scene = io::load_scene(scene_path);
  if (!pred.views.empty()) scene = select_views(scene, pred.views);
  if (!scene.has_ground_truth()) throw FormatError("scene lacks ground-truth labels");
  io::check_partition(pred, scene);
  io::MetricsRow row;
  row.scene = scene_path.filename().string();
  row.count = static_cast<int>(instance_sizes(scene).size());
  row.sigma = scene.sigma.value_or(0.0);
  row.views = static_cast<int>(scene.num_views());
  row.method = pred.method;
  row.report = evaluate(pred, scene, pred.timings.total_ms);
  io::append_metrics_row(out, row);
  return kOk;
}

int cmd_bench(const fs::path& dataset, std::vector<std::string> methods, const fs::path& out, unsigned threads,
              const ConfigFlags& flags) {
  const io::Manifest manifest = io::load_manifest(dataset);
  BenchOptions opts;
  opts.methods = std::move(methods);
  opts.config = flags.config();
  opts.threads = threads;
  const auto rows = run_bench(dataset, manifest, opts);
  const BenchSummary s = write_bench_outputs(rows, out);
  log::info("bench: " + std::to_string(s.succeeded) + " ok, " + std::to_string(s.failed) + " failed");
  if (s.succeeded == 0) {
    std::cerr << "bench: no scene evaluated successfully\n";
    return kBenchFailed;
  }
  return kOk;
}

int cmd_ablate(const fs::path& out, AblationOptions opts, const std::string& rig_file, const ConfigFlags& flags) {
  opts.rig = load_rig(rig_file);
  if (opts.max_views <= 0) opts.max_views = opts.rig.n_cameras;
  opts.config = flags.config();
  if (!MethodRegistry::with_defaults().contains(opts.method)) {
    std::cerr << "unknown method '" << opts.method << "'\n";
    return kBadFlags;
  }
  if (opts.min_views < 2 || opts.max_views > opts.rig.n_cameras || opts.min_views > opts.max_views) {
    std::cerr << "view range must lie within [2, " << opts.rig.n_cameras << "]\n";
    return kBadFlags;
  }
  io::write_file(out, ablation_csv(run_ablation(opts), opts.method));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Descriptor-free multi-view point association"};
  app.require_subcommand(1);

  const std::vector<std::string> known = MethodRegistry::with_defaults().names();

  auto* gen = app.add_subcommand("generate", "write a synthetic benchmark dataset");
  std::string gen_out, gen_rig;
  std::vector<int> gen_points;
  std::vector<double> gen_sigmas;
  int gen_batches = 5;
  std::uint64_t gen_seed = 0;
  double gen_min_sep = 0.0;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--points", gen_points, "point counts (comma separated)")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  gen->add_option("--sigmas", gen_sigmas, "noise levels in px (comma separated)")
      ->delimiter(',')
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--batches", gen_batches, "scenes per (count, sigma)")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--rig", gen_rig, "rig JSON file")->check(CLI::ExistingFile);
  gen->add_option("--min-separation", gen_min_sep, "minimum pixel separation between points")
      ->check(CLI::NonNegativeNumber);

  auto* asc = app.add_subcommand("associate", "group the observations of one scene");
  std::string asc_scene, asc_out, asc_method = "cdog";
  int keep_views = 0;
  std::uint64_t view_seed = 0;
  bool with_points = false;
  ConfigFlags asc_flags;
  asc->add_option("--scene", asc_scene, "scene JSON")->required()->check(CLI::ExistingFile);
  asc->add_option("--out", asc_out, "association JSON")->required();
  asc->add_option("--method", asc_method, "association method")->check(CLI::IsMember(known));
  asc->add_option("--keep-views", keep_views, "run on a random subset of K views");
  asc->add_option("--view-seed", view_seed, "seed for --keep-views");
  asc->add_flag("--points3d", with_points, "include triangulated points");
  asc_flags.attach(asc);

  auto* ev = app.add_subcommand("evaluate", "score a prediction against ground truth");
  std::string ev_pred, ev_scene, ev_out;
  ev->add_option("--pred", ev_pred, "association JSON")->required()->check(CLI::ExistingFile);
  ev->add_option("--scene", ev_scene, "scene JSON with ground truth")->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "CSV file (appended)")->required();

  auto* bn = app.add_subcommand("bench", "evaluate methods over a dataset");
  std::string bn_dataset, bn_out;
  std::vector<std::string> bn_methods{"cdog"};
  unsigned bn_threads = std::max(1u, std::thread::hardware_concurrency());
  ConfigFlags bn_flags;
  bn->add_option("--dataset", bn_dataset, "dataset directory")->required()->check(CLI::ExistingDirectory);
  bn->add_option("--methods", bn_methods, "methods (comma separated)")
      ->delimiter(',')
      ->check(CLI::IsMember(known));
  bn->add_option("--out", bn_out, "output directory")->required();
  bn->add_option("--threads", bn_threads, "worker threads")->check(CLI::PositiveNumber);
  bn_flags.attach(bn);

  auto* ab = app.add_subcommand("ablate", "accuracy and runtime against the number of views");
  std::string ab_out, ab_rig;
  AblationOptions ab_opts;
  ab_opts.max_views = 0;
  ConfigFlags ab_flags;
  ab->add_option("--out", ab_out, "CSV file")->required();
  ab->add_option("--sigma", ab_opts.sigma, "noise level (px)")->check(CLI::NonNegativeNumber);
  ab->add_option("--points", ab_opts.point_counts, "point counts (comma separated)")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  ab->add_option("--batches", ab_opts.batches, "scenes per count")->check(CLI::PositiveNumber);
  ab->add_option("--seed", ab_opts.seed, "seed");
  ab->add_option("--method", ab_opts.method, "association method");
  ab->add_option("--min-views", ab_opts.min_views, "smallest view count");
  ab->add_option("--max-views", ab_opts.max_views, "largest view count (default: all cameras)");
  ab->add_option("--rig", ab_rig, "rig JSON file")->check(CLI::ExistingFile);
  ab->add_option("--threads", ab_opts.threads, "worker threads")->check(CLI::PositiveNumber);
  ab_flags.attach(ab, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kBadFlags;
  }

  try {
    if (*gen) return cmd_generate(gen_out, gen_points, gen_sigmas, gen_batches, gen_seed, gen_rig, gen_min_sep);
    if (*asc) return cmd_associate(asc_scene, asc_out, asc_method, asc_flags, keep_views, view_seed, with_points);
    if (*ev) return cmd_evaluate(ev_pred, ev_scene, ev_out);
    if (*bn) return cmd_bench(bn_dataset, bn_methods, bn_out, bn_threads, bn_flags);
    if (*ab) return cmd_ablate(ab_out, ab_opts, ab_rig, ab_flags);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  }
  return kBadFlags;
}
