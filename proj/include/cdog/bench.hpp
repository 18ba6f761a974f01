#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "cdog/baselines.hpp"
#include "cdog/benchmark.hpp"
#include "cdog/io.hpp"
#include "cdog/log.hpp"
#include "cdog/metrics.hpp"

namespace cdog {

/// Runs fn(i) for i in [0, n) on `threads` workers. Output placement is the
/// caller's job, so completion order never matters.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) fn(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
}

inline double timed_run(const MethodRegistry& registry, const std::string& method, const Scene& scene,
                        const CdogConfig& cfg, AssociationResult& out) {
  const auto t0 = std::chrono::steady_clock::now();
  out = registry.run(method, scene, cfg);
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

struct BenchRow {
  io::MetricsRow row;
  int batch = 0;
  bool ok = false;
  std::string error;
};

struct BenchOptions {
  std::vector<std::string> methods{"cdog"};
  CdogConfig config;
  unsigned threads = 1;
};

/// Evaluates every manifest scene with every method. Rows come back sorted by
/// (count, batch, sigma, method); failures are kept with ok = false.
inline std::vector<BenchRow> run_bench(const std::filesystem::path& dataset, const io::Manifest& manifest,
                                       const BenchOptions& opts,
                                       const MethodRegistry& registry = MethodRegistry::with_defaults()) {
  for (const auto& m : opts.methods)
    if (!registry.contains(m)) throw Error("unknown method '" + m + "'");

  std::vector<io::ManifestEntry> entries = manifest.scenes;
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return std::tie(a.scene.count, a.scene.batch, a.scene.sigma) < std::tie(b.scene.count, b.scene.batch, b.scene.sigma);
  });
  std::vector<std::string> methods = opts.methods;
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  std::vector<BenchRow> rows(entries.size() * methods.size());
  parallel_for(entries.size(), opts.threads, [&](std::size_t i) {
    const auto& e = entries[i];
    std::optional<Scene> scene;
    std::string load_error;
    try {
      scene = io::load_scene(dataset / manifest.root / e.file);
    } catch (const std::exception& ex) {
      load_error = ex.what();
    }
    for (std::size_t k = 0; k < methods.size(); ++k) {
      BenchRow& r = rows[i * methods.size() + k];
      r.row.scene = e.file;
      r.row.count = e.scene.count;
      r.row.sigma = e.scene.sigma;
      r.row.method = methods[k];
      r.batch = e.scene.batch;
      if (!scene) {
        r.error = load_error;
        continue;
      }
      r.row.views = static_cast<int>(scene->num_views());
      try {
        AssociationResult res;
        const double ms = timed_run(registry, methods[k], *scene, opts.config, res);
        r.row.report = evaluate(res, *scene, ms);
        r.ok = true;
      } catch (const std::exception& ex) {
        r.error = ex.what();
      }
      if (!r.ok) log::warn(e.file + " [" + methods[k] + "]: " + r.error);
    }
    log::debug("finished " + e.file);
  });
  return rows;
}

struct GridCell {
  std::string method;
  int count = 0;
  double sigma = 0.0;
  int scenes = 0;
  MetricsReport mean;
};

/// Mean report per (method, count, sigma) over successful rows.
inline std::vector<GridCell> aggregate_grid(const std::vector<BenchRow>& rows) {
  std::map<std::tuple<std::string, int, double>, std::vector<MetricsReport>> cells;
  for (const auto& r : rows)
    if (r.ok) cells[{r.row.method, r.row.count, r.row.sigma}].push_back(r.row.report);
  std::vector<GridCell> out;
  for (const auto& [key, reports] : cells)
    out.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), static_cast<int>(reports.size()),
                   aggregate(reports)});
  return out;
}

struct TimingPoint {
  std::string method;
  int count = 0;
  int scenes = 0;
  double mean_ms = 0.0;
};

inline std::vector<TimingPoint> timing_by_count(const std::vector<BenchRow>& rows) {
  std::map<std::pair<std::string, int>, std::pair<int, double>> acc;
  for (const auto& r : rows) {
    if (!r.ok) continue;
    auto& [n, sum] = acc[{r.row.method, r.row.count}];
    ++n;
    sum += r.row.report.time_ms;
  }
  std::vector<TimingPoint> out;
  for (const auto& [key, v] : acc) out.push_back({key.first, key.second, v.first, v.second / v.first});
  return out;
}

inline const char* kGridHeader =
    "method,count,sigma,scenes,g_p,g_r,g_f1,g_iou,mp_p,mp_r,mp_f1,mp_iou,pg_p,pg_r,pg_f1,err3d,bpe,bpe_rms,time_ms";

inline std::string grid_csv(const std::vector<GridCell>& cells) {
  std::string s = std::string(kGridHeader) + '\n';
  for (const auto& c : cells)
    s += c.method + ',' + std::to_string(c.count) + ',' + io::fmt(c.sigma) + ',' + std::to_string(c.scenes) + ',' +
         io::metrics_values(c.mean) + '\n';
  return s;
}

inline std::string per_scene_csv(const std::vector<BenchRow>& rows) {
  std::string s = std::string(io::kMetricsHeader) + '\n';
  for (const auto& r : rows)
    if (r.ok) s += io::metrics_row(r.row) + '\n';
  return s;
}

inline std::string timing_csv(const std::vector<TimingPoint>& pts) {
  std::string s = "method,count,scenes,time_ms\n";
  for (const auto& p : pts)
    s += p.method + ',' + std::to_string(p.count) + ',' + std::to_string(p.scenes) + ',' + io::fmt(p.mean_ms) + '\n';
  return s;
}

struct BenchSummary {
  int succeeded = 0;
  int failed = 0;
};

/// Writes scenes.csv, grid.csv and timing.csv into `out`.
inline BenchSummary write_bench_outputs(const std::vector<BenchRow>& rows, const std::filesystem::path& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  io::write_file(out / "scenes.csv", per_scene_csv(rows));
  io::write_file(out / "grid.csv", grid_csv(aggregate_grid(rows)));
  io::write_file(out / "timing.csv", timing_csv(timing_by_count(rows)));
  BenchSummary s;
  for (const auto& r : rows) (r.ok ? s.succeeded : s.failed)++;
  return s;
}

// --- view-count ablation ----------------------------------------------------------

struct AblationOptions {
  RigSpec rig;
  std::uint64_t seed = 0;
  double sigma = 3.0;
  std::vector<int> point_counts{10, 30, 50, 100};
  int batches = 5;
  int min_views = 2;
  int max_views = 10;
  std::string method = "cdog";
  CdogConfig config;
  unsigned threads = 1;
};

struct AblationRow {
  int views = 0;
  int scenes = 0;
  MetricsReport mean;
};

/// Same scenes at every view count; only the retained camera subset changes.
inline std::vector<AblationRow> run_ablation(const AblationOptions& opts,
                                             const MethodRegistry& registry = MethodRegistry::with_defaults()) {
  if (opts.min_views < 2 || opts.max_views > opts.rig.n_cameras || opts.min_views > opts.max_views)
    throw Error("view range must lie within 2..n_cameras");
  const auto rig = make_rig(opts.rig, opts.seed);
  std::vector<SceneEntry> entries;
  for (int count : opts.point_counts)
    for (int b = 0; b < opts.batches; ++b) entries.push_back({count, b, opts.sigma, scene_seed(opts.seed, count, b)});
  const int n_levels = opts.max_views - opts.min_views + 1;
  std::vector<std::vector<MetricsReport>> reports(static_cast<std::size_t>(n_levels),
                                                  std::vector<MetricsReport>(entries.size()));
  parallel_for(entries.size(), opts.threads, [&](std::size_t i) {
    const Scene full = generate_entry(entries[i], rig);
    for (int v = opts.min_views; v <= opts.max_views; ++v) {
      const Scene scene = drop_views(full, v, hash_seed(entries[i].seed, 0x76696577ULL));
      AssociationResult res;
      const double ms = timed_run(registry, opts.method, scene, opts.config, res);
      reports[static_cast<std::size_t>(v - opts.min_views)][i] = evaluate(res, scene, ms);
    }
  });
  std::vector<AblationRow> out;
  for (int v = opts.min_views; v <= opts.max_views; ++v) {
    const auto& rs = reports[static_cast<std::size_t>(v - opts.min_views)];
    out.push_back({v, static_cast<int>(rs.size()), aggregate(rs)});
  }
  return out;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows, const std::string& method) {
  std::string s =
      "views,method,scenes,g_p,g_r,g_f1,g_iou,mp_p,mp_r,mp_f1,mp_iou,pg_p,pg_r,pg_f1,err3d,bpe,bpe_rms,time_ms\n";
  for (const auto& r : rows)
    s += std::to_string(r.views) + ',' + method + ',' + std::to_string(r.scenes) + ',' + io::metrics_values(r.mean) +
         '\n';
  return s;
}

}  // namespace cdog
