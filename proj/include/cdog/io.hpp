#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdog/benchmark.hpp"
#include "cdog/error.hpp"
#include "cdog/metrics.hpp"
#include "cdog/pipeline.hpp"
#include "cdog/scene.hpp"

namespace cdog::io {

using nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace detail {

inline json matrix_to_json(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({m(r, 0), m(r, 1), m(r, 2)});
  return rows;
}

inline Mat3 matrix_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("expected a 3x3 matrix");
  Mat3 m;
  for (int r = 0; r < 3; ++r) {
    const json& row = j.at(static_cast<std::size_t>(r));
    if (!row.is_array() || row.size() != 3) throw FormatError("expected a 3x3 matrix");
    for (int c = 0; c < 3; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

template <int N>
json vector_to_json(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int k = 0; k < N; ++k) a.push_back(v(k));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vector_from_json(const json& j) {
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N))
    throw FormatError("expected a " + std::to_string(N) + "-vector");
  Eigen::Matrix<double, N, 1> v;
  for (int k = 0; k < N; ++k) v(k) = j.at(static_cast<std::size_t>(k)).get<double>();
  return v;
}

inline json node_to_json(const NodeId& n) { return {{"view", n.view}, {"index", n.index}}; }

inline NodeId node_from_json(const json& j) { return {j.at("view").get<int>(), j.at("index").get<int>()}; }

}  // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

/// Rethrows library-side JSON errors as FormatError.
template <typename Fn>
auto parse_guard(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw FormatError(e.what());
  }
}

// --- scene -----------------------------------------------------------------

inline json scene_to_json(const Scene& scene) {
  json j;
  j["format_version"] = kFormatVersion;
  if (scene.sigma) j["sigma"] = *scene.sigma;
  j["seed"] = scene.seed;
  json cams = json::array();
  for (const CameraPose& c : scene.cameras)
    cams.push_back({{"id", c.view_id},
                    {"K", detail::matrix_to_json(c.K)},
                    {"R", detail::matrix_to_json(c.R)},
                    {"T", detail::vector_to_json<3>(c.T)}});
  j["cameras"] = std::move(cams);
  json obs = json::array();
  for (std::size_t k = 0; k < scene.cameras.size(); ++k) {
    for (const Observation& o : scene.observations[k]) {
      json e = {{"view", scene.cameras[k].view_id}, {"index", o.index}, {"xy", detail::vector_to_json<2>(o.xy)}};
      if (o.gt) e["gt"] = *o.gt;
      obs.push_back(std::move(e));
    }
  }
  j["observations"] = std::move(obs);
  if (!scene.gt_points.empty()) {
    json pts = json::array();
    for (const GtPoint& g : scene.gt_points) pts.push_back({{"id", g.id}, {"xyz", detail::vector_to_json<3>(g.xyz)}});
    j["gt_points"] = std::move(pts);
  }
  return j;
}

inline Scene scene_from_json(const json& j) {
  return parse_guard([&] {
    if (j.at("format_version").get<int>() != kFormatVersion) throw FormatError("unsupported format_version");
    Scene scene;
    if (j.contains("sigma")) scene.sigma = j.at("sigma").get<double>();
    if (j.contains("seed")) scene.seed = j.at("seed").get<std::uint64_t>();
    for (const json& c : j.at("cameras")) {
      CameraPose pose;
      pose.view_id = c.at("id").get<int>();
      pose.K = detail::matrix_from_json(c.at("K"));
      pose.R = detail::matrix_from_json(c.at("R"));
      pose.T = detail::vector_from_json<3>(c.at("T"));
      scene.cameras.push_back(pose);
    }
    scene.observations.assign(scene.cameras.size(), {});
    std::map<int, std::size_t> pos;
    for (std::size_t k = 0; k < scene.cameras.size(); ++k) pos[scene.cameras[k].view_id] = k;
    for (const json& o : j.at("observations")) {
      const int view = o.at("view").get<int>();
      const auto it = pos.find(view);
      if (it == pos.end()) throw FormatError("observation references unknown view " + std::to_string(view));
      Observation obs;
      obs.index = o.at("index").get<int>();
      obs.xy = detail::vector_from_json<2>(o.at("xy"));
      if (o.contains("gt")) obs.gt = o.at("gt").get<int>();
      scene.observations[it->second].push_back(obs);
    }
    if (j.contains("gt_points"))
      for (const json& g : j.at("gt_points"))
        scene.gt_points.push_back({g.at("id").get<int>(), detail::vector_from_json<3>(g.at("xyz"))});
    scene.normalize();
    return scene;
  });
}

inline std::string dump(const json& j) { return j.dump() + "\n"; }

inline Scene load_scene(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return scene_from_json(j);
}

inline void save_scene(const Scene& scene, const std::filesystem::path& path) {
  write_file(path, dump(scene_to_json(scene)));
}

// --- association -------------------------------------------------------------

inline json association_to_json(const AssociationResult& r) {
  json j;
  j["method"] = r.method;
  j["sigma"] = r.sigma;
  j["tau"] = r.tau;
  j["views"] = r.views;
  json groups = json::array();
  for (const AssociationGroup& g : r.groups) {
    json members = json::array();
    for (const NodeId& n : g.members) members.push_back(detail::node_to_json(n));
    groups.push_back({{"id", g.id}, {"members", std::move(members)}});
  }
  j["groups"] = std::move(groups);
  json outliers = json::array();
  for (const NodeId& n : r.outliers) outliers.push_back(detail::node_to_json(n));
  j["outliers"] = std::move(outliers);
  if (!r.points3d.empty()) {
    json pts = json::array();
    for (const ReconstructedPoint& p : r.points3d)
      pts.push_back({{"group", p.group_id}, {"xyz", detail::vector_to_json<3>(p.xyz)}, {"bpe", p.bpe}});
    j["points3d"] = std::move(pts);
  }
  j["timings_ms"] = {{"init", r.timings.init_ms},
                     {"prune", r.timings.prune_ms},
                     {"iqr", r.timings.iqr_ms},
                     {"gap", r.timings.gap_ms},
                     {"total", r.timings.total_ms}};
  return j;
}

inline AssociationResult association_from_json(const json& j) {
  return parse_guard([&] {
    AssociationResult r;
    r.method = j.value("method", std::string("unknown"));
    r.sigma = j.value("sigma", 0.0);
    r.tau = j.value("tau", 0.0);
    if (j.contains("views")) r.views = j.at("views").get<std::vector<int>>();
    for (const json& g : j.at("groups")) {
      AssociationGroup group;
      group.id = g.at("id").get<int>();
      for (const json& m : g.at("members")) group.members.push_back(detail::node_from_json(m));
      std::sort(group.members.begin(), group.members.end());
      r.groups.push_back(std::move(group));
    }
    for (const json& n : j.at("outliers")) r.outliers.push_back(detail::node_from_json(n));
    if (j.contains("timings_ms")) {
      const json& t = j.at("timings_ms");
      r.timings.init_ms = t.value("init", 0.0);
      r.timings.prune_ms = t.value("prune", 0.0);
      r.timings.iqr_ms = t.value("iqr", 0.0);
      r.timings.gap_ms = t.value("gap", 0.0);
      r.timings.total_ms = t.value("total", 0.0);
    }
    return r;
  });
}

inline AssociationResult load_association(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return association_from_json(j);
}

/// Every scene node must appear exactly once across groups and outliers.
inline void check_partition(const AssociationResult& r, const Scene& scene) {
  std::vector<NodeId> seen = r.outliers;
  for (const auto& g : r.groups) seen.insert(seen.end(), g.members.begin(), g.members.end());
  std::sort(seen.begin(), seen.end());
  if (seen != scene.node_ids()) throw FormatError("prediction does not partition the scene's observations");
}

// --- rig & manifest -----------------------------------------------------------

inline json rig_to_json(const RigSpec& r) {
  return {{"n_cameras", r.n_cameras},
          {"radius", r.radius},
          {"look_at", detail::vector_to_json<3>(r.look_at)},
          {"focal_px", r.focal_px},
          {"principal_point", detail::vector_to_json<2>(r.principal_point)},
          {"image_size", detail::vector_to_json<2>(r.image_size)},
          {"elevation", r.elevation},
          {"elevation_jitter", r.elevation_jitter}};
}

inline RigSpec rig_from_json(const json& j) {
  return parse_guard([&] {
    RigSpec r;
    r.n_cameras = j.value("n_cameras", r.n_cameras);
    r.radius = j.value("radius", r.radius);
    if (j.contains("look_at")) r.look_at = detail::vector_from_json<3>(j.at("look_at"));
    r.focal_px = j.value("focal_px", r.focal_px);
    if (j.contains("principal_point")) r.principal_point = detail::vector_from_json<2>(j.at("principal_point"));
    if (j.contains("image_size")) r.image_size = detail::vector_from_json<2>(j.at("image_size"));
    r.elevation = j.value("elevation", r.elevation);
    r.elevation_jitter = j.value("elevation_jitter", r.elevation_jitter);
    if (r.n_cameras < 2) throw FormatError("rig needs at least two cameras");
    if (r.focal_px <= 0.0) throw FormatError("rig focal length must be positive");
    return r;
  });
}

struct ManifestEntry {
  std::string file;
  SceneEntry scene;
};

struct Manifest {
  std::string root;
  RigSpec rig;
  std::uint64_t rig_seed = 0;
  std::vector<ManifestEntry> scenes;
};

inline json manifest_to_json(const Manifest& m) {
  json scenes = json::array();
  for (const auto& e : m.scenes)
    scenes.push_back({{"file", e.file},
                      {"count", e.scene.count},
                      {"batch", e.scene.batch},
                      {"sigma", e.scene.sigma},
                      {"seed", e.scene.seed}});
  return {{"format_version", kFormatVersion},
          {"root", m.root},
          {"rig", rig_to_json(m.rig)},
          {"rig_seed", m.rig_seed},
          {"scenes", std::move(scenes)}};
}

inline Manifest manifest_from_json(const json& j) {
  return parse_guard([&] {
    if (j.at("format_version").get<int>() != kFormatVersion) throw FormatError("unsupported manifest version");
    Manifest m;
    m.root = j.value("root", std::string("."));
    m.rig = rig_from_json(j.at("rig"));
    m.rig_seed = j.value("rig_seed", std::uint64_t{0});
    for (const json& e : j.at("scenes"))
      m.scenes.push_back({e.at("file").get<std::string>(),
                          {e.at("count").get<int>(), e.at("batch").get<int>(), e.at("sigma").get<double>(),
                           e.at("seed").get<std::uint64_t>()}});
    return m;
  });
}

/// Writes every scene of the sweep plus manifest.json under `dir`.
inline Manifest write_dataset(const BenchmarkSpec& spec, const RigSpec& rig_spec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  Manifest m;
  m.root = ".";
  m.rig = rig_spec;
  m.rig_seed = spec.seed;
  const auto rig = make_rig(rig_spec, spec.seed);
  for (const SceneEntry& e : benchmark_entries(spec)) {
    const Scene scene = generate_entry(e, rig, spec.scene_options);
    save_scene(scene, dir / e.file_name());
    m.scenes.push_back({e.file_name(), e});
  }
  write_file(dir / "manifest.json", json(manifest_to_json(m)).dump(2) + "\n");
  return m;
}

inline Manifest load_manifest(const std::filesystem::path& dir) {
  json j;
  try {
    j = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
  Manifest m = manifest_from_json(j);
  for (const auto& e : m.scenes)
    if (!std::filesystem::exists(dir / m.root / e.file)) throw IoError("manifest lists missing file " + e.file);
  return m;
}

// --- CSV ------------------------------------------------------------------------

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline const char* kMetricsHeader =
    "scene,count,sigma,views,method,g_p,g_r,g_f1,g_iou,mp_p,mp_r,mp_f1,mp_iou,pg_p,pg_r,pg_f1,err3d,bpe,bpe_rms,"
    "time_ms";

struct MetricsRow {
  std::string scene;
  int count = 0;
  double sigma = 0.0;
  int views = 0;
  std::string method;
  MetricsReport report;
};

inline std::string metrics_values(const MetricsReport& r) {
  std::string s;
  for (double v : {r.group.precision, r.group.recall, r.group.f1, r.group.iou, r.mean_point.precision,
                   r.mean_point.recall, r.mean_point.f1, r.mean_point.iou, r.perfect.precision, r.perfect.recall,
                   r.perfect.f1, r.err3d, r.bpe, r.bpe_rms}) {
    s += fmt(v);
    s += ',';
  }
  s += fmt(r.time_ms);
  return s;
}

inline std::string metrics_row(const MetricsRow& row) {
  return row.scene + ',' + std::to_string(row.count) + ',' + fmt(row.sigma) + ',' + std::to_string(row.views) + ',' +
         row.method + ',' + metrics_values(row.report);
}

/// Appends one row, writing the header first when the file is new or empty.
inline void append_metrics_row(const std::filesystem::path& path, const MetricsRow& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot write " + path.string());
  if (fresh) out << kMetricsHeader << '\n';
  out << metrics_row(row) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace cdog::io
