#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "support.hpp"

using namespace cdog;
using cdog::testing::default_rig;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("cdog_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

io::json scene_json() { return io::scene_to_json(generate_scene(4, default_rig(), 1.5, 21)); }

std::size_t count_fields(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1; }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(SceneIo, RoundTripIsExact) {
  const Scene s = generate_scene(25, default_rig(), 2.5, 8);
  const Scene t = io::scene_from_json(io::json::parse(io::dump(io::scene_to_json(s))));
  ASSERT_EQ(t.num_views(), s.num_views());
  EXPECT_EQ(t.sigma, s.sigma);
  EXPECT_EQ(t.seed, s.seed);
  for (std::size_t k = 0; k < s.num_views(); ++k) {
    EXPECT_EQ(t.cameras[k].view_id, s.cameras[k].view_id);
    EXPECT_EQ(t.cameras[k].K, s.cameras[k].K);
    EXPECT_EQ(t.cameras[k].R, s.cameras[k].R);
    EXPECT_EQ(t.cameras[k].T, s.cameras[k].T);
    ASSERT_EQ(t.observations[k].size(), s.observations[k].size());
    for (std::size_t i = 0; i < s.observations[k].size(); ++i) {
      EXPECT_EQ(t.observations[k][i].index, s.observations[k][i].index);
      EXPECT_EQ(t.observations[k][i].xy, s.observations[k][i].xy);
      EXPECT_EQ(t.observations[k][i].gt, s.observations[k][i].gt);
    }
  }
  ASSERT_EQ(t.gt_points.size(), s.gt_points.size());
  for (std::size_t g = 0; g < s.gt_points.size(); ++g) EXPECT_EQ(t.gt_points[g].xyz, s.gt_points[g].xyz);
}

TEST(SceneIo, CanonicalText) {
  const std::string a = io::dump(scene_json());
  const std::string b = io::dump(io::scene_to_json(io::scene_from_json(io::json::parse(a))));
  EXPECT_EQ(a, b);
  EXPECT_LT(a.find("\"cameras\""), a.find("\"format_version\""));
  EXPECT_LT(a.find("\"format_version\""), a.find("\"observations\""));
  EXPECT_EQ(a.back(), '\n');
}

TEST(SceneIo, OptionalFields) {
  io::json j = scene_json();
  j.erase("sigma");
  j.erase("gt_points");
  for (auto& o : j["observations"]) o.erase("gt");
  const Scene s = io::scene_from_json(j);
  EXPECT_FALSE(s.sigma.has_value());
  EXPECT_FALSE(s.has_ground_truth());
}

TEST(SceneIo, MalformedInputs) {
  auto broken = [](auto edit) {
    io::json j = scene_json();
    edit(j);
    return j;
  };
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j.erase("cameras"); })), FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["format_version"] = 99; })), FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["observations"][0]["view"] = 77; })), FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["observations"][0]["xy"] = {1.0}; })), FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["observations"][0]["xy"][0] = nullptr; })),
               FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["observations"][1]["index"] = j["observations"][0]["index"]; j["observations"][1]["view"] = j["observations"][0]["view"]; })),
               FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["cameras"][1]["id"] = j["cameras"][0]["id"]; })),
               FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["cameras"][0]["R"][0] = {2.0, 0.0, 0.0}; })),
               FormatError);
  EXPECT_THROW(io::scene_from_json(broken([](io::json& j) { j["cameras"][0]["K"] = "eye"; })), FormatError);
}

TEST(SceneIo, FileErrors) {
  TempDir dir;
  EXPECT_THROW(io::load_scene(dir.path() / "absent.json"), IoError);
  io::write_file(dir.path() / "bad.json", "{ not json");
  EXPECT_THROW(io::load_scene(dir.path() / "bad.json"), FormatError);
  const Scene s = generate_scene(3, default_rig(), 0.0, 1);
  io::save_scene(s, dir.path() / "ok.json");
  EXPECT_EQ(io::load_scene(dir.path() / "ok.json").num_observations(), 30u);
}

TEST(AssociationIo, RoundTrip) {
  const Scene s = generate_scene(12, default_rig(), 1.0, 2);
  AssociationResult r = associate(s);
  r.points3d = reconstruct(r, s);
  const io::json j = io::association_to_json(r);
  const AssociationResult t = io::association_from_json(io::json::parse(j.dump()));
  EXPECT_EQ(t.method, r.method);
  EXPECT_EQ(t.sigma, r.sigma);
  EXPECT_EQ(t.tau, r.tau);
  EXPECT_EQ(t.views, r.views);
  ASSERT_EQ(t.groups.size(), r.groups.size());
  for (std::size_t k = 0; k < r.groups.size(); ++k) {
    EXPECT_EQ(t.groups[k].id, r.groups[k].id);
    EXPECT_EQ(t.groups[k].members, r.groups[k].members);
  }
  EXPECT_EQ(t.outliers, r.outliers);
  EXPECT_EQ(t.timings.total_ms, r.timings.total_ms);
  EXPECT_TRUE(j.contains("points3d"));
  EXPECT_NO_THROW(io::check_partition(t, s));
}

TEST(AssociationIo, PartitionChecked) {
  const Scene s = generate_scene(5, default_rig(), 0.0, 2);
  AssociationResult r = associate(s);
  ASSERT_FALSE(r.groups.empty());
  AssociationResult missing = r;
  missing.groups[0].members.pop_back();
  EXPECT_THROW(io::check_partition(missing, s), FormatError);
  AssociationResult dup = r;
  dup.outliers.push_back(r.groups[0].members[0]);
  EXPECT_THROW(io::check_partition(dup, s), FormatError);
  AssociationResult foreign = r;
  foreign.outliers.push_back({99, 0});
  EXPECT_THROW(io::check_partition(foreign, s), FormatError);
}

TEST(AssociationIo, Malformed) {
  EXPECT_THROW(io::association_from_json(io::json::parse(R"({"groups": []})")), FormatError);
  EXPECT_THROW(io::association_from_json(io::json::parse(R"({"groups": [{"id": 0}], "outliers": []})")),
               FormatError);
  EXPECT_THROW(io::association_from_json(io::json::parse(R"({"groups": [], "outliers": [{"view": "a", "index": 0}]})")),
               FormatError);
}

TEST(RigIo, RoundTripAndValidation) {
  RigSpec r;
  r.n_cameras = 6;
  r.radius = 321.5;
  r.elevation = 0.2;
  const RigSpec t = io::rig_from_json(io::rig_to_json(r));
  EXPECT_EQ(t.n_cameras, 6);
  EXPECT_EQ(t.radius, 321.5);
  EXPECT_EQ(t.elevation, 0.2);
  EXPECT_EQ(t.principal_point, r.principal_point);
  EXPECT_EQ(io::rig_from_json(io::json::object()).n_cameras, RigSpec{}.n_cameras);
  EXPECT_THROW(io::rig_from_json(io::json{{"n_cameras", 1}}), FormatError);
  EXPECT_THROW(io::rig_from_json(io::json{{"focal_px", -3.0}}), FormatError);
  EXPECT_THROW(io::rig_from_json(io::json{{"radius", "far"}}), FormatError);
}

TEST(Dataset, WriteAndLoadManifest) {
  TempDir dir;
  BenchmarkSpec spec;
  spec.point_counts = {2, 3};
  spec.sigmas = {0.0, 1.0};
  spec.batches = 2;
  spec.seed = 4;
  const io::Manifest m = io::write_dataset(spec, RigSpec{}, dir.path());
  ASSERT_EQ(m.scenes.size(), 8u);
  const io::Manifest n = io::load_manifest(dir.path());
  ASSERT_EQ(n.scenes.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(n.scenes[i].file, m.scenes[i].file);
    EXPECT_EQ(n.scenes[i].scene.seed, m.scenes[i].scene.seed);
    const Scene s = io::load_scene(dir.path() / n.scenes[i].file);
    EXPECT_EQ(static_cast<int>(s.gt_points.size()), n.scenes[i].scene.count);
    EXPECT_EQ(s.sigma, n.scenes[i].scene.sigma);
  }
  fs::remove(dir.path() / m.scenes[3].file);
  EXPECT_THROW(io::load_manifest(dir.path()), IoError);
  io::write_file(dir.path() / "manifest.json", "[]");
  EXPECT_THROW(io::load_manifest(dir.path()), FormatError);
}

TEST(Dataset, RegenerationIsByteIdentical) {
  TempDir a, b;
  BenchmarkSpec spec;
  spec.point_counts = {4};
  spec.sigmas = {2.0};
  spec.batches = 2;
  io::write_dataset(spec, RigSpec{}, a.path());
  io::write_dataset(spec, RigSpec{}, b.path());
  for (const auto& e : fs::directory_iterator(a.path()))
    EXPECT_EQ(io::read_file(e.path()), io::read_file(b.path() / e.path().filename()));
}

TEST(Csv, Formatting) {
  EXPECT_EQ(io::fmt(0.5), "0.500000");
  EXPECT_EQ(io::fmt(std::numeric_limits<double>::quiet_NaN()), "nan");
  io::MetricsRow row;
  row.scene = "x.json";
  row.method = "cdog";
  EXPECT_EQ(count_fields(io::metrics_row(row)), count_fields(io::kMetricsHeader));
}

TEST(Csv, HeaderWrittenOnce) {
  TempDir dir;
  io::MetricsRow row;
  row.method = "cdog";
  io::append_metrics_row(dir.path() / "m.csv", row);
  io::append_metrics_row(dir.path() / "m.csv", row);
  const auto lines = lines_of(io::read_file(dir.path() / "m.csv"));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], io::kMetricsHeader);
}

TEST(Bench, ThreadCountDoesNotChangeScores) {
  TempDir dir;
  BenchmarkSpec spec;
  spec.point_counts = {3, 8};
  spec.sigmas = {0.0, 2.0};
  spec.batches = 2;
  const io::Manifest m = io::write_dataset(spec, RigSpec{}, dir.path());
  BenchOptions opts;
  opts.methods = {"greedy", "cdog", "cdog"};
  opts.threads = 1;
  const auto one = run_bench(dir.path(), m, opts);
  opts.threads = 4;
  const auto four = run_bench(dir.path(), m, opts);
  ASSERT_EQ(one.size(), 16u);
  ASSERT_EQ(four.size(), one.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    ASSERT_TRUE(one[i].ok) << one[i].error;
    io::MetricsRow a = one[i].row, b = four[i].row;
    a.report.time_ms = b.report.time_ms = 0.0;
    EXPECT_EQ(io::metrics_row(a), io::metrics_row(b));
  }
  EXPECT_EQ(one[0].row.method, "cdog");
  EXPECT_EQ(one[1].row.method, "greedy");
  EXPECT_LE(one[0].row.count, one.back().row.count);
}

TEST(Bench, OutputsAndFailures) {
  TempDir dir;
  BenchmarkSpec spec;
  spec.point_counts = {2, 5};
  spec.sigmas = {0.0};
  spec.batches = 3;
  io::Manifest m = io::write_dataset(spec, RigSpec{}, dir.path() / "data");
  io::write_file(dir.path() / "data" / m.scenes[0].file, "garbage");
  BenchOptions opts;
  opts.methods = {"cdog"};
  const auto rows = run_bench(dir.path() / "data", m, opts);
  const BenchSummary s = write_bench_outputs(rows, dir.path() / "out");
  EXPECT_EQ(s.failed, 1);
  EXPECT_EQ(s.succeeded, 5);
  const auto grid = lines_of(io::read_file(dir.path() / "out" / "grid.csv"));
  ASSERT_EQ(grid.size(), 3u);
  EXPECT_EQ(grid[0], kGridHeader);
  for (const auto& l : grid) EXPECT_EQ(count_fields(l), count_fields(kGridHeader));
  EXPECT_EQ(lines_of(io::read_file(dir.path() / "out" / "scenes.csv")).size(), 6u);
  EXPECT_EQ(lines_of(io::read_file(dir.path() / "out" / "timing.csv")).size(), 3u);
  opts.methods = {"bogus"};
  EXPECT_THROW(run_bench(dir.path() / "data", m, opts), Error);
}

TEST(Ablation, OneRowPerViewCount) {
  AblationOptions opts;
  opts.point_counts = {5};
  opts.batches = 2;
  opts.min_views = 3;
  opts.max_views = 6;
  const auto rows = run_ablation(opts);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i].views, 3 + static_cast<int>(i));
    EXPECT_EQ(rows[i].scenes, 2);
  }
  const auto csv = lines_of(ablation_csv(rows, "cdog"));
  EXPECT_EQ(csv.size(), 5u);
}
