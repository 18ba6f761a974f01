#include <gtest/gtest.h>

#include <set>

#include "support.hpp"

using namespace cdog;
using cdog::testing::default_rig;
using cdog::testing::exact_scene;

namespace {

void expect_valid_partition(const AssociationResult& r, const Scene& s) {
  std::vector<NodeId> all = r.outliers;
  for (const auto& g : r.groups) {
    EXPECT_GE(g.members.size(), 2u);
    EXPECT_LE(g.members.size(), s.num_views());
    std::set<int> views;
    for (const auto& m : g.members) EXPECT_TRUE(views.insert(m.view).second);
    all.insert(all.end(), g.members.begin(), g.members.end());
  }
  std::sort(all.begin(), all.end());
  EXPECT_EQ(all, s.node_ids());
}

std::vector<std::vector<NodeId>> member_lists(const AssociationResult& r) {
  std::vector<std::vector<NodeId>> out;
  for (const auto& g : r.groups) out.push_back(g.members);
  return out;
}

/// The sub-scene holding only the observations of emitted groups.
Scene grouped_only(const Scene& s, const AssociationResult& r) {
  std::set<NodeId> keep;
  for (const auto& g : r.groups) keep.insert(g.members.begin(), g.members.end());
  Scene out = s;
  for (std::size_t k = 0; k < out.cameras.size(); ++k)
    std::erase_if(out.observations[k], [&](const Observation& o) {
      return !keep.contains(NodeId{out.cameras[k].view_id, o.index});
    });
  return out;
}

}  // namespace

TEST(Associate, SingleInstanceAllViews) {
  const Scene s = exact_scene({Point3D(3, -7, 12)}, default_rig());
  const AssociationResult r = associate(s);
  ASSERT_EQ(r.groups.size(), 1u);
  EXPECT_EQ(r.groups[0].members.size(), 10u);
  EXPECT_TRUE(r.outliers.empty());
  EXPECT_EQ(r.views.size(), 10u);
  EXPECT_DOUBLE_EQ(r.tau, 1.0);
}

TEST(Associate, NoiseFreeSceneRecoveredExactly) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SceneOptions opts;
    opts.min_separation_px = 3.0;
    const Scene s = generate_scene(40, default_rig(), 0.0, seed, opts);
    const AssociationResult r = associate(s);
    expect_valid_partition(r, s);
    EXPECT_EQ(r.groups.size(), 40u);
    for (const auto& g : r.groups) {
      const int label = *s.observation(g.members[0]).gt;
      for (const auto& m : g.members) EXPECT_EQ(*s.observation(m).gt, label);
    }
  }
}

TEST(Associate, DenseNoiseFreeBand) {
  const Scene s = generate_scene(130, default_rig(), 0.0, 1234);
  const MetricsReport m = evaluate(associate(s), s, 0.0);
  EXPECT_GE(m.perfect.f1, 0.90);
}

TEST(Associate, TwoViewsSkipIqr) {
  const std::vector<CameraPose> two{default_rig()[0], default_rig()[5]};
  const Scene s = generate_scene(15, two, 3.0, 8);
  const AssociationResult r = associate(s);
  expect_valid_partition(r, s);
  for (const auto& g : r.groups) EXPECT_EQ(g.members.size(), 2u);
  // No group ever reaches the three-member size the IQR stage needs.
  const auto comps = connected_components(prune_weak_edges(init_graph(s, r.tau), 0.5));
  for (const auto& c : comps) {
    AssociationGroup g = c;
    resolve_duplicates(g, s);
    EXPECT_LE(g.members.size(), 2u);
  }
}

TEST(Associate, PartitionAndConstraintsUnderNoise) {
  for (double sigma : {0.5, 2.0, 5.0})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const Scene s = generate_scene(60, default_rig(), sigma, seed);
      const AssociationResult r = associate(s);
      expect_valid_partition(r, s);
      EXPECT_GE(r.timings.total_ms, 0.0);
      EXPECT_TRUE(std::is_sorted(r.outliers.begin(), r.outliers.end()));
      for (std::size_t k = 0; k < r.groups.size(); ++k) EXPECT_EQ(r.groups[k].id, static_cast<int>(k));
    }
}

TEST(Associate, Deterministic) {
  const Scene s = generate_scene(70, default_rig(), 2.0, 31);
  const AssociationResult a = associate(s), b = associate(s);
  EXPECT_EQ(member_lists(a), member_lists(b));
  EXPECT_EQ(a.outliers, b.outliers);
}

TEST(Associate, IdempotentOnNoiseFreeGroups) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scene s = generate_scene(60, default_rig(), 0.0, seed);
    const AssociationResult r = associate(s);
    const Scene reduced = grouped_only(s, r);
    const AssociationResult again = associate(reduced);
    EXPECT_EQ(member_lists(again), member_lists(r));
    EXPECT_TRUE(again.outliers.empty());
  }
}

TEST(Associate, ExplicitSigmaOverridesScene) {
  const Scene s = generate_scene(10, default_rig(), 1.0, 3);
  CdogConfig cfg;
  cfg.sigma = 3.0;
  EXPECT_NEAR(associate(s, cfg).tau, threshold_from_sigma(3.0, 2.0), 1e-12);
  EXPECT_NEAR(associate(s).tau, threshold_from_sigma(1.0, 2.0), 1e-12);
}

TEST(EstimateSigma, NoiseFree) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Scene s = generate_scene(30, default_rig(), 0.0, seed);
    s.sigma.reset();
    EXPECT_LT(estimate_sigma(s), 0.1);
  }
}

TEST(EstimateSigma, ThreePixelsFiftyPoints) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Scene s = generate_scene(50, default_rig(), 3.0, hash_seed(1, seed));
    s.sigma.reset();
    const double e = estimate_sigma(s);
    EXPECT_GE(e, 2.0) << seed;
    EXPECT_LE(e, 4.0) << seed;
  }
}

TEST(EstimateSigma, SingleViewFallsBack) {
  const Scene s = generate_scene(10, {default_rig()[0]}, 2.0, 1);
  EXPECT_EQ(estimate_sigma(s), 0.0);
}

TEST(EstimateSigma, UsedWhenSceneHasNone) {
  Scene s = generate_scene(50, default_rig(), 3.0, 77);
  s.sigma.reset();
  const AssociationResult r = associate(s);
  EXPECT_DOUBLE_EQ(r.sigma, estimate_sigma(s));
}

TEST(Reconstruct, NoiseFreeExact) {
  const Scene s = generate_scene(25, default_rig(), 0.0, 5);
  AssociationResult r = ground_truth_result(s);
  const auto pts = reconstruct(r, s);
  ASSERT_EQ(pts.size(), r.groups.size());
  for (const auto& p : pts) {
    const int label = *s.observation(r.groups[static_cast<std::size_t>(p.group_id)].members[0]).gt;
    EXPECT_LT((p.xyz - s.gt_point(label)->xyz).norm(), 1e-6);
    EXPECT_LT(p.bpe, 1e-9);
  }
}

TEST(Reconstruct, MoreViewsBeatTwo) {
  double e10 = 0.0, e2 = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(20, default_rig(), 1.0, seed);
    const Scene two = drop_views(s, 2, seed);
    for (const auto& [scene, acc] : {std::pair{&s, &e10}, std::pair{&two, &e2}}) {
      const AssociationResult r = ground_truth_result(*scene);
      double sum = 0.0;
      const auto pts = reconstruct(r, *scene);
      for (const auto& p : pts) {
        const int label = *scene->observation(r.groups[static_cast<std::size_t>(p.group_id)].members[0]).gt;
        sum += (p.xyz - scene->gt_point(label)->xyz).norm();
      }
      *acc += sum / static_cast<double>(pts.size());
    }
  }
  EXPECT_GT(e10, 0.0);
  EXPECT_LT(e10, e2);
}

TEST(Reconstruct, EmptyResult) {
  const Scene s = generate_scene(5, default_rig(), 0.0, 1);
  EXPECT_TRUE(reconstruct(AssociationResult{}, s).empty());
}
