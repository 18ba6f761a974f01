#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "cdog/geometry.hpp"
#include "cdog/pipeline.hpp"
#include "cdog/scene.hpp"

namespace cdog {

/// Precision / recall / F1 / IoU from raw counts; empty denominators score 0.
struct ScoreSet {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;

  static ScoreSet from_counts(double tp, double fp, double fn) {
    ScoreSet s{tp, fp, fn};
    auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    s.precision = ratio(tp, tp + fp);
    s.recall = ratio(tp, tp + fn);
    s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall);
    s.iou = ratio(tp, tp + fp + fn);
    return s;
  }
};

inline int label_of(const Scene& scene, const NodeId& n) {
  const auto& gt = scene.observation(n).gt;
  if (!gt) throw FormatError("observation (" + std::to_string(n.view) + ", " + std::to_string(n.index) +
                             ") has no ground-truth label");
  return *gt;
}

/// Number of observations per ground-truth id in the scene.
inline std::map<int, int> instance_sizes(const Scene& scene) {
  std::map<int, int> sizes;
  for (const auto& view : scene.observations)
    for (const auto& o : view) {
      if (!o.gt) throw FormatError("scene is missing ground-truth labels");
      ++sizes[*o.gt];
    }
  return sizes;
}

/// Ground-truth instances a group could recover (observed in at least two views).
inline std::vector<int> matchable_instances(const Scene& scene) {
  std::vector<int> out;
  for (const auto& [id, n] : instance_sizes(scene))
    if (n >= 2) out.push_back(id);
  return out;
}

struct Plurality {
  int label = -1;
  int count = 0;
};

/// Most frequent label among the members; ties go to the lowest label.
inline Plurality plurality(const Scene& scene, const std::vector<NodeId>& members) {
  std::map<int, int> counts;
  for (const NodeId& n : members) ++counts[label_of(scene, n)];
  Plurality p;
  for (const auto& [label, c] : counts)
    if (c > p.count) p = {label, c};
  return p;
}

/// Groups plus every outlier as its own singleton group (ids continue after
/// the last group id).
inline std::vector<AssociationGroup> prediction_units(const AssociationResult& result) {
  std::vector<AssociationGroup> units = result.groups;
  int next = 0;
  for (const auto& g : units) next = std::max(next, g.id + 1);
  for (const NodeId& n : result.outliers) units.push_back({next++, {n}, true});
  return units;
}

struct MatchAssignment {
  std::vector<std::pair<int, int>> pairs;  // (position in prediction list, gt id)
  std::vector<int> unmatched_pred;         // positions
  std::vector<int> unmatched_gt;
};

/// Each predicted group proposes its plurality label and matches it when at
/// least two members carry it. Competing claims go to the group with more
/// correct members, then to the lower group id.
inline MatchAssignment match_groups(const std::vector<AssociationGroup>& pred, const Scene& scene) {
  struct Claim {
    int pos;
    int correct;
    int group_id;
  };
  std::map<int, Claim> winner;
  MatchAssignment out;
  for (std::size_t k = 0; k < pred.size(); ++k) {
    const Plurality p = plurality(scene, pred[k].members);
    if (p.count < 2) {
      out.unmatched_pred.push_back(static_cast<int>(k));
      continue;
    }
    const Claim c{static_cast<int>(k), p.count, pred[k].id};
    auto it = winner.find(p.label);
    if (it == winner.end()) {
      winner.emplace(p.label, c);
    } else if (c.correct > it->second.correct ||
               (c.correct == it->second.correct && c.group_id < it->second.group_id)) {
      out.unmatched_pred.push_back(it->second.pos);
      it->second = c;
    } else {
      out.unmatched_pred.push_back(c.pos);
    }
  }
  for (const auto& [label, c] : winner) out.pairs.emplace_back(c.pos, label);
  for (int id : matchable_instances(scene))
    if (!winner.contains(id)) out.unmatched_gt.push_back(id);
  std::sort(out.pairs.begin(), out.pairs.end());
  std::sort(out.unmatched_pred.begin(), out.unmatched_pred.end());
  return out;
}

inline ScoreSet group_scores(const MatchAssignment& m) {
  return ScoreSet::from_counts(static_cast<double>(m.pairs.size()), static_cast<double>(m.unmatched_pred.size()),
                               static_cast<double>(m.unmatched_gt.size()));
}

struct MeanPointScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  int groups = 0;  // groups that entered the average
};

/// Point-level scores per group against its dominant instance, averaged over
/// groups that span at least two views.
inline MeanPointScores mean_point_scores(const std::vector<AssociationGroup>& groups, const Scene& scene) {
  const auto sizes = instance_sizes(scene);
  MeanPointScores out;
  for (const AssociationGroup& g : groups) {
    std::vector<int> views;
    for (const NodeId& n : g.members) views.push_back(n.view);
    std::sort(views.begin(), views.end());
    if (std::unique(views.begin(), views.end()) - views.begin() < 2) continue;
    const Plurality p = plurality(scene, g.members);
    const double tp = p.count;
    const double fp = static_cast<double>(g.members.size()) - tp;
    const double fn = static_cast<double>(sizes.at(p.label)) - tp;
    const ScoreSet s = ScoreSet::from_counts(tp, fp, fn);
    out.precision += s.precision;
    out.recall += s.recall;
    out.f1 += s.f1;
    out.iou += s.iou;
    ++out.groups;
  }
  if (out.groups > 0) {
    const double n = out.groups;
    out.precision /= n;
    out.recall /= n;
    out.f1 /= n;
    out.iou /= n;
  }
  return out;
}

/// A true positive is a pure group (one instance, two or more members) that is
/// the largest pure group of its instance; with `require_complete` it must
/// also hold every observation of that instance.
inline ScoreSet perfect_group_scores(const std::vector<AssociationGroup>& groups, const Scene& scene,
                                     bool require_complete = false) {
  const auto sizes = instance_sizes(scene);
  std::map<int, std::pair<std::size_t, int>> best;  // gt -> (size, group id)
  for (const AssociationGroup& g : groups) {
    if (g.members.size() < 2) continue;
    const Plurality p = plurality(scene, g.members);
    if (static_cast<std::size_t>(p.count) != g.members.size()) continue;
    if (require_complete && p.count != sizes.at(p.label)) continue;
    auto it = best.find(p.label);
    const std::pair<std::size_t, int> cand{g.members.size(), g.id};
    if (it == best.end()) best.emplace(p.label, cand);
    else if (cand.first > it->second.first || (cand.first == it->second.first && cand.second < it->second.second))
      it->second = cand;
  }
  const double tp = static_cast<double>(best.size());
  const double fp = static_cast<double>(groups.size()) - tp;
  const double fn = static_cast<double>(matchable_instances(scene).size()) - tp;
  return ScoreSet::from_counts(tp, fp, fn);
}

struct ReconstructionErrors {
  double err3d = std::numeric_limits<double>::quiet_NaN();  // world units
  double bpe = std::numeric_limits<double>::quiet_NaN();    // squared pixels
  int groups = 0;
  int untriangulated = 0;
};

/// 3D error and back-projection error of the matched groups. Each group's
/// point is compared with its matched instance and reprojected onto every
/// observation of that instance. NaN when no group contributes.
inline ReconstructionErrors reconstruction_errors(const std::vector<AssociationGroup>& pred,
                                                  const MatchAssignment& match, const Scene& scene) {
  ReconstructionErrors out;
  std::map<int, std::vector<NodeId>> instance_nodes;
  for (const NodeId& n : scene.node_ids()) instance_nodes[label_of(scene, n)].push_back(n);

  double err_sum = 0.0;
  double bpe_sum = 0.0;
  for (const auto& [pos, gt] : match.pairs) {
    const AssociationGroup& g = pred[static_cast<std::size_t>(pos)];
    const GtPoint* truth = scene.gt_point(gt);
    if (!truth) throw FormatError("ground-truth point " + std::to_string(gt) + " is missing");
    try {
      const Point3D r = triangulate_nodes(scene, g.members);
      const AlignedViews v = gather(scene, instance_nodes.at(gt));
      const double bpe =
          back_projection_error(std::span<const CameraPose* const>(v.cams), std::span<const Vec2>(v.pts), r);
      err_sum += (r - truth->xyz).norm();
      bpe_sum += bpe;
      ++out.groups;
    } catch (const Error&) {
      ++out.untriangulated;
    }
  }
  if (out.groups > 0) {
    out.err3d = err_sum / out.groups;
    out.bpe = bpe_sum / out.groups;
  }
  return out;
}

struct MetricsReport {
  ScoreSet group;
  MeanPointScores mean_point;
  ScoreSet perfect;
  double err3d = std::numeric_limits<double>::quiet_NaN();
  double bpe = std::numeric_limits<double>::quiet_NaN();
  double bpe_rms = std::numeric_limits<double>::quiet_NaN();
  int untriangulated = 0;
  double time_ms = 0.0;
};

struct EvaluateOptions {
  bool strict_perfect = false;
};

inline MetricsReport evaluate(const AssociationResult& result, const Scene& scene, double time_ms,
                              const EvaluateOptions& opts = {}) {
  if (!scene.has_ground_truth()) throw FormatError("scene has no ground truth");
  MetricsReport r;
  const auto units = prediction_units(result);
  const MatchAssignment match = match_groups(units, scene);
  r.group = group_scores(match);
  r.mean_point = mean_point_scores(result.groups, scene);
  r.perfect = perfect_group_scores(result.groups, scene, opts.strict_perfect);
  const ReconstructionErrors rec = reconstruction_errors(units, match, scene);
  r.err3d = rec.err3d;
  r.bpe = rec.bpe;
  r.bpe_rms = std::sqrt(rec.bpe);
  r.untriangulated = rec.untriangulated;
  r.time_ms = time_ms;
  return r;
}

/// The ideal prediction: one group per instance, nothing left over.
inline AssociationResult ground_truth_result(const Scene& scene) {
  AssociationResult result;
  result.method = "ground_truth";
  std::map<int, std::vector<NodeId>> by_label;
  for (const NodeId& n : scene.node_ids()) by_label[label_of(scene, n)].push_back(n);
  for (auto& [label, nodes] : by_label) result.groups.push_back({0, std::move(nodes), false});
  finalize_result(result, scene);
  return result;
}

/// Unweighted mean over scenes; NaN error fields are skipped.
inline MetricsReport aggregate(const std::vector<MetricsReport>& reports) {
  MetricsReport m;
  if (reports.empty()) return m;
  const double n = static_cast<double>(reports.size());
  double err = 0.0, bpe = 0.0, rms = 0.0;
  int n_err = 0;
  m.err3d = m.bpe = m.bpe_rms = 0.0;
  for (const auto& r : reports) {
    for (auto [dst, src] : {std::pair{&m.group, &r.group}, std::pair{&m.perfect, &r.perfect}}) {
      dst->tp += src->tp / n;
      dst->fp += src->fp / n;
      dst->fn += src->fn / n;
      dst->precision += src->precision / n;
      dst->recall += src->recall / n;
      dst->f1 += src->f1 / n;
      dst->iou += src->iou / n;
    }
    m.mean_point.precision += r.mean_point.precision / n;
    m.mean_point.recall += r.mean_point.recall / n;
    m.mean_point.f1 += r.mean_point.f1 / n;
    m.mean_point.iou += r.mean_point.iou / n;
    m.mean_point.groups += r.mean_point.groups;
    m.untriangulated += r.untriangulated;
    m.time_ms += r.time_ms / n;
    if (!std::isnan(r.err3d)) {
      err += r.err3d;
      bpe += r.bpe;
      rms += r.bpe_rms;
      ++n_err;
    }
  }
  if (n_err > 0) {
    m.err3d = err / n_err;
    m.bpe = bpe / n_err;
    m.bpe_rms = rms / n_err;
  } else {
    m.err3d = m.bpe = m.bpe_rms = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace cdog
