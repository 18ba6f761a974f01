#pragma once

#include <vector>

#include "cdog/cdog.hpp"

namespace cdog::testing {

inline const std::vector<CameraPose>& default_rig() {
  static const std::vector<CameraPose> rig = make_rig(RigSpec{}, 0);
  return rig;
}

/// Scene with exact projections of `points`; observation index == gt id.
inline Scene exact_scene(const std::vector<Point3D>& points, const std::vector<CameraPose>& cams) {
  Scene s;
  s.cameras = cams;
  s.sigma = 0.0;
  s.observations.resize(cams.size());
  for (std::size_t k = 0; k < cams.size(); ++k)
    for (std::size_t g = 0; g < points.size(); ++g)
      s.observations[k].push_back({static_cast<int>(g), project(cams[k], points[g]), static_cast<int>(g)});
  for (std::size_t g = 0; g < points.size(); ++g) s.gt_points.push_back({static_cast<int>(g), points[g]});
  s.normalize();
  return s;
}

inline std::vector<CameraPose> first_views(int n) {
  const auto& rig = default_rig();
  return {rig.begin(), rig.begin() + n};
}

/// Fundamental matrix built from projection matrices only: F = [e_a]x P_a P_b^+,
/// the textbook construction for x_a^T F x_b = 0. Evaluated in extended
/// precision since P_b P_b^T is poorly conditioned in pixel units.
inline Mat3 projective_fundamental(const CameraPose& a, const CameraPose& b) {
  using LMat34 = Eigen::Matrix<long double, 3, 4>;
  using LVec3 = Eigen::Matrix<long double, 3, 1>;
  using LMat3 = Eigen::Matrix<long double, 3, 3>;
  const LMat34 Pa = a.projection().cast<long double>();
  const LMat34 Pb = b.projection().cast<long double>();
  const Eigen::Matrix<long double, 4, 1> Cb = b.center().homogeneous().cast<long double>();
  const LVec3 ea = Pa * Cb;
  LMat3 ex;
  ex << 0, -ea.z(), ea.y(), ea.z(), 0, -ea.x(), -ea.y(), ea.x(), 0;
  const Eigen::Matrix<long double, 4, 3> pinv = Pb.transpose() * (Pb * Pb.transpose()).inverse();
  const LMat3 F = ex * Pa * pinv;
  return (F / F.norm()).cast<double>();
}

inline std::vector<const CameraPose*> pointers(const std::vector<CameraPose>& cams) {
  std::vector<const CameraPose*> out;
  for (const auto& c : cams) out.push_back(&c);
  return out;
}

}  // namespace cdog::testing
