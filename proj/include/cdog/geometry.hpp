#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SVD>

#include "cdog/error.hpp"

namespace cdog {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Point3D = Eigen::Vector3d;

/// Numerical tolerances used by the geometry primitives.
struct GeometryTolerances {
  double orthonormality = 1e-9;
  double center_separation = 1e-9;
  double line_direction = 1e-12;
  double min_depth = 1e-9;
  double singular_gap = 1e-12;
};

inline constexpr GeometryTolerances kDefaultTolerances{};

/// Pinhole camera with world-to-camera extrinsics: x_cam = R * x_world + T.
struct CameraPose {
  int view_id = 0;
  Mat3 K = Mat3::Identity();
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();

  Vec3 center() const { return -R.transpose() * T; }

  Mat34 projection() const {
    Mat34 P;
    P.leftCols<3>() = K * R;
    P.col(3) = K * T;
    return P;
  }

  /// Empty string when valid, otherwise a description of the violated invariant.
  std::string validate(const GeometryTolerances& tol = kDefaultTolerances) const {
    if (!K.allFinite() || !R.allFinite() || !T.allFinite()) return "non-finite camera parameters";
    if ((R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > tol.orthonormality)
      return "rotation is not orthonormal";
    if (std::abs(R.determinant() - 1.0) > tol.orthonormality) return "rotation determinant is not +1";
    if (K(1, 0) != 0.0 || K(2, 0) != 0.0 || K(2, 1) != 0.0) return "intrinsics are not upper-triangular";
    if (K(0, 0) <= 0.0 || K(1, 1) <= 0.0 || K(2, 2) <= 0.0) return "intrinsics diagonal must be positive";
    return {};
  }
};

/// Homogeneous line a*x + b*y + c = 0.
struct EpipolarLine {
  Vec3 abc = Vec3::Zero();
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

struct RelativePose {
  Mat3 R = Mat3::Identity();
  Vec3 T = Vec3::Zero();
};

/// Pose of b's frame relative to a's: x_b = R * x_a + T.
inline RelativePose relative_pose(const CameraPose& a, const CameraPose& b) {
  RelativePose rel;
  rel.R = b.R * a.R.transpose();
  rel.T = b.T - rel.R * a.T;
  return rel;
}

/// F such that x_a^T F x_b = 0 for corresponding pixels; F * x_b is the
/// epipolar line in view a. Normalized to unit Frobenius norm.
inline Mat3 fundamental_matrix(const CameraPose& a, const CameraPose& b,
                               const GeometryTolerances& tol = kDefaultTolerances) {
  if ((a.center() - b.center()).norm() <= tol.center_separation)
    throw DegenerateRig("camera centers of views " + std::to_string(a.view_id) + " and " +
                        std::to_string(b.view_id) + " coincide");
  const RelativePose rel = relative_pose(a, b);
  // Essential matrix of the pair in the b <- a direction: y_b^T [T]x R y_a = 0.
  const Mat3 essential = skew(rel.T) * rel.R;
  Mat3 F = a.K.inverse().transpose() * essential.transpose() * b.K.inverse();
  return F / F.norm();
}

inline EpipolarLine epipolar_line(const Mat3& F, const Vec2& p,
                                  const GeometryTolerances& tol = kDefaultTolerances) {
  const Vec3 abc = F * p.homogeneous();
  if (std::abs(abc.x()) < tol.line_direction && std::abs(abc.y()) < tol.line_direction)
    throw DegenerateLine("point maps to a line without direction (epipole)");
  return {abc};
}

/// Signed point-to-line distance; sign follows the side of the line.
inline double signed_epipolar_distance(const EpipolarLine& l, const Vec2& p) {
  const Vec3& v = l.abc;
  return (v.x() * p.x() + v.y() * p.y() + v.z()) / std::hypot(v.x(), v.y());
}

inline double epipolar_distance(const EpipolarLine& l, const Vec2& p) {
  return std::abs(signed_epipolar_distance(l, p));
}

/// Distance of `p_a` (view a) to the epipolar line of `p_b` (view b), given
/// F = fundamental_matrix(a, b). Returns +inf when p_b is the epipole.
inline double transfer_distance(const Mat3& F, const Vec2& p_b, const Vec2& p_a) {
  const Vec3 abc = F * p_b.homogeneous();
  const double n = std::hypot(abc.x(), abc.y());
  if (n < kDefaultTolerances.line_direction) return std::numeric_limits<double>::infinity();
  return std::abs(abc.x() * p_a.x() + abc.y() * p_a.y() + abc.z()) / n;
}

inline Vec2 project(const CameraPose& cam, const Point3D& r,
                    const GeometryTolerances& tol = kDefaultTolerances) {
  const Vec3 x_cam = cam.R * r + cam.T;
  if (x_cam.z() <= tol.min_depth)
    throw BehindCamera("point has depth " + std::to_string(x_cam.z()) + " in view " +
                       std::to_string(cam.view_id));
  return (cam.K * x_cam).hnormalized();
}

namespace detail {

inline double squared_reprojection(std::span<const CameraPose* const> cams, std::span<const Vec2> pts,
                                   const Point3D& r, double min_depth) {
  double sum = 0.0;
  for (std::size_t k = 0; k < cams.size(); ++k) {
    const Vec3 x = cams[k]->R * r + cams[k]->T;
    if (x.z() <= min_depth) return std::numeric_limits<double>::infinity();
    sum += (pts[k] - (cams[k]->K * x).hnormalized()).squaredNorm();
  }
  return sum;
}

}  // namespace detail

/// Gauss-Newton on the summed squared pixel residual, starting from `r`.
/// Steps are only taken when they reduce the residual.
inline Point3D refine_reprojection(std::span<const CameraPose* const> cams, std::span<const Vec2> pts, Point3D r,
                                   const GeometryTolerances& tol = kDefaultTolerances) {
  double err = detail::squared_reprojection(cams, pts, r, tol.min_depth);
  if (!std::isfinite(err)) return r;
  for (int it = 0; it < 10 && err > 0.0; ++it) {
    Mat3 JtJ = Mat3::Zero();
    Vec3 Jtr = Vec3::Zero();
    for (std::size_t k = 0; k < cams.size(); ++k) {
      const Mat3 KR = cams[k]->K * cams[k]->R;
      const Vec3 u = cams[k]->K * (cams[k]->R * r + cams[k]->T);
      const Vec2 proj = u.hnormalized();
      Eigen::Matrix<double, 2, 3> J;
      J.row(0) = (KR.row(0) - proj.x() * KR.row(2)) / u.z();
      J.row(1) = (KR.row(1) - proj.y() * KR.row(2)) / u.z();
      const Vec2 res = proj - pts[k];
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * res;
    }
    const Vec3 step = JtJ.ldlt().solve(-Jtr);
    if (!step.allFinite()) break;
    const Point3D next = r + step;
    const double next_err = detail::squared_reprojection(cams, pts, next, tol.min_depth);
    if (!(next_err < err)) break;
    r = next;
    err = next_err;
    if (step.norm() <= 1e-12 * (1.0 + r.norm())) break;
  }
  return r;
}

/// Homogeneous DLT over any number (>= 2) of views, polished by a few
/// reprojection Gauss-Newton steps. Observations are lifted to normalized
/// camera coordinates so the design matrix is well-conditioned.
inline Point3D triangulate(std::span<const CameraPose* const> cams, std::span<const Vec2> pts,
                           const GeometryTolerances& tol = kDefaultTolerances) {
  if (cams.size() != pts.size())
    throw DegenerateConfiguration("camera/observation count mismatch");
  if (cams.size() < 2) throw DegenerateConfiguration("triangulation needs at least two views");

  // Center and scale the world frame on the participating cameras.
  Vec3 origin = Vec3::Zero();
  for (const CameraPose* c : cams) origin += c->center();
  origin /= static_cast<double>(cams.size());
  double scale = 0.0;
  for (const CameraPose* c : cams) scale += (c->center() - origin).norm();
  scale /= static_cast<double>(cams.size());
  if (scale <= tol.center_separation) throw DegenerateConfiguration("camera centers coincide");

  Eigen::MatrixXd design(2 * cams.size(), 4);
  for (std::size_t k = 0; k < cams.size(); ++k) {
    const CameraPose& c = *cams[k];
    // [R | R*origin + T] maps normalized world coordinates (x - origin)/scale
    // up to the camera frame, modulo the global factor `scale`.
    Mat34 P;
    P.leftCols<3>() = c.R * scale;
    P.col(3) = c.R * origin + c.T;
    const Vec3 ray = c.K.triangularView<Eigen::Upper>().solve(pts[k].homogeneous());
    const Vec2 xn = ray.hnormalized();
    Eigen::RowVector4d r0 = xn.x() * P.row(2) - P.row(0);
    Eigen::RowVector4d r1 = xn.y() * P.row(2) - P.row(1);
    design.row(2 * k) = r0 / r0.norm();
    design.row(2 * k + 1) = r1 / r1.norm();
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s(2) - s(3) < tol.singular_gap * s(0))
    throw DegenerateConfiguration("viewing rays are parallel or colinear");
  const Eigen::Vector4d X = svd.matrixV().col(3);
  if (std::abs(X(3)) < tol.singular_gap * X.head<3>().norm())
    throw DegenerateConfiguration("triangulated point lies at infinity");
  return refine_reprojection(cams, pts, origin + scale * X.head<3>() / X(3), tol);
}

inline Point3D triangulate(std::span<const CameraPose> cams, std::span<const Vec2> pts,
                           const GeometryTolerances& tol = kDefaultTolerances) {
  std::vector<const CameraPose*> ptrs;
  ptrs.reserve(cams.size());
  for (const CameraPose& c : cams) ptrs.push_back(&c);
  return triangulate(std::span<const CameraPose* const>(ptrs), pts, tol);
}

/// Mean squared pixel distance between observations and reprojections of r_hat.
inline double back_projection_error(std::span<const CameraPose* const> cams,
                                    std::span<const Vec2> pts, const Point3D& r_hat) {
  if (cams.empty() || cams.size() != pts.size())
    throw DegenerateConfiguration("back-projection needs aligned, nonempty inputs");
  double sum = 0.0;
  for (std::size_t k = 0; k < cams.size(); ++k) sum += (pts[k] - project(*cams[k], r_hat)).squaredNorm();
  return sum / static_cast<double>(cams.size());
}

inline double back_projection_error(std::span<const CameraPose> cams, std::span<const Vec2> pts,
                                    const Point3D& r_hat) {
  std::vector<const CameraPose*> ptrs;
  ptrs.reserve(cams.size());
  for (const CameraPose& c : cams) ptrs.push_back(&c);
  return back_projection_error(std::span<const CameraPose* const>(ptrs), pts, r_hat);
}

inline double back_projection_rms(std::span<const CameraPose> cams, std::span<const Vec2> pts,
                                  const Point3D& r_hat) {
  return std::sqrt(back_projection_error(cams, pts, r_hat));
}

}  // namespace cdog
