//==============================================================================
// Copyright 2026 The reloc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//==============================================================================

#pragma once

#include "reloc/association.hpp"
#include "reloc/geometry.hpp"
#include "reloc/io.hpp"
#include "reloc/projection.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace reloc
{

struct RansacConfig
{
  int max_iters = 2000;
  double inlier_thresh_px = 5.0;
  double confidence = 0.999;
  int min_inliers = 6;
  double huber_delta_px = 2.0;
  int refine_iters = 20;
  std::uint64_t seed = 0;

  void validate() const
  {
    if (max_iters < 1 || min_inliers < 4 || refine_iters < 0)
      throw Error("ransac: invalid iteration or inlier limits");
    if (!(inlier_thresh_px > 0.0) || !(huber_delta_px > 0.0))
      throw Error("ransac: thresholds must be positive");
    if (!(confidence > 0.0 && confidence < 1.0))
      throw Error("ransac: confidence must be in (0, 1)");
  }
};

enum class RelocStatus { OK, FAILED };

/// Counters collected along the fine stage.
struct StageStats
{
  int candidates_tried = 0;
  int candidates_accepted = 0;
  std::size_t matches = 0;
  std::size_t lifted = 0;
  std::size_t filtered = 0;
  bool operator==(const StageStats&) const = default;
};

struct RelocalizationResult
{
  RelocStatus status = RelocStatus::FAILED;
  std::string reason;
  Pose pose; ///< map-to-camera: p_cam = R p_map + t
  int inlier_count = 0;
  double inlier_ratio = 0.0;
  double mean_reproj_err_px = 0.0;
  std::vector<bool> inliers; ///< per input correspondence
  StageStats stats;

  bool ok() const { return status == RelocStatus::OK; }
  /// Camera pose in the map frame, same convention as trajectories.
  Pose camera_to_map() const { return pose.inverse(); }
  bool operator==(const RelocalizationResult&) const = default;
};

//-----------------------------------------------------------------------------

inline Vec3 bearing(const Vec2& px, const CameraIntrinsics& k)
{
  return Vec3((px.x() - k.cx) / k.fx, (px.y() - k.cy) / k.fy, 1.0).normalized();
}

inline double reprojection_error(const Pose& map_to_cam, const Vec3& p, const Vec2& px, const CameraIntrinsics& k)
{
  const auto proj = project_pinhole(map_to_cam * p, k);
  return proj ? (*proj - px).norm() : std::numeric_limits<double>::infinity();
}

namespace detail
{
/// Real roots of sum c[i] x^i via companion-matrix eigenvalues, Newton polished.
inline std::vector<double> real_roots(std::vector<double> c)
{
  while (c.size() > 1 && std::abs(c.back()) < 1e-14 * (std::abs(c.front()) + 1e-300))
    c.pop_back();
  const int deg = static_cast<int>(c.size()) - 1;
  std::vector<double> roots;
  if (deg < 1)
    return roots;
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  for (int i = 0; i < deg; ++i)
    comp(0, i) = -c[deg - 1 - i] / c[deg];
  for (int i = 1; i < deg; ++i)
    comp(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  const auto ev = es.eigenvalues();
  for (int i = 0; i < deg; ++i)
  {
    const std::complex<double> z = ev(i);
    if (std::abs(z.imag()) > 1e-4 * (1.0 + std::abs(z.real())))
      continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it)
    {
      double f = 0.0, df = 0.0;
      for (int j = deg; j >= 0; --j)
      {
        df = df * x + f;
        f = f * x + c[j];
      }
      if (df == 0.0)
        break;
      const double step = f / df;
      x -= step;
      if (std::abs(step) < 1e-16 * (1.0 + std::abs(x)))
        break;
    }
    roots.push_back(x);
  }
  return roots;
}

inline std::vector<double> poly_mul(const std::vector<double>& a, const std::vector<double>& b)
{
  std::vector<double> r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      r[i + j] += a[i] * b[j];
  return r;
}

inline void poly_add(std::vector<double>& acc, const std::vector<double>& p, double scale)
{
  if (acc.size() < p.size())
    acc.resize(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i)
    acc[i] += scale * p[i];
}
} // namespace detail

/// Perspective-three-point: all map-to-camera poses consistent with three pixel /
/// point pairs. Distances along the bearings follow from the law of cosines,
/// reduced to a quartic (Grunert's elimination); each root is polished by Newton
/// iterations on the three distance equations before the rigid alignment.
/// Collinear or coincident points yield no solution.
inline std::vector<Pose> p3p_solve(std::span<const Vec2, 3> pixels, std::span<const Vec3, 3> points,
                                   const CameraIntrinsics& k)
{
  std::vector<Pose> out;
  const Vec3& p1 = points[0];
  const Vec3& p2 = points[1];
  const Vec3& p3 = points[2];
  const double scale2 = std::max({(p2 - p1).squaredNorm(), (p3 - p1).squaredNorm(), (p3 - p2).squaredNorm()});
  if (!(scale2 > 0.0) || (p2 - p1).cross(p3 - p1).norm() < 1e-9 * scale2)
    return out;
  const std::array<Vec3, 3> f = {bearing(pixels[0], k), bearing(pixels[1], k), bearing(pixels[2], k)};
  const double ca = f[1].dot(f[2]), cb = f[0].dot(f[2]), cg = f[0].dot(f[1]);
  const double a2 = (p2 - p3).squaredNorm(), b2 = (p1 - p3).squaredNorm(), c2 = (p1 - p2).squaredNorm();
  const double kk = (a2 - c2) / b2;

  // s2 = u s1, s3 = v s1; u = N(v) / D(v); quartic D^2 + N^2 - 2 cg N D - (c2/b2)(1 + v^2 - 2 cb v) D^2 = 0.
  const std::vector<double> num = {1.0 + kk, -2.0 * kk * cb, kk - 1.0};
  const std::vector<double> den = {2.0 * cg, -2.0 * ca};
  const auto dd = detail::poly_mul(den, den);
  std::vector<double> quartic;
  detail::poly_add(quartic, dd, 1.0);
  detail::poly_add(quartic, detail::poly_mul(num, num), 1.0);
  detail::poly_add(quartic, detail::poly_mul(num, den), -2.0 * cg);
  detail::poly_add(quartic, detail::poly_mul({1.0, -2.0 * cb, 1.0}, dd), -c2 / b2);

  for (const double v : detail::real_roots(quartic))
  {
    const double d = den[0] + den[1] * v;
    if (std::abs(d) < 1e-12 || !(v > 0.0))
      continue;
    const double u = (num[0] + num[1] * v + num[2] * v * v) / d;
    const double q = 1.0 + u * u - 2.0 * u * cg;
    if (!(u > 0.0) || !(q > 0.0))
      continue;
    Vec3 s;
    s[0] = std::sqrt(c2 / q);
    s[1] = u * s[0];
    s[2] = v * s[0];
    for (int it = 0; it < 10; ++it)
    {
      const Vec3 r(s[1] * s[1] + s[2] * s[2] - 2 * s[1] * s[2] * ca - a2,
                   s[0] * s[0] + s[2] * s[2] - 2 * s[0] * s[2] * cb - b2,
                   s[0] * s[0] + s[1] * s[1] - 2 * s[0] * s[1] * cg - c2);
      Mat3 j;
      j << 0.0, 2 * s[1] - 2 * s[2] * ca, 2 * s[2] - 2 * s[1] * ca,
           2 * s[0] - 2 * s[2] * cb, 0.0, 2 * s[2] - 2 * s[0] * cb,
           2 * s[0] - 2 * s[1] * cg, 2 * s[1] - 2 * s[0] * cg, 0.0;
      const Eigen::FullPivLU<Mat3> lu(j);
      if (!lu.isInvertible())
        break;
      const Vec3 step = lu.solve(r);
      s -= step;
      if (step.norm() < 1e-15 * s.norm())
        break;
    }
    if (!(s.minCoeff() > 0.0))
      continue;
    Mat3 cam, world;
    for (int i = 0; i < 3; ++i)
    {
      cam.col(i) = s[i] * f[i];
      world.col(i) = points[i];
    }
    const Eigen::Matrix4d t = Eigen::umeyama(world, cam, false);
    Pose pose(t.block<3, 3>(0, 0), t.block<3, 1>(0, 3));
    bool consistent = true;
    for (int i = 0; i < 3 && consistent; ++i)
      consistent = reprojection_error(pose, points[i], pixels[i], k) <= 1e-6;
    if (consistent)
      out.push_back(pose);
  }
  return out;
}

inline std::vector<Pose> p3p_solve(std::span<const Correspondence2D3D, 3> corrs, const CameraIntrinsics& k)
{
  const std::array<Vec2, 3> px = {corrs[0].query_px, corrs[1].query_px, corrs[2].query_px};
  const std::array<Vec3, 3> pts = {corrs[0].point_xyz, corrs[1].point_xyz, corrs[2].point_xyz};
  return p3p_solve(std::span<const Vec2, 3>(px), std::span<const Vec3, 3>(pts), k);
}

//-----------------------------------------------------------------------------
// Robust refinement

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Left increment (w, v): R <- Exp(w) R, t <- Exp(w) t + v.
inline Pose apply_increment(const Pose& t, const Vec6& delta)
{
  const Mat3 r = so3_exp(delta.head<3>());
  return {r * t.rotation, r * t.translation + delta.tail<3>()};
}

/// Jacobian of the pixel residual w.r.t. the increment at zero. Requires z > 0.
inline Eigen::Matrix<double, 2, 6> reprojection_jacobian(const Pose& map_to_cam, const Vec3& p, const CameraIntrinsics& k)
{
  const Vec3 pc = map_to_cam * p;
  const double iz = 1.0 / pc.z();
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz,
           0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
  Eigen::Matrix<double, 3, 6> dp;
  dp.block<3, 3>(0, 0) = -skew(pc);
  dp.block<3, 3>(0, 3) = Mat3::Identity();
  return dproj * dp;
}

/// Huber cost on the residual norm e: e^2 inside delta, 2 delta e - delta^2 outside.
inline double huber_cost(double e, double delta)
{
  return e <= delta ? e * e : 2.0 * delta * e - delta * delta;
}

/// Robust objective, +inf when any point falls behind the camera.
inline double robust_objective(const Pose& map_to_cam, std::span<const Correspondence2D3D> corrs,
                               const CameraIntrinsics& k, double delta)
{
  double cost = 0.0;
  for (const auto& c : corrs)
    cost += huber_cost(reprojection_error(map_to_cam, c.point_xyz, c.query_px, k), delta);
  return cost;
}

struct RefineTrace
{
  Pose pose;
  std::vector<double> accepted_costs; ///< objective after each accepted step, starting with the initial one
  int iterations = 0;
};

/// Levenberg-damped Gauss-Newton with Huber weights (IRLS) on the 6-dof increment.
/// Steps that do not lower the objective are rejected and the damping raised.
inline RefineTrace refine_pose_traced(const Pose& init, std::span<const Correspondence2D3D> inliers,
                                      const CameraIntrinsics& k, const RansacConfig& cfg)
{
  RefineTrace tr;
  tr.pose = init;
  double cost = robust_objective(init, inliers, k, cfg.huber_delta_px);
  tr.accepted_costs.push_back(cost);
  if (inliers.size() < 4 || !std::isfinite(cost))
    return tr;
  double lambda = 1e-4;
  for (int it = 0; it < cfg.refine_iters; ++it)
  {
    ++tr.iterations;
    if (cost == 0.0)
      break;
    Mat6 h = Mat6::Zero();
    Vec6 g = Vec6::Zero();
    for (const auto& c : inliers)
    {
      const Vec3 pc = tr.pose * c.point_xyz;
      const Vec2 r = *project_pinhole(pc, k) - c.query_px;
      const double e = r.norm();
      const double w = e <= cfg.huber_delta_px ? 1.0 : cfg.huber_delta_px / e;
      const auto j = reprojection_jacobian(tr.pose, c.point_xyz, k);
      h.noalias() += w * j.transpose() * j;
      g.noalias() += w * j.transpose() * r;
    }
    if (g.norm() == 0.0)
      break;
    Mat6 damped = h;
    damped.diagonal() += lambda * h.diagonal().cwiseMax(1e-12);
    const Vec6 step = -damped.ldlt().solve(g);
    if (!step.allFinite())
      break;
    const Pose cand = apply_increment(tr.pose, step);
    const double cand_cost = robust_objective(cand, inliers, k, cfg.huber_delta_px);
    if (cand_cost < cost)
    {
      tr.pose = cand;
      cost = cand_cost;
      tr.accepted_costs.push_back(cost);
      lambda = std::max(lambda * 0.1, 1e-12);
    }
    else
    {
      lambda *= 10.0;
    }
    if (step.norm() < 1e-10)
      break;
  }
  return tr;
}

inline Pose refine_pose(const Pose& init, std::span<const Correspondence2D3D> inliers, const CameraIntrinsics& k,
                        const RansacConfig& cfg)
{
  return refine_pose_traced(init, inliers, k, cfg).pose;
}

//-----------------------------------------------------------------------------
// RANSAC

namespace detail
{
/// Uniform integer in [0, n) from a 64-bit engine, independent of the standard
/// library's distribution implementation.
inline std::size_t draw_index(std::mt19937_64& rng, std::size_t n)
{
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do
    x = rng();
  while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

inline std::vector<bool> inlier_mask(const Pose& pose, std::span<const Correspondence2D3D> corrs,
                                     const CameraIntrinsics& k, double thresh, int& count)
{
  std::vector<bool> mask(corrs.size());
  count = 0;
  for (std::size_t i = 0; i < corrs.size(); ++i)
  {
    mask[i] = reprojection_error(pose, corrs[i].point_xyz, corrs[i].query_px, k) < thresh;
    count += mask[i];
  }
  return mask;
}
} // namespace detail

/// Seeded P3P-RANSAC. Each hypothesis samples four correspondences: P3P on three,
/// the fourth picks among the roots. The best hypothesis (most inliers, earliest
/// iteration on ties) is refined on its inliers; the reported inliers are recounted
/// under the returned pose.
inline RelocalizationResult pnp_ransac(std::span<const Correspondence2D3D> corrs, const CameraIntrinsics& k,
                                       const RansacConfig& cfg)
{
  cfg.validate();
  RelocalizationResult res;
  if (corrs.size() < 4)
  {
    res.reason = "too few correspondences";
    return res;
  }
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = corrs.size();
  int best_count = -1;
  Pose best;
  long needed = cfg.max_iters;
  for (long it = 0; it < std::min<long>(needed, cfg.max_iters); ++it)
  {
    std::array<std::size_t, 4> idx{};
    for (int s = 0; s < 4; ++s)
    {
      bool fresh;
      do
      {
        idx[s] = detail::draw_index(rng, n);
        fresh = std::find(idx.begin(), idx.begin() + s, idx[s]) == idx.begin() + s;
      } while (!fresh);
    }
    const std::array<Correspondence2D3D, 3> sample = {corrs[idx[0]], corrs[idx[1]], corrs[idx[2]]};
    const auto sols = p3p_solve(std::span<const Correspondence2D3D, 3>(sample), k);
    if (sols.empty())
      continue;
    const Pose* pick = &sols.front();
    double pick_err = std::numeric_limits<double>::infinity();
    for (const auto& s : sols)
    {
      const double e = reprojection_error(s, corrs[idx[3]].point_xyz, corrs[idx[3]].query_px, k);
      if (e < pick_err)
      {
        pick_err = e;
        pick = &s;
      }
    }
    int count = 0;
    detail::inlier_mask(*pick, corrs, k, cfg.inlier_thresh_px, count);
    if (count > best_count)
    {
      best_count = count;
      best = *pick;
      const double w = static_cast<double>(count) / static_cast<double>(n);
      const double miss = 1.0 - std::pow(w, 4);
      if (miss <= 0.0)
        needed = it + 1;
      else if (miss < 1.0)
        needed = std::min<long>(cfg.max_iters,
                                static_cast<long>(std::ceil(std::log(1.0 - cfg.confidence) / std::log(miss))));
    }
  }
  if (best_count < cfg.min_inliers)
  {
    res.reason = best_count < 0 ? "no valid hypothesis" : "ransac below min_inliers";
    return res;
  }

  Pose pose = best;
  int count = 0;
  auto mask = detail::inlier_mask(pose, corrs, k, cfg.inlier_thresh_px, count);
  for (int round = 0; round < 3; ++round)
  {
    std::vector<Correspondence2D3D> in;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i])
        in.push_back(corrs[i]);
    const Pose refined = refine_pose(pose, in, k, cfg);
    int refined_count = 0;
    auto refined_mask = detail::inlier_mask(refined, corrs, k, cfg.inlier_thresh_px, refined_count);
    if (refined_count < count)
      break;
    const bool stable = refined_mask == mask;
    pose = refined;
    mask = std::move(refined_mask);
    count = refined_count;
    if (stable)
      break;
  }
  res.pose = pose;
  res.inliers = mask;
  res.inlier_count = count;
  res.inlier_ratio = static_cast<double>(count) / static_cast<double>(n);
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i])
      err += reprojection_error(pose, corrs[i].point_xyz, corrs[i].query_px, k);
  res.mean_reproj_err_px = count > 0 ? err / count : 0.0;
  if (count < cfg.min_inliers)
  {
    res.reason = "ransac below min_inliers";
    return res;
  }
  res.status = RelocStatus::OK;
  return res;
}

} // namespace reloc
