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

#include "reloc/common.hpp"
#include "reloc/geometry.hpp"
#include "reloc/image.hpp"
#include "reloc/io.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace reloc
{

//-----------------------------------------------------------------------------
// Hybrid equiangular cube warp

/// Cube-face coordinates (u, v) in [-1, 1]^2 to warped coordinates.
/// u' = 4/pi atan(u); v' solves t v'^2 - v' + (v - t) = 0 with t = 0.4 v (u^2 - 1).
inline Vec2 hec_forward(double u, double v)
{
  if (!(std::abs(u) <= 1.0 && std::abs(v) <= 1.0))
    throw Error("hec_forward: coordinates outside [-1, 1]");
  const double up = 4.0 / kPi * std::atan(u);
  const double t = 0.4 * v * (u * u - 1.0);
  if (t == 0.0)
    return {up, v};
  // (1 - sqrt(1 - 4t(v - t))) / 2t, rationalized so small t does not cancel.
  const double vp = 2.0 * (v - t) / (1.0 + std::sqrt(1.0 - 4.0 * t * (v - t)));
  return {up, vp};
}

/// Exact inverse of hec_forward.
inline Vec2 hec_inverse(double up, double vp)
{
  if (!(std::abs(up) <= 1.0 && std::abs(vp) <= 1.0))
    throw Error("hec_inverse: coordinates outside [-1, 1]");
  // tan(pi/4) rounds one ulp short; face edges must map back onto themselves.
  const double u = std::abs(up) == 1.0 ? up : std::tan(kPi * up / 4.0);
  const double a = 0.4 * (u * u - 1.0);
  return {u, vp / (1.0 - a * (1.0 - vp * vp))};
}

//-----------------------------------------------------------------------------
// Pinhole

/// Pixel (i, j) has its center at continuous coordinate (i, j).
inline std::optional<Vec2> project_pinhole(const Vec3& p_cam, const CameraIntrinsics& k)
{
  if (!(p_cam.z() > 0.0))
    return std::nullopt;
  return Vec2(k.fx * p_cam.x() / p_cam.z() + k.cx, k.fy * p_cam.y() / p_cam.z() + k.cy);
}

//-----------------------------------------------------------------------------
// Four-face panorama

enum class CubeFace : int { Front = 0, Left = 1, Back = 2, Right = 3 };

inline constexpr std::array<CubeFace, 4> kFaces = {CubeFace::Front, CubeFace::Left, CubeFace::Back, CubeFace::Right};

/// Rotation from the sensor frame into the face camera frame (+z along the face axis).
inline Mat3 face_rotation(CubeFace f)
{
  Mat3 r;
  switch (f)
  {
    case CubeFace::Front: r << 1, 0, 0, 0, 1, 0, 0, 0, 1; break;
    case CubeFace::Left: r << 0, 0, 1, 0, 1, 0, -1, 0, 0; break;
    case CubeFace::Back: r << -1, 0, 0, 0, 1, 0, 0, 0, -1; break;
    case CubeFace::Right: r << 0, 0, -1, 0, 1, 0, 1, 0, 0; break;
  }
  return r;
}

struct ProjectionConfig
{
  int face_size = 480;     ///< S; the panorama is 4S x S
  double splat_gain = 8.0; ///< half-width = round(gain / depth), px*m
  int splat_max = 2;
  bool use_hec = true;     ///< false renders a plain cube map
  double z_near = 0.3;

  void validate() const
  {
    if (face_size <= 0)
      throw Error("projection: face_size must be positive");
    if (splat_max < 0 || splat_max > 3)
      throw Error("projection: splat_max must be in [0, 3]");
    if (!(splat_gain >= 0.0))
      throw Error("projection: splat_gain must be non-negative");
    if (!(z_near > 0.0))
      throw Error("projection: z_near must be positive");
  }
  int pano_width() const { return 4 * face_size; }
  int pano_height() const { return face_size; }
  bool operator==(const ProjectionConfig&) const = default;
};

struct PanoProjection
{
  CubeFace face;
  int px;       ///< column within the face, [0, S)
  int py;       ///< row, [0, S)
  double depth; ///< Euclidean range, m
  int column(int face_size) const { return static_cast<int>(face) * face_size + px; }
};

/// Maps warped (or plain) face coordinates in [-1, 1] to a pixel index.
inline int face_pixel_index(double c, int face_size)
{
  const int i = static_cast<int>(std::floor((c + 1.0) * 0.5 * face_size));
  return std::clamp(i, 0, face_size - 1);
}

/// Face coordinate of a pixel center.
inline double face_pixel_center(int i, int face_size)
{
  return (i + 0.5) * 2.0 / face_size - 1.0;
}

/// Projects a point given in the panorama's sensor frame. Returns nullopt when the
/// ray is vertically dominant (top / ground faces are not rendered) or too close.
inline std::optional<PanoProjection> project_point_to_pano(const Vec3& p, const ProjectionConfig& cfg)
{
  const double depth = p.norm();
  if (!(depth >= cfg.z_near))
    return std::nullopt;
  const std::array<double, 4> axis = {p.z(), -p.x(), -p.z(), p.x()};
  int best = 0;
  for (int f = 1; f < 4; ++f)
    if (axis[f] > axis[best])
      best = f;
  const double zf = axis[best];
  if (!(zf > 0.0) || std::abs(p.y()) > zf)
    return std::nullopt;
  double xf = 0.0;
  switch (static_cast<CubeFace>(best))
  {
    case CubeFace::Front: xf = p.x(); break;
    case CubeFace::Left: xf = p.z(); break;
    case CubeFace::Back: xf = -p.x(); break;
    case CubeFace::Right: xf = -p.z(); break;
  }
  double u = xf / zf;
  double v = p.y() / zf;
  if (cfg.use_hec)
  {
    const Vec2 w = hec_forward(u, v);
    u = w.x();
    v = w.y();
  }
  return PanoProjection{static_cast<CubeFace>(best), face_pixel_index(u, cfg.face_size),
                        face_pixel_index(v, cfg.face_size), depth};
}

/// Splat half-width for a point at the given range.
inline int splat_half_width(double depth, const ProjectionConfig& cfg)
{
  return std::min<int>(cfg.splat_max, static_cast<int>(std::lround(cfg.splat_gain / depth)));
}

//-----------------------------------------------------------------------------

/// Intensity panorama with per-pixel range and winning point id.
struct MapImage
{
  std::int64_t image_id = 0;
  Pose pose;
  GrayImage intensity;
  std::vector<float> depth;          ///< +inf where empty
  std::vector<std::int64_t> point_id; ///< kNoPoint where empty

  int width() const { return intensity.width; }
  int height() const { return intensity.height; }
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * intensity.width + x; }
  std::int64_t id_at(int x, int y) const { return point_id[index(x, y)]; }

  bool operator==(const MapImage&) const = default;
};

inline MapImage empty_map_image(const Pose& pose, const ProjectionConfig& cfg, std::int64_t image_id = 0)
{
  MapImage m;
  m.image_id = image_id;
  m.pose = pose;
  m.intensity = GrayImage(cfg.pano_width(), cfg.pano_height());
  m.depth.assign(m.intensity.pixels.size(), std::numeric_limits<float>::infinity());
  m.point_id.assign(m.intensity.pixels.size(), kNoPoint);
  return m;
}

/// Z-buffered splat rendering of `local` (already cropped, equalized) seen from `pose`.
inline MapImage render_panorama(const PointCloud& local, const Pose& pose, const ProjectionConfig& cfg,
                                std::int64_t image_id = 0)
{
  cfg.validate();
  MapImage m = empty_map_image(pose, cfg, image_id);
  const int s = cfg.face_size;
  const int w = cfg.pano_width();
  std::vector<double> zbuf(m.depth.size(), std::numeric_limits<double>::infinity());
  const Mat3 rt = pose.rotation.transpose();
  for (const auto& pt : local.points)
  {
    if (!pt.intensity_eq)
      throw Error("render_panorama: point " + std::to_string(pt.id) + " has no equalized intensity");
    const Vec3 p = rt * (pt.xyz.cast<double>() - pose.translation);
    const auto proj = project_point_to_pano(p, cfg);
    if (!proj)
      continue;
    const int hw = splat_half_width(proj->depth, cfg);
    const int col0 = static_cast<int>(proj->face) * s;
    const int xa = std::max(0, proj->px - hw), xb = std::min(s - 1, proj->px + hw);
    const int ya = std::max(0, proj->py - hw), yb = std::min(s - 1, proj->py + hw);
    for (int y = ya; y <= yb; ++y)
      for (int x = xa; x <= xb; ++x)
      {
        const std::size_t i = static_cast<std::size_t>(y) * w + col0 + x;
        if (proj->depth < zbuf[i])
        {
          zbuf[i] = proj->depth;
          m.point_id[i] = pt.id;
          m.intensity.pixels[i] = *pt.intensity_eq;
        }
      }
  }
  for (std::size_t i = 0; i < zbuf.size(); ++i)
    m.depth[i] = static_cast<float>(zbuf[i]);
  return m;
}

//-----------------------------------------------------------------------------
// Point intensity normalization

/// Global rank-based histogram equalization of raw intensities onto [0, 255].
/// Ties share their average rank.
inline PointCloud equalize_map_intensity(PointCloud cloud)
{
  const std::size_t n = cloud.size();
  if (n == 0)
    return cloud;
  if (n == 1)
  {
    cloud.points[0].intensity_eq = 0;
    return cloud;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cloud.points[a].intensity_raw < cloud.points[b].intensity_raw;
  });
  const double scale = 255.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n;)
  {
    std::size_t j = i;
    while (j + 1 < n && cloud.points[order[j + 1]].intensity_raw == cloud.points[order[i]].intensity_raw)
      ++j;
    const double rank = 0.5 * static_cast<double>(i + j);
    const auto eq = static_cast<std::uint8_t>(std::lround(rank * scale));
    for (std::size_t k = i; k <= j; ++k)
      cloud.points[order[k]].intensity_eq = eq;
    i = j + 1;
  }
  return cloud;
}

/// Min-max linear scaling of raw intensity onto [0, 255] (no equalization).
inline PointCloud linear_map_intensity(PointCloud cloud)
{
  if (cloud.empty())
    return cloud;
  float lo = cloud.points[0].intensity_raw, hi = lo;
  for (const auto& p : cloud.points)
  {
    lo = std::min(lo, p.intensity_raw);
    hi = std::max(hi, p.intensity_raw);
  }
  const double range = static_cast<double>(hi) - lo;
  for (auto& p : cloud.points)
    p.intensity_eq = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (p.intensity_raw - lo) / range)) : 0;
  return cloud;
}

//-----------------------------------------------------------------------------
// Persistence: img_{id}.pgm, img_{id}.depth (float32), img_{id}.pid (int64, -1 empty)

namespace detail
{
template <typename T>
void write_blob(const std::filesystem::path& path, const std::vector<T>& v)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
  if (!out)
    throw Error("failed writing " + path.string());
}

template <typename T>
std::vector<T> read_blob(const std::filesystem::path& path, std::size_t count)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("missing buffer file: " + path.string());
  std::vector<T> v(count);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * sizeof(T)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T) || in.peek() != std::char_traits<char>::eof())
    throw Error("buffer file has wrong size: " + path.string());
  return v;
}
} // namespace detail

inline std::string map_image_stem(std::int64_t id) { return "img_" + std::to_string(id); }

inline void save_map_image(const MapImage& m, const std::filesystem::path& dir)
{
  const std::string stem = map_image_stem(m.image_id);
  write_pgm(m.intensity, dir / (stem + ".pgm"));
  detail::write_blob(dir / (stem + ".depth"), m.depth);
  detail::write_blob(dir / (stem + ".pid"), m.point_id);
}

inline MapImage load_map_image(const std::filesystem::path& dir, std::int64_t id, const Pose& pose)
{
  const std::string stem = map_image_stem(id);
  const auto pgm = dir / (stem + ".pgm");
  if (!std::filesystem::exists(pgm))
    throw Error("missing buffer file: " + pgm.string());
  MapImage m;
  m.image_id = id;
  m.pose = pose;
  m.intensity = read_pnm(pgm);
  m.depth = detail::read_blob<float>(dir / (stem + ".depth"), m.intensity.pixels.size());
  m.point_id = detail::read_blob<std::int64_t>(dir / (stem + ".pid"), m.intensity.pixels.size());
  return m;
}

} // namespace reloc
