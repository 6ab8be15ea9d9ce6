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

#include "reloc/geometry.hpp"
#include "reloc/image.hpp"
#include "reloc/io.hpp"
#include "reloc/projection.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace reloc
{

enum class Texture { Checker, Blobs, Stripes };

inline Texture parse_texture(const std::string& s)
{
  if (s == "checker") return Texture::Checker;
  if (s == "blobs") return Texture::Blobs;
  if (s == "stripes") return Texture::Stripes;
  throw Error("unknown texture '" + s + "' (available: checker, blobs, stripes)");
}

inline std::string texture_name(Texture t)
{
  switch (t)
  {
    case Texture::Checker: return "checker";
    case Texture::Blobs: return "blobs";
    case Texture::Stripes: return "stripes";
  }
  return "?";
}

/// Corridor-like scene: ground plane, two long side walls, two end walls, and
/// (wall_count - 4) short fins standing out from the side walls.
struct SceneConfig
{
  std::uint64_t seed = 0;
  Vec3 extent = Vec3(60.0, 8.0, 4.0); ///< length (x), width (y), height (z), m
  int wall_count = 10;
  double points_per_m2 = 900.0;
  Texture texture = Texture::Blobs;
  double texture_scale = 0.6;         ///< m
  double intensity_noise_sigma = 0.0; ///< raw units; textures span [0, 100]
  bool ground = true;

  void validate() const
  {
    if (wall_count < 1)
      throw Error("scene: wall_count must be >= 1");
    if (!(points_per_m2 > 0.0))
      throw Error("scene: density must be positive");
    if (!(extent.minCoeff() > 0.0))
      throw Error("scene: extent must be positive");
    if (!(texture_scale > 0.0) || !(intensity_noise_sigma >= 0.0))
      throw Error("scene: invalid texture parameters");
  }
};

namespace detail
{
inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline double hash_unit(std::int64_t i, std::int64_t j, std::uint64_t salt)
{
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(salt) ^ static_cast<std::uint64_t>(i)) ^
                                     static_cast<std::uint64_t>(j));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double value_noise(double s, double t, std::uint64_t salt)
{
  const double fs = std::floor(s), ft = std::floor(t);
  const auto is = static_cast<std::int64_t>(fs), it = static_cast<std::int64_t>(ft);
  auto smooth = [](double a) { return a * a * (3.0 - 2.0 * a); };
  const double a = smooth(s - fs), b = smooth(t - ft);
  const double v00 = hash_unit(is, it, salt), v10 = hash_unit(is + 1, it, salt);
  const double v01 = hash_unit(is, it + 1, salt), v11 = hash_unit(is + 1, it + 1, salt);
  return (1 - b) * ((1 - a) * v00 + a * v10) + b * ((1 - a) * v01 + a * v11);
}

/// Deterministic uniform doubles and normals from a 64-bit engine.
class Sampler
{
public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double normal()
  {
    const double u1 = std::max(uniform(), 1e-300), u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }
  std::mt19937_64& engine() { return rng_; }

private:
  std::mt19937_64 rng_;
};
} // namespace detail

/// Texture value in [0, 1] at surface coordinates (s, t) of surface `surface`.
inline double texture_value(const SceneConfig& cfg, double s, double t, int surface)
{
  const double u = s / cfg.texture_scale, v = t / cfg.texture_scale;
  switch (cfg.texture)
  {
    case Texture::Checker:
      return ((static_cast<std::int64_t>(std::floor(u)) + static_cast<std::int64_t>(std::floor(v))) & 1) ? 0.8 : 0.2;
    case Texture::Stripes:
      return (static_cast<std::int64_t>(std::floor(u)) & 1) ? 0.8 : 0.2;
    case Texture::Blobs:
    {
      const std::uint64_t salt = cfg.seed * 1315423911ULL + static_cast<std::uint64_t>(surface) * 2654435761ULL;
      const double n = 0.55 * detail::value_noise(u, v, salt) + 0.3 * detail::value_noise(2.1 * u, 2.1 * v, salt + 1) +
                       0.15 * detail::value_noise(4.3 * u, 4.3 * v, salt + 2);
      // Quantized into flat regions with sharp, irregular borders.
      if (n < 0.38) return 0.1;
      if (n < 0.5) return 0.4;
      if (n < 0.62) return 0.65;
      return 0.9;
    }
  }
  return 0.0;
}

namespace detail
{
/// Stratified jittered samples on a planar rectangle origin + s * du + t * dv,
/// s in [0, len_u], t in [0, len_v].
inline void sample_rect(PointCloud& cloud, const SceneConfig& cfg, Sampler& rng, int surface, const Vec3& origin,
                        const Vec3& du, const Vec3& dv, double len_u, double len_v)
{
  const double root = std::sqrt(cfg.points_per_m2);
  const auto nu = static_cast<std::int64_t>(std::lround(len_u * root));
  const auto nv = static_cast<std::int64_t>(std::lround(len_v * root));
  for (std::int64_t j = 0; j < nv; ++j)
    for (std::int64_t i = 0; i < nu; ++i)
    {
      const double s = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(nu) * len_u;
      const double t = (static_cast<double>(j) + rng.uniform()) / static_cast<double>(nv) * len_v;
      MapPoint p;
      p.id = static_cast<std::int64_t>(cloud.points.size());
      p.xyz = (origin + s * du + t * dv).cast<float>();
      const double raw = 100.0 * texture_value(cfg, s, t, surface) + cfg.intensity_noise_sigma * rng.normal();
      p.intensity_raw = static_cast<float>(std::max(0.0, raw));
      cloud.points.push_back(p);
    }
}
} // namespace detail

/// Samples the scene's planar patches at the configured density.
inline PointCloud generate_scene(const SceneConfig& cfg)
{
  cfg.validate();
  detail::Sampler rng(cfg.seed);
  PointCloud cloud;
  const double lx = cfg.extent.x(), ly = cfg.extent.y(), h = cfg.extent.z();
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  int surface = 0;
  if (cfg.ground)
    detail::sample_rect(cloud, cfg, rng, surface++, Vec3::Zero(), ex, ey, lx, ly);
  for (int w = 0; w < cfg.wall_count; ++w, ++surface)
  {
    switch (w)
    {
      case 0: detail::sample_rect(cloud, cfg, rng, surface, Vec3::Zero(), ex, ez, lx, h); break;
      case 1: detail::sample_rect(cloud, cfg, rng, surface, Vec3(0, ly, 0), ex, ez, lx, h); break;
      case 2: detail::sample_rect(cloud, cfg, rng, surface, Vec3::Zero(), ey, ez, ly, h); break;
      case 3: detail::sample_rect(cloud, cfg, rng, surface, Vec3(lx, 0, 0), ey, ez, ly, h); break;
      default:
      {
        // Fins alternate sides along the corridor.
        const int fin = w - 4;
        const int fins = cfg.wall_count - 4;
        const double x = lx * (fin + 0.5) / fins + (rng.uniform() - 0.5) * 2.0;
        const double len = std::min(0.25 * ly, 2.0);
        const double y0 = (fin % 2 == 0) ? 0.0 : ly - len;
        detail::sample_rect(cloud, cfg, rng, surface, Vec3(x, y0, 0), ey, ez, len, 0.75 * h);
        break;
      }
    }
  }
  return cloud;
}

enum class PathShape { Straight, Loop };

inline PathShape parse_path_shape(const std::string& s)
{
  if (s == "straight") return PathShape::Straight;
  if (s == "loop") return PathShape::Loop;
  throw Error("unknown path shape '" + s + "' (available: straight, loop)");
}

/// Forward-facing poses at fixed spacing, sensor height 1.5 m. Straight paths run
/// along the corridor axis; loops are circles whose chord length equals `spacing`.
inline Trajectory generate_trajectory(const SceneConfig& scene, int n_poses, double spacing,
                                      PathShape shape = PathShape::Straight, double height = 1.5)
{
  if (n_poses < 1 || !(spacing > 0.0))
    throw Error("trajectory: need n_poses >= 1 and positive spacing");
  const double lx = scene.extent.x(), ly = scene.extent.y();
  Trajectory traj;
  if (shape == PathShape::Straight)
  {
    const double length = (n_poses - 1) * spacing;
    if (length > lx)
      throw Error("trajectory: path does not fit inside the scene");
    const double x0 = 0.5 * (lx - length);
    for (int i = 0; i < n_poses; ++i)
      traj.push_back({i, Pose(look_along(Vec3::UnitX()), Vec3(x0 + i * spacing, 0.5 * ly, height))});
    return traj;
  }
  const double step = 2.0 * kPi / n_poses;
  const double radius = n_poses > 1 ? spacing / (2.0 * std::sin(0.5 * step)) : 0.0;
  if (2.0 * radius > std::min(lx, ly))
    throw Error("trajectory: loop does not fit inside the scene");
  const Vec3 center(0.5 * lx, 0.5 * ly, height);
  for (int i = 0; i < n_poses; ++i)
  {
    const double a = i * step;
    const Vec3 pos = center + radius * Vec3(std::cos(a), std::sin(a), 0.0);
    traj.push_back({i, Pose(look_along(Vec3(-std::sin(a), std::cos(a), 0.0)), pos)});
  }
  return traj;
}

//-----------------------------------------------------------------------------
// Query rendering

struct QueryRenderConfig
{
  double trans_sigma_m = 0.2;
  double trans_max_m = 0.5;
  double rot_sigma_deg = 2.0;
  double rot_max_deg = 5.0;
  double gain = 1.3;
  double bias = 10.0;
  double splat_gain = 12.0; ///< px*m
  int splat_max = 3;
};

/// Random perturbation (camera frame rotation, world translation) with Gaussian
/// components, clamped in norm.
inline Pose jitter_pose(const Pose& pose, const QueryRenderConfig& cfg, std::uint64_t seed)
{
  detail::Sampler rng(seed);
  Vec3 dt(rng.normal(), rng.normal(), rng.normal());
  Vec3 dw(rng.normal(), rng.normal(), rng.normal());
  dt *= cfg.trans_sigma_m;
  dw *= deg2rad(cfg.rot_sigma_deg);
  if (dt.norm() > cfg.trans_max_m)
    dt *= cfg.trans_max_m / dt.norm();
  if (dw.norm() > deg2rad(cfg.rot_max_deg))
    dw *= deg2rad(cfg.rot_max_deg) / dw.norm();
  return {pose.rotation * so3_exp(dw), pose.translation + dt};
}

/// Pinhole z-buffered splat render of the equalized intensity seen from `cam_to_world`,
/// followed by a gain / bias change.
inline GrayImage render_pinhole(const PointCloud& eq_cloud, const Pose& cam_to_world, const CameraIntrinsics& k,
                                const QueryRenderConfig& cfg)
{
  k.validate();
  GrayImage img(k.width, k.height);
  std::vector<double> zbuf(img.pixels.size(), std::numeric_limits<double>::infinity());
  const Pose w2c = cam_to_world.inverse();
  bool any = false;
  for (const auto& pt : eq_cloud.points)
  {
    if (!pt.intensity_eq)
      throw Error("render_query: cloud lacks equalized intensity");
    const Vec3 pc = w2c * pt.xyz.cast<double>();
    if (pc.z() < 0.1)
      continue;
    const auto px = project_pinhole(pc, k);
    const long cx = std::lround(px->x()), cy = std::lround(px->y());
    const int hw = std::min<int>(cfg.splat_max, static_cast<int>(std::lround(cfg.splat_gain / pc.z())));
    if (cx + hw < 0 || cy + hw < 0 || cx - hw >= k.width || cy - hw >= k.height)
      continue;
    const std::uint8_t value = static_cast<std::uint8_t>(
        std::clamp<long>(std::lround(cfg.gain * *pt.intensity_eq + cfg.bias), 0, 255));
    for (long y = std::max<long>(0, cy - hw); y <= std::min<long>(k.height - 1, cy + hw); ++y)
      for (long x = std::max<long>(0, cx - hw); x <= std::min<long>(k.width - 1, cx + hw); ++x)
      {
        const std::size_t i = static_cast<std::size_t>(y) * k.width + static_cast<std::size_t>(x);
        if (pc.z() < zbuf[i])
        {
          zbuf[i] = pc.z();
          img.pixels[i] = value;
          any = true;
        }
      }
  }
  if (!any)
    throw Error("empty render");
  return img;
}

/// Renders a query near `pose`; returns the image and the exact (jittered) pose used.
inline std::pair<GrayImage, Pose> render_query(const PointCloud& eq_cloud, const Pose& pose, const CameraIntrinsics& k,
                                               const QueryRenderConfig& cfg, std::uint64_t seed)
{
  const Pose gt = jitter_pose(pose, cfg, seed);
  return {render_pinhole(eq_cloud, gt, k, cfg), gt};
}

//-----------------------------------------------------------------------------
// Synthetic dataset

struct DatasetConfig
{
  SceneConfig scene;
  int n_poses = 50;
  double spacing_m = 1.0;
  PathShape shape = PathShape::Straight;
  int n_queries = 50;
  QueryRenderConfig query;
  CameraIntrinsics intrinsics; ///< 960x480, f = 480, centered principal point
};

struct SyntheticDataset
{
  PointCloud cloud;       ///< raw intensities
  Trajectory trajectory;  ///< mapping trajectory
  std::vector<GrayImage> queries;
  Trajectory gt;          ///< one pose per query, camera-to-map
  CameraIntrinsics intrinsics;
};

/// Queries are spread evenly over the mapping poses and jittered.
inline SyntheticDataset generate_dataset(const DatasetConfig& cfg)
{
  SyntheticDataset ds;
  ds.cloud = generate_scene(cfg.scene);
  ds.trajectory = generate_trajectory(cfg.scene, cfg.n_poses, cfg.spacing_m, cfg.shape);
  ds.intrinsics = cfg.intrinsics;
  const PointCloud eq = equalize_map_intensity(ds.cloud);
  ds.queries.resize(static_cast<std::size_t>(cfg.n_queries));
  ds.gt.resize(static_cast<std::size_t>(cfg.n_queries));
  parallel_for(static_cast<std::size_t>(cfg.n_queries), [&](std::size_t q) {
    const std::size_t src = q * ds.trajectory.size() / static_cast<std::size_t>(cfg.n_queries);
    const std::uint64_t seed = detail::splitmix64(cfg.scene.seed ^ (0x51ed270b27a1f0e3ULL + q));
    auto [img, gt] = render_query(eq, ds.trajectory[src].pose, cfg.intrinsics, cfg.query, seed);
    ds.queries[q] = std::move(img);
    // Round-trip through the text format so in-memory and on-disk poses agree.
    std::istringstream line(std::to_string(q) + " " + format_pose(gt));
    ds.gt[q] = parse_trajectory(line).front();
  });
  // Same for the mapping trajectory.
  for (auto& e : ds.trajectory)
  {
    std::istringstream line(std::to_string(e.index) + " " + format_pose(e.pose));
    e = parse_trajectory(line).front();
  }
  return ds;
}

inline std::string query_file_name(std::int64_t index)
{
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << index << ".pgm";
  return os.str();
}

/// Writes map.ply, traj.txt, queries/*.pgm, gt.txt and intrinsics.cfg.
inline void save_dataset(const SyntheticDataset& ds, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir / "queries");
  save_point_cloud(ds.cloud, dir / "map.ply");
  save_trajectory(ds.trajectory, dir / "traj.txt");
  save_trajectory(ds.gt, dir / "gt.txt");
  save_intrinsics(ds.intrinsics, dir / "intrinsics.cfg");
  for (std::size_t q = 0; q < ds.queries.size(); ++q)
    write_pgm(ds.queries[q], dir / "queries" / query_file_name(ds.gt[q].index));
}

inline SyntheticDataset load_dataset(const std::filesystem::path& dir)
{
  SyntheticDataset ds;
  ds.cloud = load_point_cloud(dir / "map.ply");
  ds.trajectory = load_trajectory(dir / "traj.txt");
  ds.gt = load_trajectory(dir / "gt.txt");
  ds.intrinsics = load_intrinsics(dir / "intrinsics.cfg");
  for (const auto& e : ds.gt)
    ds.queries.push_back(read_image(dir / "queries" / query_file_name(e.index)));
  return ds;
}

} // namespace reloc
