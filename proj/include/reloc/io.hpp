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

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace reloc
{

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

//-----------------------------------------------------------------------------
// Domain types

struct MapPoint
{
  std::int64_t id = 0;
  Eigen::Vector3f xyz = Eigen::Vector3f::Zero();
  float intensity_raw = 0.f;
  std::optional<std::uint8_t> intensity_eq;

  bool operator==(const MapPoint&) const = default;
};

/// Global point cloud. Ids are dense in [0, N) for a loaded map; cropping keeps
/// the global ids, so a cropped cloud is a sparse subset of them.
struct PointCloud
{
  std::vector<MapPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool operator==(const PointCloud&) const = default;
};

struct TrajectoryEntry
{
  std::int64_t index = 0;
  Pose pose;
  /// Quaternion (x, y, z, w) as read from text. Saving writes it back verbatim
  /// while it still reproduces `pose.rotation` exactly, which makes save/load a
  /// fixed point; re-deriving it from the matrix would drift in the last bits.
  std::optional<Eigen::Vector4d> source_quat;

  TrajectoryEntry() = default;
  TrajectoryEntry(std::int64_t i, const Pose& p) : index(i), pose(p) {}
  bool operator==(const TrajectoryEntry& o) const { return index == o.index && pose == o.pose; }
};

using Trajectory = std::vector<TrajectoryEntry>;

struct CameraIntrinsics
{
  double fx = 480.0;
  double fy = 480.0;
  double cx = 480.0;
  double cy = 240.0;
  int width = 960;
  int height = 480;

  void validate() const
  {
    if (!(fx > 0.0 && fy > 0.0))
      throw Error("intrinsics: focal lengths must be positive");
    if (width <= 0 || height <= 0)
      throw Error("intrinsics: image size must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height))
      throw Error("intrinsics: principal point outside image");
  }
  bool operator==(const CameraIntrinsics&) const = default;
};

//-----------------------------------------------------------------------------
// PLY

namespace detail
{
enum class PlyScalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

inline PlyScalar ply_scalar(const std::string& t)
{
  if (t == "char" || t == "int8") return PlyScalar::Int8;
  if (t == "uchar" || t == "uint8") return PlyScalar::UInt8;
  if (t == "short" || t == "int16") return PlyScalar::Int16;
  if (t == "ushort" || t == "uint16") return PlyScalar::UInt16;
  if (t == "int" || t == "int32") return PlyScalar::Int32;
  if (t == "uint" || t == "uint32") return PlyScalar::UInt32;
  if (t == "float" || t == "float32") return PlyScalar::Float32;
  if (t == "double" || t == "float64") return PlyScalar::Float64;
  throw Error("PLY: unknown property type '" + t + "'");
}

inline std::size_t ply_size(PlyScalar s)
{
  switch (s)
  {
    case PlyScalar::Int8: case PlyScalar::UInt8: return 1;
    case PlyScalar::Int16: case PlyScalar::UInt16: return 2;
    case PlyScalar::Int32: case PlyScalar::UInt32: case PlyScalar::Float32: return 4;
    case PlyScalar::Float64: return 8;
  }
  return 0;
}

template <typename T>
T read_le(const char* p)
{
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double ply_decode(PlyScalar s, const char* p)
{
  switch (s)
  {
    case PlyScalar::Int8: return read_le<std::int8_t>(p);
    case PlyScalar::UInt8: return read_le<std::uint8_t>(p);
    case PlyScalar::Int16: return read_le<std::int16_t>(p);
    case PlyScalar::UInt16: return read_le<std::uint16_t>(p);
    case PlyScalar::Int32: return read_le<std::int32_t>(p);
    case PlyScalar::UInt32: return read_le<std::uint32_t>(p);
    case PlyScalar::Float32: return read_le<float>(p);
    case PlyScalar::Float64: return read_le<double>(p);
  }
  return 0.0;
}

struct PlyProperty
{
  std::string name;
  PlyScalar type;
  bool is_list = false;
  PlyScalar count_type = PlyScalar::UInt8;
};

struct PlyElement
{
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};
} // namespace detail

/// Loads an ascii or binary little-endian PLY with vertex properties x, y, z and
/// intensity. An optional uchar `intensity_eq` property is restored when present.
inline PointCloud load_point_cloud(const std::filesystem::path& path)
{
  using namespace detail;
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("point cloud not found: " + path.string());

  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0)
    throw Error("PLY: malformed header (missing magic) in " + path.string());

  bool ascii = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;)
  {
    if (!std::getline(in, line))
      throw Error("PLY: malformed header (no end_header) in " + path.string());
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "end_header")
      break;
    if (key == "comment" || key == "obj_info" || key.empty())
      continue;
    if (key == "format")
    {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        ascii = true;
      else if (fmt != "binary_little_endian")
        throw Error("PLY: unsupported format '" + fmt + "'");
      have_format = true;
    }
    else if (key == "element")
    {
      PlyElement e;
      if (!(ls >> e.name >> e.count))
        throw Error("PLY: malformed element line: " + line);
      elements.push_back(e);
    }
    else if (key == "property")
    {
      if (elements.empty())
        throw Error("PLY: property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list")
      {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        p.is_list = true;
        p.count_type = ply_scalar(ct);
        p.type = ply_scalar(it);
      }
      else
      {
        p.type = ply_scalar(t);
        ls >> p.name;
      }
      if (p.name.empty())
        throw Error("PLY: malformed property line: " + line);
      elements.back().props.push_back(p);
    }
    else
    {
      throw Error("PLY: malformed header line: " + line);
    }
  }
  if (!have_format)
    throw Error("PLY: malformed header (missing format)");

  PointCloud cloud;
  for (const auto& e : elements)
  {
    const bool is_vertex = e.name == "vertex";
    int ix = -1, iy = -1, iz = -1, ii = -1, ie = -1;
    if (is_vertex)
    {
      for (std::size_t k = 0; k < e.props.size(); ++k)
      {
        const auto& n = e.props[k].name;
        if (e.props[k].is_list)
          continue;
        if (n == "x") ix = static_cast<int>(k);
        else if (n == "y") iy = static_cast<int>(k);
        else if (n == "z") iz = static_cast<int>(k);
        else if (n == "intensity") ii = static_cast<int>(k);
        else if (n == "intensity_eq") ie = static_cast<int>(k);
      }
      if (ix < 0 || iy < 0 || iz < 0)
        throw Error("PLY: vertex element lacks x/y/z");
      if (ii < 0)
        throw Error("PLY: missing intensity property in " + path.string());
      cloud.points.reserve(e.count);
    }

    std::vector<double> values(e.props.size());
    for (std::size_t r = 0; r < e.count; ++r)
    {
      if (ascii)
      {
        if (!std::getline(in, line))
          throw Error("PLY: truncated ascii body");
        std::istringstream ls(line);
        for (std::size_t k = 0; k < e.props.size(); ++k)
        {
          if (e.props[k].is_list)
          {
            double n = 0, skip = 0;
            ls >> n;
            for (int j = 0; j < static_cast<int>(n); ++j)
              ls >> skip;
            continue;
          }
          if (!(ls >> values[k]))
            throw Error("PLY: malformed ascii vertex line: " + line);
        }
      }
      else
      {
        for (std::size_t k = 0; k < e.props.size(); ++k)
        {
          const auto& p = e.props[k];
          char buf[8];
          if (p.is_list)
          {
            in.read(buf, static_cast<std::streamsize>(ply_size(p.count_type)));
            const auto n = static_cast<std::size_t>(ply_decode(p.count_type, buf));
            in.ignore(static_cast<std::streamsize>(n * ply_size(p.type)));
          }
          else
          {
            in.read(buf, static_cast<std::streamsize>(ply_size(p.type)));
            values[k] = ply_decode(p.type, buf);
          }
          if (!in)
            throw Error("PLY: truncated binary body");
        }
      }
      if (is_vertex)
      {
        MapPoint pt;
        pt.id = static_cast<std::int64_t>(cloud.points.size());
        pt.xyz = Eigen::Vector3f(static_cast<float>(values[ix]), static_cast<float>(values[iy]),
                                 static_cast<float>(values[iz]));
        pt.intensity_raw = static_cast<float>(values[ii]);
        if (!pt.xyz.allFinite() || !std::isfinite(pt.intensity_raw))
          throw Error("PLY: non-finite vertex " + std::to_string(pt.id));
        if (pt.intensity_raw < 0.f)
          throw Error("PLY: negative intensity at vertex " + std::to_string(pt.id));
        if (ie >= 0)
          pt.intensity_eq = static_cast<std::uint8_t>(values[ie]);
        cloud.points.push_back(pt);
      }
    }
    if (is_vertex)
      break;
  }
  return cloud;
}

/// Writes x, y, z, intensity as float32 (plus uchar intensity_eq when every point
/// has one). Ids are implied by vertex order, so only dense clouds are accepted.
inline void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path, bool ascii = false)
{
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.points[i].id != static_cast<std::int64_t>(i))
      throw Error("save_point_cloud: ids must be dense and ordered");
  const bool with_eq = !cloud.empty() && std::all_of(cloud.points.begin(), cloud.points.end(),
                                                      [](const MapPoint& p) { return p.intensity_eq.has_value(); });
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write point cloud: " + path.string());
  out << "ply\nformat " << (ascii ? "ascii" : "binary_little_endian") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property float x\nproperty float y\nproperty float z\nproperty float intensity\n";
  if (with_eq)
    out << "property uchar intensity_eq\n";
  out << "end_header\n";
  if (ascii)
  {
    out << std::setprecision(9);
    for (const auto& p : cloud.points)
    {
      out << p.xyz.x() << ' ' << p.xyz.y() << ' ' << p.xyz.z() << ' ' << p.intensity_raw;
      if (with_eq)
        out << ' ' << static_cast<int>(*p.intensity_eq);
      out << '\n';
    }
  }
  else
  {
    std::vector<char> rec(16 + (with_eq ? 1 : 0));
    for (const auto& p : cloud.points)
    {
      std::memcpy(rec.data(), p.xyz.data(), 12);
      std::memcpy(rec.data() + 12, &p.intensity_raw, 4);
      if (with_eq)
        rec[16] = static_cast<char>(*p.intensity_eq);
      out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    }
  }
  if (!out)
    throw Error("failed writing point cloud: " + path.string());
}

//-----------------------------------------------------------------------------
// Trajectory text: `index tx ty tz qx qy qz qw` per line, `#` comments.

inline TrajectoryEntry parse_pose_line(const std::string& line, std::size_t line_no)
{
  std::istringstream ls(line);
  std::vector<double> v;
  std::string tok;
  while (ls >> tok)
  {
    try
    {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size())
        throw std::invalid_argument(tok);
    }
    catch (const std::exception&)
    {
      throw Error("trajectory line " + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
  }
  if (v.size() != 8)
    throw Error("trajectory line " + std::to_string(line_no) + ": expected 8 fields, got " + std::to_string(v.size()));
  const double qn = std::sqrt(v[4] * v[4] + v[5] * v[5] + v[6] * v[6] + v[7] * v[7]);
  if (std::abs(qn - 1.0) > 1e-3)
    throw Error("trajectory line " + std::to_string(line_no) + ": quaternion norm " + std::to_string(qn) + " is not unit");
  if (v[0] != std::floor(v[0]))
    throw Error("trajectory line " + std::to_string(line_no) + ": non-integer index");
  TrajectoryEntry e;
  e.index = static_cast<std::int64_t>(v[0]);
  e.pose = Pose::from_quaternion(v[4], v[5], v[6], v[7], Vec3(v[1], v[2], v[3]));
  e.source_quat = Eigen::Vector4d(v[4], v[5], v[6], v[7]);
  return e;
}

inline Trajectory parse_trajectory(std::istream& in)
{
  Trajectory traj;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    auto e = parse_pose_line(line, line_no);
    if (!traj.empty() && e.index <= traj.back().index)
      throw Error("trajectory line " + std::to_string(line_no) + ": indices must be strictly increasing");
    traj.push_back(std::move(e));
  }
  return traj;
}

inline Trajectory load_trajectory(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw Error("trajectory not found: " + path.string());
  return parse_trajectory(in);
}

inline std::string format_pose(const Pose& pose, const std::optional<Eigen::Vector4d>& source_quat = std::nullopt)
{
  Eigen::Vector4d q;
  if (source_quat && Pose::from_quaternion((*source_quat)[0], (*source_quat)[1], (*source_quat)[2],
                                           (*source_quat)[3], pose.translation) == pose)
    q = *source_quat;
  else
    q = pose.quaternion().coeffs(); // Eigen stores x, y, z, w
  std::ostringstream os;
  os << std::setprecision(17) << pose.translation.x() << ' ' << pose.translation.y() << ' '
     << pose.translation.z() << ' ' << q[0] << ' ' << q[1] << ' ' << q[2] << ' ' << q[3];
  return os.str();
}

inline std::string format_pose(const TrajectoryEntry& e) { return format_pose(e.pose, e.source_quat); }

inline void save_trajectory(const Trajectory& traj, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write trajectory: " + path.string());
  out << "# index tx ty tz qx qy qz qw\n";
  for (const auto& e : traj)
    out << e.index << ' ' << format_pose(e) << '\n';
}

//-----------------------------------------------------------------------------
// Intrinsics: key = value config (fx, fy, cx, cy, width, height).

inline CameraIntrinsics load_intrinsics(const std::filesystem::path& path)
{
  if (!std::filesystem::exists(path))
    throw Error("intrinsics not found: " + path.string());
  boost::property_tree::ptree tree;
  try
  {
    boost::property_tree::read_ini(path.string(), tree);
  }
  catch (const std::exception& e)
  {
    throw Error(std::string("intrinsics: ") + e.what());
  }
  CameraIntrinsics k;
  try
  {
    k.fx = tree.get<double>("fx");
    k.fy = tree.get<double>("fy");
    k.cx = tree.get<double>("cx");
    k.cy = tree.get<double>("cy");
    k.width = tree.get<int>("width");
    k.height = tree.get<int>("height");
  }
  catch (const std::exception& e)
  {
    throw Error(std::string("intrinsics: ") + e.what());
  }
  for (const auto& kv : tree)
  {
    static const char* known[] = {"fx", "fy", "cx", "cy", "width", "height"};
    if (std::find_if(std::begin(known), std::end(known), [&](const char* n) { return kv.first == n; }) == std::end(known))
      throw Error("intrinsics: unknown key '" + kv.first + "'");
  }
  k.validate();
  return k;
}

inline void save_intrinsics(const CameraIntrinsics& k, const std::filesystem::path& path)
{
  std::ofstream out(path);
  if (!out)
    throw Error("cannot write intrinsics: " + path.string());
  out << std::setprecision(17) << "fx = " << k.fx << "\nfy = " << k.fy << "\ncx = " << k.cx << "\ncy = " << k.cy
      << "\nwidth = " << k.width << "\nheight = " << k.height << "\n";
}

//-----------------------------------------------------------------------------

/// Greedy arc-length sampling: keeps the first pose and every later pose at least
/// `interval_m` away from the last kept one.
inline std::vector<Pose> sample_trajectory(const Trajectory& traj, double interval_m)
{
  if (!(interval_m > 0.0))
    throw Error("sample_trajectory: interval must be positive");
  std::vector<Pose> kept;
  for (const auto& e : traj)
    if (kept.empty() || (e.pose.translation - kept.back().translation).norm() >= interval_m)
      kept.push_back(e.pose);
  return kept;
}

/// Points within `max_dist_m` (inclusive) of the pose origin; ids are preserved.
inline PointCloud crop_local_map(const PointCloud& cloud, const Pose& pose, double max_dist_m)
{
  if (!(max_dist_m > 0.0))
    throw Error("crop_local_map: max distance must be positive");
  PointCloud out;
  const double r2 = max_dist_m * max_dist_m;
  for (const auto& p : cloud.points)
    if ((p.xyz.cast<double>() - pose.translation).squaredNorm() <= r2)
      out.points.push_back(p);
  return out;
}

} // namespace reloc
