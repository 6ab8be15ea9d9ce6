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
#include "reloc/io.hpp"
#include "reloc/pose.hpp"
#include "reloc/retrieval.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace reloc
{

struct PoseError
{
  double trans_err = 0.0; ///< m
  double rot_err = 0.0;   ///< deg, in [0, 180]
};

/// Translation distance and relative rotation angle between two poses of the same
/// convention.
inline PoseError pose_error(const Pose& pred, const Pose& gt)
{
  return {(pred.translation - gt.translation).norm(),
          std::clamp(rad2deg(rotation_angle(pred.rotation * gt.rotation.transpose())), 0.0, 180.0)};
}

/// Retrieval recall: query q counts for K when one of its first K candidates has a
/// projecting pose within `dist_thresh_m` of the query's ground-truth position.
inline std::map<int, double> recall_at_k(const std::vector<std::vector<Candidate>>& retrievals,
                                         const std::vector<Pose>& gt, const Database& db,
                                         const std::vector<int>& k_list, double dist_thresh_m = 5.0)
{
  if (retrievals.empty())
    throw Error("recall_at_k: empty query set");
  if (retrievals.size() != gt.size())
    throw Error("recall_at_k: query / ground-truth count mismatch");
  std::map<int, double> out;
  for (const int k : k_list)
  {
    int hits = 0;
    for (std::size_t q = 0; q < retrievals.size(); ++q)
    {
      const auto& list = retrievals[q];
      const std::size_t lim = std::min<std::size_t>(list.size(), static_cast<std::size_t>(std::max(k, 0)));
      for (std::size_t i = 0; i < lim; ++i)
        if ((image_by_id(db, list[i].image_id).pose.translation - gt[q].translation).norm() <= dist_thresh_m)
        {
          ++hits;
          break;
        }
    }
    out[k] = static_cast<double>(hits) / static_cast<double>(retrievals.size());
  }
  return out;
}

/// Paired translation (m) / rotation (deg) gate.
using RRThreshold = std::pair<double, double>;

inline const std::vector<RRThreshold>& default_rr_thresholds()
{
  static const std::vector<RRThreshold> t = {{0.5, 1.0}, {1.0, 3.0}, {3.0, 5.0}};
  return t;
}

struct ErrorStats
{
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mse = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  double max_err = std::numeric_limits<double>::quiet_NaN();
  int count = 0;
};

struct RelocRecall
{
  std::vector<std::pair<RRThreshold, double>> rr;
  ErrorStats stats; ///< translation errors of queries inside the loosest gate
};

/// Relocalization recall per threshold pair; a missing prediction counts as a miss.
inline RelocRecall reloc_recall(const std::vector<std::optional<PoseError>>& errors,
                                const std::vector<RRThreshold>& thresholds = default_rr_thresholds())
{
  RelocRecall out;
  const double n = static_cast<double>(errors.size());
  RRThreshold loosest{0.0, 0.0};
  for (const auto& t : thresholds)
  {
    int pass = 0;
    for (const auto& e : errors)
      pass += e && e->trans_err <= t.first && e->rot_err <= t.second;
    out.rr.emplace_back(t, errors.empty() ? 0.0 : pass / n);
    if (t.first >= loosest.first && t.second >= loosest.second)
      loosest = t;
  }
  double sum = 0.0, sum2 = 0.0, mx = 0.0;
  int count = 0;
  for (const auto& e : errors)
    if (e && e->trans_err <= loosest.first && e->rot_err <= loosest.second)
    {
      sum += e->trans_err;
      sum2 += e->trans_err * e->trans_err;
      mx = std::max(mx, e->trans_err);
      ++count;
    }
  out.stats.count = count;
  if (count > 0)
  {
    out.stats.mse = sum2 / count;
    out.stats.rmse = std::sqrt(out.stats.mse);
    out.stats.mae = sum / count;
    out.stats.max_err = mx;
  }
  return out;
}

struct EvalReport
{
  std::map<int, double> recall_at_k;
  RelocRecall reloc;
  int queries = 0;
  int failed = 0;
};

inline std::string format_rr_label(const RRThreshold& t)
{
  std::ostringstream os;
  os << "RR(" << t.first << "m/" << t.second << "deg)";
  return os.str();
}

/// Human-readable report with the retrieval and relocalization columns.
inline void write_report_text(const EvalReport& r, std::ostream& os)
{
  os << "queries " << r.queries << "  failed " << r.failed << "\n";
  if (!r.recall_at_k.empty())
  {
    os << "Retrieval\n";
    for (const auto& [k, v] : r.recall_at_k)
      os << "  R@" << k << "\t" << v << "\n";
  }
  os << "Relocalization\n";
  for (const auto& [t, v] : r.reloc.rr)
    os << "  " << format_rr_label(t) << "\t" << v << "\n";
  os << "  RMSE(m)\t" << r.reloc.stats.rmse << "\n"
     << "  MSE(m)\t" << r.reloc.stats.mse << "\n"
     << "  MAE(m)\t" << r.reloc.stats.mae << "\n"
     << "  Max Error(m)\t" << r.reloc.stats.max_err << "\n"
     << "  count\t" << r.reloc.stats.count << "\n";
}

/// Tab-separated report: a K / R@K block, a threshold / RR block, then the error
/// statistics block.
inline void write_report_tsv(const EvalReport& r, std::ostream& os)
{
  os << "K\tR@K\n";
  for (const auto& [k, v] : r.recall_at_k)
    os << k << "\t" << v << "\n";
  os << "trans_m\trot_deg\tRR\n";
  for (const auto& [t, v] : r.reloc.rr)
    os << t.first << "\t" << t.second << "\t" << v << "\n";
  os << "rmse\tmse\tmae\tmax\n";
  os << r.reloc.stats.rmse << "\t" << r.reloc.stats.mse << "\t" << r.reloc.stats.mae << "\t" << r.reloc.stats.max_err
     << "\n";
}

//-----------------------------------------------------------------------------
// Result files. Each query block starts with "# query <id> [name]".

struct PoseRecord
{
  std::int64_t query_id = 0;
  bool ok = false;
  Pose cam_to_map;
  int inliers = 0;
  double inlier_ratio = 0.0;
  double mean_err_px = 0.0;
  std::string reason;
};

inline PoseRecord make_pose_record(std::int64_t query_id, const RelocalizationResult& r)
{
  PoseRecord p;
  p.query_id = query_id;
  p.ok = r.ok();
  if (p.ok)
    p.cam_to_map = r.camera_to_map();
  p.inliers = r.inlier_count;
  p.inlier_ratio = r.inlier_ratio;
  p.mean_err_px = r.mean_reproj_err_px;
  p.reason = r.reason;
  return p;
}

/// "status tx ty tz qx qy qz qw inliers ratio mean_err_px"; the pose is camera-to-map.
inline void write_pose_record(const PoseRecord& p, std::ostream& os, const std::string& name = {})
{
  os << "# query " << p.query_id << (name.empty() ? "" : " ") << name << "\n";
  if (!p.ok && !p.reason.empty())
    os << "# reason: " << p.reason << "\n";
  os << (p.ok ? "OK " : "FAILED ") << format_pose(p.ok ? p.cam_to_map : Pose{}) << ' ' << p.inliers << ' '
     << std::setprecision(17) << p.inlier_ratio << ' ' << p.mean_err_px << "\n";
}

namespace detail
{
/// Returns the query id of a "# query <id>" line, if it is one.
inline std::optional<std::int64_t> query_header(const std::string& line)
{
  std::istringstream ls(line);
  std::string hash, tag;
  std::int64_t id = 0;
  if (ls >> hash >> tag >> id && hash == "#" && tag == "query")
    return id;
  return std::nullopt;
}

inline bool blank_or_comment(const std::string& line)
{
  const auto p = line.find_first_not_of(" \t\r");
  return p == std::string::npos || line[p] == '#';
}
} // namespace detail

inline std::vector<PoseRecord> read_pose_records(std::istream& in)
{
  std::vector<PoseRecord> out;
  std::int64_t current = 0;
  bool open = false;
  std::string line, reason;
  std::size_t line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    if (const auto id = detail::query_header(line))
    {
      current = *id;
      open = true;
      reason.clear();
      continue;
    }
    if (line.rfind("# reason: ", 0) == 0)
    {
      reason = line.substr(10);
      continue;
    }
    if (detail::blank_or_comment(line))
      continue;
    if (!open)
      throw Error("pose results line " + std::to_string(line_no) + ": record without '# query' header");
    std::istringstream ls(line);
    std::string status;
    ls >> status;
    if (status != "OK" && status != "FAILED")
      throw Error("pose results line " + std::to_string(line_no) + ": bad status '" + status + "'");
    std::string rest;
    std::getline(ls, rest);
    std::istringstream rs(rest);
    std::vector<std::string> tok;
    for (std::string t; rs >> t;)
      tok.push_back(t);
    if (tok.size() != 10)
      throw Error("pose results line " + std::to_string(line_no) + ": expected 11 fields");
    PoseRecord p;
    p.query_id = current;
    p.ok = status == "OK";
    std::string pose_line = "0";
    for (int i = 0; i < 7; ++i)
      pose_line += " " + tok[static_cast<std::size_t>(i)];
    if (p.ok)
      p.cam_to_map = parse_pose_line(pose_line, line_no).pose;
    p.inliers = std::stoi(tok[7]);
    p.inlier_ratio = std::stod(tok[8]);
    p.mean_err_px = std::stod(tok[9]);
    p.reason = reason;
    out.push_back(p);
    open = false;
  }
  return out;
}

struct RetrievalRecord
{
  std::int64_t query_id = 0;
  std::vector<Candidate> candidates;
};

/// One "image_id best_patch score cluster_label" line per candidate, best first.
inline void write_retrieval_record(const RetrievalRecord& r, std::ostream& os, const std::string& name = {})
{
  os << "# query " << r.query_id << (name.empty() ? "" : " ") << name << "\n";
  for (const auto& c : r.candidates)
    os << c.image_id << ' ' << c.best_patch << ' ' << std::setprecision(17) << c.score << ' ' << c.cluster_label << "\n";
}

inline std::vector<RetrievalRecord> read_retrieval_records(std::istream& in)
{
  std::vector<RetrievalRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line))
  {
    ++line_no;
    if (const auto id = detail::query_header(line))
    {
      out.push_back({*id, {}});
      continue;
    }
    if (detail::blank_or_comment(line))
      continue;
    if (out.empty())
      throw Error("retrieval results line " + std::to_string(line_no) + ": candidate without '# query' header");
    std::istringstream ls(line);
    Candidate c;
    if (!(ls >> c.image_id >> c.best_patch >> c.score >> c.cluster_label))
      throw Error("retrieval results line " + std::to_string(line_no) +
                  ": expected 'image_id best_patch score cluster_label'");
    out.back().candidates.push_back(c);
  }
  return out;
}

/// Joins results with ground truth by query id. Queries missing from a result file
/// count as failures; results without ground truth are an error.
inline EvalReport evaluate(const Database& db, const Trajectory& gt, const std::vector<RetrievalRecord>* retrievals,
                           const std::vector<PoseRecord>* poses, const std::vector<int>& k_list,
                           const std::vector<RRThreshold>& thresholds = default_rr_thresholds(),
                           double retrieval_dist_m = 5.0)
{
  if (gt.empty())
    throw Error("evaluate: empty ground truth");
  std::map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < gt.size(); ++i)
    slot[gt[i].index] = i;
  auto find_slot = [&](std::int64_t id) {
    const auto it = slot.find(id);
    if (it == slot.end())
      throw Error("evaluate: no ground truth for query " + std::to_string(id));
    return it->second;
  };
  EvalReport rep;
  rep.queries = static_cast<int>(gt.size());
  std::vector<Pose> gt_poses;
  for (const auto& e : gt)
    gt_poses.push_back(e.pose);
  if (retrievals)
  {
    std::vector<std::vector<Candidate>> lists(gt.size());
    for (const auto& r : *retrievals)
      lists[find_slot(r.query_id)] = r.candidates;
    rep.recall_at_k = recall_at_k(lists, gt_poses, db, k_list, retrieval_dist_m);
  }
  if (poses)
  {
    std::vector<std::optional<PoseError>> errors(gt.size());
    for (const auto& p : *poses)
    {
      const std::size_t i = find_slot(p.query_id);
      if (p.ok)
        errors[i] = pose_error(p.cam_to_map, gt_poses[i]);
    }
    for (const auto& e : errors)
      rep.failed += !e;
    rep.reloc = reloc_recall(errors, thresholds);
  }
  return rep;
}

} // namespace reloc
