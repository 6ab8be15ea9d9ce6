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
#include "reloc/kv.hpp"
#include "reloc/mapdb.hpp"
#include "reloc/pose.hpp"
#include "reloc/retrieval.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace reloc
{

/// Every tunable of the offline and online stages.
struct PipelineConfig
{
  MapBuildConfig map;
  RetrievalConfig retrieval;
  AssociationConfig association;
  RansacConfig ransac;

  void validate() const
  {
    map.validate();
    retrieval.validate();
    association.validate();
    ransac.validate();
  }
};

template <typename Cfg, typename Visitor>
  requires std::same_as<std::remove_const_t<Cfg>, PipelineConfig>
void visit_fields(Cfg& c, Visitor&& v)
{
  visit_fields(c.map, v);
  v("retrieval.k", c.retrieval.k);
  v("retrieval.k_prime", c.retrieval.k_prime);
  v("retrieval.dbscan_eps", c.retrieval.dbscan_eps);
  v("retrieval.dbscan_min_pts", c.retrieval.dbscan_min_pts);
  v("ablation.use_covis_cluster", c.retrieval.use_covis_cluster);
  v("association.match_cluster_eps", c.association.match_cluster_eps);
  v("association.match_cluster_min_pts", c.association.match_cluster_min_pts);
  v("association.min_cluster_matches", c.association.min_cluster_matches);
  v("association.crop_margin", c.association.crop_margin);
  v("association.min_box", c.association.min_box);
  v("association.lift_radius", c.association.lift_radius);
  v("association.min_covis", c.association.min_covis);
  v("features.max_kp_second", c.association.max_kp_second);
  v("features.match_ratio", c.association.match_ratio);
  v("ablation.use_two_stage", c.association.use_two_stage);
  v("ablation.use_covis_filter", c.association.use_covis_filter);
  v("ransac.max_iters", c.ransac.max_iters);
  v("ransac.inlier_thresh_px", c.ransac.inlier_thresh_px);
  v("ransac.confidence", c.ransac.confidence);
  v("ransac.min_inliers", c.ransac.min_inliers);
  v("ransac.huber_delta_px", c.ransac.huber_delta_px);
  v("ransac.refine_iters", c.ransac.refine_iters);
  v("ransac.seed", c.ransac.seed);
}

/// Sets one field by dotted key; unknown keys are rejected.
inline void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value)
{
  bool found = false;
  visit_fields(cfg, [&](const char* k, auto& field) {
    if (key == k)
    {
      kv::parse(key, value, field);
      found = true;
    }
  });
  if (!found)
    throw Error("config: unknown key '" + key + "'");
}

/// Applies a `section.key=value` override.
inline void apply_override(PipelineConfig& cfg, const std::string& assignment)
{
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error("config: override must look like section.key=value, got '" + assignment + "'");
  set_config_value(cfg, assignment.substr(0, eq), assignment.substr(eq + 1));
}

/// Applies an INI file with [section] key = value entries on top of `cfg`.
inline void apply_ini(PipelineConfig& cfg, const std::filesystem::path& path)
{
  if (!std::filesystem::exists(path))
    throw Error("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try
  {
    boost::property_tree::read_ini(path.string(), tree);
  }
  catch (const std::exception& e)
  {
    throw Error(std::string("config: ") + e.what());
  }
  for (const auto& [section, body] : tree)
  {
    if (body.empty())
      throw Error("config: key '" + section + "' outside a section");
    for (const auto& [key, leaf] : body)
      set_config_value(cfg, section + "." + key, leaf.data());
  }
}

/// Writes the configuration in the format apply_ini reads.
inline void write_ini(const PipelineConfig& cfg, std::ostream& os)
{
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  visit_fields(cfg, [&](const char* k, const auto& field) {
    const std::string key = k;
    const auto dot = key.find('.');
    sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), kv::format(field));
  });
  bool first = true;
  for (const auto& [name, entries] : sections)
  {
    os << (first ? "" : "\n") << "[" << name << "]\n";
    first = false;
    for (const auto& [k, v] : entries)
      os << k << " = " << v << "\n";
  }
}

/// RELOC_SEED, when set, replaces every seed.
inline std::optional<std::uint64_t> env_seed()
{
  const char* s = std::getenv("RELOC_SEED");
  if (!s || !*s)
    return std::nullopt;
  std::uint64_t v = 0;
  kv::parse("RELOC_SEED", s, v);
  return v;
}

} // namespace reloc
