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

#include <Eigen/Core>

#include <deque>
#include <vector>

namespace reloc
{

/// DBSCAN with Euclidean distance. A sample's neighborhood includes itself and
/// every sample at distance <= eps; it is a core sample when that neighborhood
/// holds at least `min_pts` samples. Seeds are visited in index order, so clusters
/// are numbered by their first core sample and a border sample joins the first
/// cluster that reaches it. Unclustered samples get kNoise.
template <int D>
std::vector<int> dbscan(const std::vector<Eigen::Matrix<double, D, 1>>& pts, double eps, int min_pts)
{
  if (!(eps > 0.0))
    throw Error("dbscan: eps must be positive");
  if (min_pts < 1)
    throw Error("dbscan: min_pts must be >= 1");
  constexpr int kUnvisited = -2;
  const std::size_t n = pts.size();
  const double eps2 = eps * eps;
  std::vector<int> label(n, kUnvisited);

  auto neighbors = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j)
      if ((pts[i] - pts[j]).squaredNorm() <= eps2)
        out.push_back(j);
    return out;
  };

  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i)
  {
    if (label[i] != kUnvisited)
      continue;
    auto seed = neighbors(i);
    if (static_cast<int>(seed.size()) < min_pts)
    {
      label[i] = kNoise;
      continue;
    }
    label[i] = cluster;
    std::deque<std::size_t> frontier(seed.begin(), seed.end());
    while (!frontier.empty())
    {
      const std::size_t j = frontier.front();
      frontier.pop_front();
      if (label[j] == kNoise)
        label[j] = cluster; // border sample
      if (label[j] != kUnvisited)
        continue;
      label[j] = cluster;
      auto nb = neighbors(j);
      if (static_cast<int>(nb.size()) >= min_pts)
        frontier.insert(frontier.end(), nb.begin(), nb.end());
    }
    ++cluster;
  }
  return label;
}

} // namespace reloc
