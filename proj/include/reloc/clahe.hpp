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
#include "reloc/image.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace reloc
{

/// Per-tile lookup table of a contrast-limited equalization.
using ClaheLut = std::array<std::uint8_t, 256>;

/// Clipped-histogram equalization table for one tile histogram of `area` samples.
/// Excess above the clip height is spread evenly, the remainder one count at a time
/// at a fixed stride.
inline ClaheLut clahe_tile_lut(std::array<int, 256> hist, int area, double clip_limit)
{
  const int clip = std::max(1, static_cast<int>(clip_limit * area / 256.0));
  int excess = 0;
  for (auto& h : hist)
    if (h > clip)
    {
      excess += h - clip;
      h = clip;
    }
  const int batch = excess / 256;
  int residual = excess - batch * 256;
  for (auto& h : hist)
    h += batch;
  if (residual > 0)
  {
    const int step = std::max(256 / residual, 1);
    for (int i = 0; i < 256 && residual > 0; i += step, --residual)
      ++hist[i];
  }
  ClaheLut lut{};
  const double scale = 255.0 / area;
  int sum = 0;
  for (int i = 0; i < 256; ++i)
  {
    sum += hist[i];
    lut[i] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(sum * scale), 0, 255));
  }
  return lut;
}

/// Contrast-limited adaptive histogram equalization on a tiles x tiles grid.
///
/// Tiles have size ceil(W / tiles) x ceil(H / tiles); tiles overhanging the image
/// replicate its last row / column. Output pixels blend the four nearest tile
/// tables bilinearly. A constant image is returned unchanged.
inline GrayImage clahe(const GrayImage& img, double clip_limit = 2.0, int tiles = 8)
{
  if (!(clip_limit >= 1.0))
    throw Error("clahe: clip_limit must be >= 1");
  if (tiles < 1)
    throw Error("clahe: tiles must be >= 1");
  if (img.empty())
    return img;
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  if (*lo == *hi)
    return img;

  const int tw = (img.width + tiles - 1) / tiles;
  const int th = (img.height + tiles - 1) / tiles;
  const int area = tw * th;
  std::vector<ClaheLut> luts(static_cast<std::size_t>(tiles) * tiles);
  for (int ty = 0; ty < tiles; ++ty)
    for (int tx = 0; tx < tiles; ++tx)
    {
      std::array<int, 256> hist{};
      for (int y = ty * th; y < (ty + 1) * th; ++y)
      {
        const int sy = std::min(y, img.height - 1);
        for (int x = tx * tw; x < (tx + 1) * tw; ++x)
          ++hist[img.at(std::min(x, img.width - 1), sy)];
      }
      luts[static_cast<std::size_t>(ty) * tiles + tx] = clahe_tile_lut(hist, area, clip_limit);
    }

  GrayImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
  {
    const double fy = (y + 0.5) / th - 0.5;
    int ty1 = static_cast<int>(std::floor(fy));
    const double ay = fy - ty1;
    int ty2 = ty1 + 1;
    ty1 = std::max(ty1, 0);
    ty2 = std::min(ty2, tiles - 1);
    for (int x = 0; x < img.width; ++x)
    {
      const double fx = (x + 0.5) / tw - 0.5;
      int tx1 = static_cast<int>(std::floor(fx));
      const double ax = fx - tx1;
      int tx2 = tx1 + 1;
      tx1 = std::max(tx1, 0);
      tx2 = std::min(tx2, tiles - 1);
      const std::uint8_t v = img.at(x, y);
      const double top = (1 - ax) * luts[ty1 * tiles + tx1][v] + ax * luts[ty1 * tiles + tx2][v];
      const double bot = (1 - ax) * luts[ty2 * tiles + tx1][v] + ax * luts[ty2 * tiles + tx2][v];
      out.at(x, y) = static_cast<std::uint8_t>(std::lround((1 - ay) * top + ay * bot));
    }
  }
  return out;
}

} // namespace reloc
