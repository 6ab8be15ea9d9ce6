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

#include <png.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace reloc
{

/// 8-bit single channel image, row-major.
struct GrayImage
{
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill)
  {
    if (w < 0 || h < 0)
      throw Error("negative image size");
  }

  bool empty() const { return width == 0 || height == 0; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }

  bool operator==(const GrayImage&) const = default;
};

/// Axis-aligned integer pixel rectangle, half-open: [x0, x1) x [y0, y1).
struct PixelRect
{
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

inline GrayImage crop(const GrayImage& img, const PixelRect& r)
{
  if (r.x0 < 0 || r.y0 < 0 || r.x1 > img.width || r.y1 > img.height || r.x1 < r.x0 || r.y1 < r.y0)
    throw Error("crop rectangle outside image");
  GrayImage out(r.width(), r.height());
  for (int y = 0; y < out.height; ++y)
    std::copy_n(&img.pixels[static_cast<std::size_t>(y + r.y0) * img.width + r.x0], out.width,
                &out.pixels[static_cast<std::size_t>(y) * out.width]);
  return out;
}

/// Bilinear sample at continuous coordinates where pixel (i, j) has its center at (i, j).
/// Coordinates are clamped to the image.
inline double sample_bilinear(const GrayImage& img, double x, double y)
{
  x = std::clamp(x, 0.0, img.width - 1.0);
  y = std::clamp(y, 0.0, img.height - 1.0);
  const int x0 = static_cast<int>(x);
  const int y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double ax = x - x0;
  const double ay = y - y0;
  const double top = (1 - ax) * img.at(x0, y0) + ax * img.at(x1, y0);
  const double bot = (1 - ax) * img.at(x0, y1) + ax * img.at(x1, y1);
  return (1 - ay) * top + ay * bot;
}

/// Bilinear resize with pixel-center alignment.
inline GrayImage resize_bilinear(const GrayImage& img, int w, int h)
{
  if (img.empty() || w <= 0 || h <= 0)
    throw Error("resize of empty image");
  GrayImage out(w, h);
  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
    {
      const double v = sample_bilinear(img, (x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5);
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
    }
  return out;
}

inline std::uint8_t luma(double r, double g, double b)
{
  return static_cast<std::uint8_t>(std::lround(std::clamp(0.299 * r + 0.587 * g + 0.114 * b, 0.0, 255.0)));
}

//-----------------------------------------------------------------------------
// PGM / PPM / PNG

namespace detail
{
inline std::string next_pnm_token(std::istream& in)
{
  std::string tok;
  char c;
  while (in.get(c))
  {
    if (c == '#')
    {
      std::string discard;
      std::getline(in, discard);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)))
    {
      if (!tok.empty())
        return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

inline bool has_png_signature(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}
} // namespace detail

inline GrayImage read_pnm(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw Error("cannot open image: " + path.string());
  const std::string magic = detail::next_pnm_token(in);
  if (magic != "P5" && magic != "P6" && magic != "P2")
    throw Error("unsupported PNM type '" + magic + "' in " + path.string());
  int w = 0, h = 0, maxval = 0;
  try
  {
    w = std::stoi(detail::next_pnm_token(in));
    h = std::stoi(detail::next_pnm_token(in));
    maxval = std::stoi(detail::next_pnm_token(in));
  }
  catch (const std::exception&)
  {
    throw Error("malformed PNM header in " + path.string());
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw Error("unsupported PNM geometry or depth in " + path.string());
  GrayImage img(w, h);
  const auto scale = [maxval](int v) {
    return static_cast<std::uint8_t>(maxval == 255 ? v : std::lround(v * 255.0 / maxval));
  };
  if (magic == "P2")
  {
    for (auto& p : img.pixels)
    {
      const std::string tok = detail::next_pnm_token(in);
      if (tok.empty())
        throw Error("truncated PGM data in " + path.string());
      p = scale(std::stoi(tok));
    }
    return img;
  }
  const std::size_t channels = magic == "P6" ? 3 : 1;
  std::vector<std::uint8_t> raw(img.pixels.size() * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw Error("truncated PNM data in " + path.string());
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
  {
    if (channels == 1)
      img.pixels[i] = scale(raw[i]);
    else
      img.pixels[i] = luma(scale(raw[3 * i]), scale(raw[3 * i + 1]), scale(raw[3 * i + 2]));
  }
  return img;
}

inline GrayImage read_png(const std::filesystem::path& path)
{
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw Error("cannot read PNG " + path.string() + ": " + image.message);
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr))
  {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error("cannot decode PNG " + path.string() + ": " + msg);
  }
  GrayImage img(static_cast<int>(image.width), static_cast<int>(image.height));
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = color ? luma(buf[3 * i], buf[3 * i + 1], buf[3 * i + 2]) : buf[i];
  return img;
}

/// Reads PGM/PPM (color converted by luma weights) or PNG, detected by signature.
inline GrayImage read_image(const std::filesystem::path& path)
{
  if (!std::filesystem::exists(path))
    throw Error("image not found: " + path.string());
  return detail::has_png_signature(path) ? read_png(path) : read_pnm(path);
}

inline void write_pgm(const GrayImage& img, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw Error("cannot write image: " + path.string());
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out)
    throw Error("failed writing image: " + path.string());
}

} // namespace reloc
