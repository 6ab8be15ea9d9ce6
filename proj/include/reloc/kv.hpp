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

// String conversions for `section.key = value` configuration fields.

#include "reloc/common.hpp"

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>

namespace reloc::kv
{

inline std::string format(bool v) { return v ? "true" : "false"; }
inline std::string format(int v) { return std::to_string(v); }
inline std::string format(std::uint64_t v) { return std::to_string(v); }
inline std::string format(const std::string& v) { return v; }
inline std::string format(double v)
{
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline void parse(const std::string& key, const std::string& s, bool& out)
{
  if (s == "true" || s == "1" || s == "yes" || s == "on")
    out = true;
  else if (s == "false" || s == "0" || s == "no" || s == "off")
    out = false;
  else
    throw Error("config: '" + key + "' expects a boolean, got '" + s + "'");
}

inline void parse(const std::string& key, const std::string& s, int& out)
{
  try
  {
    std::size_t used = 0;
    out = std::stoi(s, &used);
    if (used != s.size())
      throw std::invalid_argument(s);
  }
  catch (const std::exception&)
  {
    throw Error("config: '" + key + "' expects an integer, got '" + s + "'");
  }
}

inline void parse(const std::string& key, const std::string& s, std::uint64_t& out)
{
  try
  {
    std::size_t used = 0;
    out = std::stoull(s, &used);
    if (used != s.size())
      throw std::invalid_argument(s);
  }
  catch (const std::exception&)
  {
    throw Error("config: '" + key + "' expects an unsigned integer, got '" + s + "'");
  }
}

inline void parse(const std::string& key, const std::string& s, double& out)
{
  try
  {
    std::size_t used = 0;
    out = std::stod(s, &used);
    if (used != s.size())
      throw std::invalid_argument(s);
  }
  catch (const std::exception&)
  {
    throw Error("config: '" + key + "' expects a number, got '" + s + "'");
  }
}

inline void parse(const std::string&, const std::string& s, std::string& out) { out = s; }

} // namespace reloc::kv
