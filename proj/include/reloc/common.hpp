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

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace reloc
{

/// Error raised for malformed inputs and violated preconditions.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Point-id sentinel for empty pixels.
inline constexpr std::int64_t kNoPoint = -1;

/// Label used by density clustering for unclustered samples.
inline constexpr int kNoise = -1;

inline unsigned worker_count(unsigned requested = 0)
{
  if (requested > 0)
    return requested;
  if (const char* env = std::getenv("RELOC_THREADS"))
  {
    const int n = std::atoi(env);
    if (n > 0)
      return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

//-----------------------------------------------------------------------------
// Runs fn(i) for i in [0, n). Work is claimed through an atomic counter so the
// result of each index does not depend on scheduling; callers write into
// per-index slots. The first exception thrown by any worker is rethrown.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = 0)
{
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(worker_count(threads), n));
  if (workers <= 1)
  {
    for (std::size_t i = 0; i < n; ++i)
      fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto body = [&]() {
    for (std::size_t i = next++; i < n; i = next++)
    {
      try
      {
        fn(i);
      }
      catch (...)
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure)
          failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w)
    pool.emplace_back(body);
  body();
  for (auto& t : pool)
    t.join();
  if (failure)
    std::rethrow_exception(failure);
}

} // namespace reloc
