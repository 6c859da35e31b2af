// Copyright (c) 2026 The dunet Authors
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

#ifndef DUNET_PARALLEL_HPP_
#define DUNET_PARALLEL_HPP_

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace dunet {

// Fork-join over the index range [0, n). Each worker receives a contiguous
// [lo, hi) slice and must write only to state owned by that slice, so the
// result is bitwise independent of the worker count.
template <typename F>
void parallel_for(std::size_t n, std::size_t grain, F&& f) {
  if (n == 0) return;
  std::size_t hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  std::size_t workers = std::min(hw, grain ? std::max<std::size_t>(1, n / grain) : 1);
  if (workers <= 1) {
    f(std::size_t{0}, n);
    return;
  }
  std::size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> threads;
  threads.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) {
    std::size_t lo = w * chunk;
    std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back([&f, lo, hi] { f(lo, hi); });
  }
  f(std::size_t{0}, std::min(n, chunk));
  for (auto& t : threads) t.join();
}

}  // namespace dunet

#endif  // DUNET_PARALLEL_HPP_
