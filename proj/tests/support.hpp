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

#ifndef DUNET_TESTS_SUPPORT_HPP_
#define DUNET_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "dunet/geometry.hpp"
#include "dunet/rng.hpp"
#include "dunet/tensor.hpp"

namespace testsup {

using dunet::NeighborIndex;
using dunet::Rng;
using dunet::Tensor;
using dunet::Vec3;

inline double rel_err(double a, double b) {
  double denom = std::max({1e-6, std::abs(a), std::abs(b)});
  return std::abs(a - b) / denom;
}

inline Tensor random_tensor(dunet::Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

inline std::vector<Vec3> random_points(std::size_t n, Rng& rng, double extent = 1.0) {
  std::vector<Vec3> pts(n);
  for (Vec3& p : pts) {
    p = {rng.uniform(-extent, extent), rng.uniform(-extent, extent),
         rng.uniform(-extent, extent)};
  }
  return pts;
}

// Central finite differences of a scalar function with respect to every
// entry of `param`. The callable must rerun the forward pass from scratch;
// with no tape active those reruns stay pure.
inline std::vector<double> fd_gradient(Tensor param, const std::function<double()>& loss,
                                       double step = 1e-5) {
  std::vector<double> g(param.numel());
  auto& v = param.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    double keep = v[i];
    v[i] = keep + step;
    double up = loss();
    v[i] = keep - step;
    double down = loss();
    v[i] = keep;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

// Runs one taped backward pass, then compares every parameter's analytic
// gradient against the finite-difference oracle. Returns the worst relative
// error.
inline double max_grad_error(const std::vector<Tensor>& params,
                             const std::function<Tensor()>& forward_loss, double step = 1e-5) {
  for (Tensor p : params) p.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    dunet::Tape tape;
    Tensor loss = forward_loss();
    dunet::backward(loss);
  }
  for (const Tensor& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : std::vector<double>(p.numel(), 0.0));
  }
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto fd = fd_gradient(params[pi], [&]() { return forward_loss().values()[0]; }, step);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      worst = std::max(worst, rel_err(analytic[pi][i], fd[i]));
    }
  }
  for (Tensor p : params) p.zero_grad();
  return worst;
}

// Brute-force kNN: full sort by (distance, index) per query. Independent of
// the production partial-sort path.
inline NeighborIndex brute_knn(const std::vector<Vec3>& query, const std::vector<Vec3>& source,
                               std::size_t k) {
  NeighborIndex out;
  out.offsets.push_back(0);
  out.centers.resize(query.size());
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    out.centers[qi] = qi;
    std::vector<std::pair<double, std::size_t>> all(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      all[i] = {dunet::sq_dist(query[qi], source[i]), i};
    }
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < k; ++i) out.indices.push_back(all[i].second);
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

// Brute-force radius search with nearest-kept cap and nonempty fallback.
inline NeighborIndex brute_radius(const std::vector<Vec3>& query,
                                  const std::vector<Vec3>& source, double r,
                                  std::size_t max_count) {
  NeighborIndex out;
  out.offsets.push_back(0);
  out.centers.resize(query.size());
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    out.centers[qi] = qi;
    std::vector<std::pair<double, std::size_t>> all(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
      all[i] = {dunet::sq_dist(query[qi], source[i]), i};
    }
    std::sort(all.begin(), all.end());
    std::size_t taken = 0;
    for (const auto& [d2, idx] : all) {
      if (taken >= max_count) break;
      if (d2 > r * r && taken > 0) break;
      out.indices.push_back(idx);
      ++taken;
    }
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

// Reference farthest-point sampling that recomputes all distances at every
// pick instead of maintaining the incremental min-distance array.
inline std::vector<std::size_t> brute_fps(const std::vector<Vec3>& points, std::size_t k) {
  std::size_t n = points.size();
  Vec3 centroid{0, 0, 0};
  for (const Vec3& p : points) {
    for (int a = 0; a < 3; ++a) centroid[a] += p[a] / static_cast<double>(n);
  }
  std::vector<std::size_t> picked;
  std::size_t seed = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = dunet::sq_dist(points[i], centroid);
    if (d > best) {
      best = d;
      seed = i;
    }
  }
  picked.push_back(seed);
  while (picked.size() < k) {
    std::size_t far = n;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      double min_d = std::numeric_limits<double>::infinity();
      for (std::size_t j : picked) min_d = std::min(min_d, dunet::sq_dist(points[i], points[j]));
      if (min_d > far_d) {
        far_d = min_d;
        far = i;
      }
    }
    picked.push_back(far);
  }
  return picked;
}

}  // namespace testsup

#endif  // DUNET_TESTS_SUPPORT_HPP_
