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

#include "dunet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dunet/errors.hpp"

namespace dunet {

void PointCloud::validate() const {
  for (const Vec3& p : positions) {
    for (double v : p) {
      if (!std::isfinite(v)) throw ArgumentError("point cloud '" + name + "' has non-finite positions");
    }
  }
  if (!features.empty() && features.size() != size() * feature_dim) {
    throw DimensionError("point cloud '" + name + "' feature rows do not match point count");
  }
  if (!labels.empty() && labels.size() != size()) {
    throw DimensionError("point cloud '" + name + "' label count does not match point count");
  }
}

std::vector<std::size_t> NeighborIndex::expanded_centers() const {
  std::vector<std::size_t> out(indices.size());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) out[r] = centers[s];
  }
  return out;
}

std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t k) {
  std::size_t n = points.size();
  if (k < 1 || k > n) {
    throw ArgumentError("farthest_point_sample: k = " + std::to_string(k) +
                        " out of range [1, " + std::to_string(n) + "]");
  }
  Vec3 centroid{0.0, 0.0, 0.0};
  for (const Vec3& p : points) {
    centroid[0] += p[0];
    centroid[1] += p[1];
    centroid[2] += p[2];
  }
  for (double& c : centroid) c /= static_cast<double>(n);

  std::size_t seed = 0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = sq_dist(points[i], centroid);
    if (d > best) {  // strict: ties keep the lowest index
      best = d;
      seed = i;
    }
  }

  std::vector<std::size_t> picked;
  picked.reserve(k);
  picked.push_back(seed);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::vector<bool> chosen(n, false);
  chosen[seed] = true;
  std::size_t last = seed;
  while (picked.size() < k) {
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = sq_dist(points[i], points[last]);
      if (d < min_d[i]) min_d[i] = d;
      if (!chosen[i] && min_d[i] > far_d) {
        far_d = min_d[i];
        far = i;
      }
    }
    picked.push_back(far);
    chosen[far] = true;
    last = far;
  }
  return picked;
}

namespace {

struct Cand {
  double d2;
  std::size_t idx;
  bool operator<(const Cand& o) const { return d2 < o.d2 || (d2 == o.d2 && idx < o.idx); }
};

std::vector<Cand> nearest_sorted(const Vec3& q, const std::vector<Vec3>& source,
                                 std::size_t keep) {
  std::vector<Cand> all(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) all[i] = {sq_dist(q, source[i]), i};
  if (keep < all.size()) {
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end());
    all.resize(keep);
  } else {
    std::sort(all.begin(), all.end());
  }
  return all;
}

}  // namespace

NeighborIndex knn(const std::vector<Vec3>& query, const std::vector<Vec3>& source,
                  std::size_t k) {
  if (k < 1 || k > source.size()) {
    throw ArgumentError("knn: k = " + std::to_string(k) + " out of range [1, " +
                        std::to_string(source.size()) + "]");
  }
  NeighborIndex out;
  out.offsets.reserve(query.size() + 1);
  out.offsets.push_back(0);
  out.indices.reserve(query.size() * k);
  out.centers.resize(query.size());
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    out.centers[qi] = qi;
    for (const Cand& c : nearest_sorted(query[qi], source, k)) out.indices.push_back(c.idx);
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

NeighborIndex knn_excluding_self(const std::vector<Vec3>& points, std::size_t k) {
  if (points.size() < 2) {
    throw DegenerateNeighborhoodError("knn_excluding_self needs at least two points");
  }
  std::size_t want = std::min(k, points.size() - 1);
  NeighborIndex out;
  out.offsets.push_back(0);
  out.centers.resize(points.size());
  for (std::size_t qi = 0; qi < points.size(); ++qi) {
    out.centers[qi] = qi;
    auto cands = nearest_sorted(points[qi], points, want + 1);
    std::size_t taken = 0;
    for (const Cand& c : cands) {
      if (c.idx == qi) continue;
      out.indices.push_back(c.idx);
      if (++taken == want) break;
    }
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

NeighborIndex radius_neighbors(const std::vector<Vec3>& query, const std::vector<Vec3>& source,
                               double r, std::size_t max_count) {
  if (r <= 0.0) throw ArgumentError("radius_neighbors: radius must be positive");
  if (source.empty()) throw ArgumentError("radius_neighbors: empty source");
  double r2 = r * r;
  NeighborIndex out;
  out.offsets.push_back(0);
  out.centers.resize(query.size());
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    out.centers[qi] = qi;
    auto cands = nearest_sorted(query[qi], source, std::min(max_count, source.size()));
    std::size_t taken = 0;
    for (const Cand& c : cands) {
      if (c.d2 > r2 && taken > 0) break;
      out.indices.push_back(c.idx);  // the nearest point always qualifies
      ++taken;
    }
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

InterpolationWeights interpolation_weights(const std::vector<Vec3>& query,
                                           const std::vector<Vec3>& source, std::size_t k) {
  if (source.size() < k) {
    throw ArgumentError("interpolation_weights: need at least " + std::to_string(k) +
                        " source points, got " + std::to_string(source.size()));
  }
  constexpr double kEps = 1e-10;
  InterpolationWeights out;
  out.nbrs = knn(query, source, k);
  out.weights.resize(out.nbrs.indices.size());
  for (std::size_t qi = 0; qi < query.size(); ++qi) {
    double total = 0.0;
    for (std::size_t r = out.nbrs.offsets[qi]; r < out.nbrs.offsets[qi + 1]; ++r) {
      double d2 = sq_dist(query[qi], source[out.nbrs.indices[r]]);
      out.weights[r] = 1.0 / (d2 + kEps);
      total += out.weights[r];
    }
    for (std::size_t r = out.nbrs.offsets[qi]; r < out.nbrs.offsets[qi + 1]; ++r) {
      out.weights[r] /= total;
    }
  }
  return out;
}

NeighborIndex mutual_knn(const std::vector<Vec3>& points, std::size_t k) {
  NeighborIndex plain = knn_excluding_self(points, k);
  std::size_t n = points.size();
  std::vector<std::vector<std::size_t>> sets(n);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t r = plain.offsets[s]; r < plain.offsets[s + 1]; ++r) {
      sets[s].push_back(plain.indices[r]);
    }
  }
  auto has = [&](std::size_t a, std::size_t b) {
    return std::find(sets[a].begin(), sets[a].end(), b) != sets[a].end();
  };
  NeighborIndex out;
  out.offsets.push_back(0);
  out.centers.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    out.centers[s] = s;
    for (std::size_t nb : sets[s]) {
      if (has(nb, s)) out.indices.push_back(nb);
    }
    if (out.indices.size() == out.offsets.back()) {
      throw DegenerateNeighborhoodError("mutual_knn: point " + std::to_string(s) +
                                        " has no mutual neighbors");
    }
    out.offsets.push_back(out.indices.size());
  }
  return out;
}

}  // namespace dunet
