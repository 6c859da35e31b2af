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

#ifndef DUNET_GEOMETRY_HPP_
#define DUNET_GEOMETRY_HPP_

#include <array>
#include <cstddef>
#include <string>
#include <vector>

namespace dunet {

using Vec3 = std::array<double, 3>;

inline double sq_dist(const Vec3& a, const Vec3& b) {
  double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<double> features;  // row-major N x feature_dim, may be empty
  std::size_t feature_dim = 0;
  std::vector<int> labels;              // per-point class ids, may be empty
  std::vector<unsigned char> boundary;  // analytic boundary mask, in-memory only
  std::string name;

  std::size_t size() const { return positions.size(); }
  bool has_labels() const { return !labels.empty(); }
  double feature(std::size_t i, std::size_t c) const { return features[i * feature_dim + c]; }

  // Throws unless positions are finite and field lengths are consistent.
  void validate() const;
};

// Compressed adjacency: neighbors of center s occupy
// indices[offsets[s] .. offsets[s+1]). Every range is nonempty.
struct NeighborIndex {
  std::vector<std::size_t> offsets;  // S+1 entries
  std::vector<std::size_t> indices;  // flat ids into the source point set
  std::vector<std::size_t> centers;  // S ids into the source/query point set

  std::size_t num_centers() const { return centers.size(); }
  std::size_t total() const { return indices.size(); }
  std::size_t count(std::size_t s) const { return offsets[s + 1] - offsets[s]; }
  // Center id repeated once per neighbor slot; pairs with flat `indices`.
  std::vector<std::size_t> expanded_centers() const;
};

// Greedy max-min subset selection. The seed is the point farthest from the
// centroid; ties break toward the lowest index. Output in selection order.
std::vector<std::size_t> farthest_point_sample(const std::vector<Vec3>& points, std::size_t k);

// k nearest source points per query, sorted by (distance, index). A query
// point that also exists in the source finds itself.
NeighborIndex knn(const std::vector<Vec3>& query, const std::vector<Vec3>& source,
                  std::size_t k);

// As knn with query == source, but each point's own index is removed from
// its neighborhood. Requires at least two points.
NeighborIndex knn_excluding_self(const std::vector<Vec3>& points, std::size_t k);

// All source points within distance r, nearest first, capped at max_count.
// When nothing falls inside r the single nearest point is kept, so
// neighborhoods never come out empty.
NeighborIndex radius_neighbors(const std::vector<Vec3>& query, const std::vector<Vec3>& source,
                               double r, std::size_t max_count = 32);

// Inverse-square-distance weights over the k nearest sources,
// w_i = (1/(d_i^2+eps)) / sum_j (1/(d_j^2+eps)); rows sum to 1.
struct InterpolationWeights {
  NeighborIndex nbrs;
  std::vector<double> weights;  // aligned with nbrs.indices
};
InterpolationWeights interpolation_weights(const std::vector<Vec3>& query,
                                           const std::vector<Vec3>& source, std::size_t k = 3);

// Intersection-symmetrized kNN graph: an edge survives only when each
// endpoint lists the other. Throws if a point ends up neighborless.
NeighborIndex mutual_knn(const std::vector<Vec3>& points, std::size_t k);

}  // namespace dunet

#endif  // DUNET_GEOMETRY_HPP_
