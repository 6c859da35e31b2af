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

#ifndef DUNET_DATA_HPP_
#define DUNET_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "dunet/geometry.hpp"
#include "dunet/rng.hpp"

namespace dunet {

// Desk-scale synthetic datasets. cls-primitives: surface samples of five
// primitive shapes, one class label per cloud (stored per point).
// seg-composites: cylinder-plus-spherical-cap shapes with exact part labels
// and an analytic boundary mask around the part interface.
struct SyntheticSpec {
  enum class Family { kClsPrimitives, kSegComposites };
  Family family = Family::kClsPrimitives;
  std::size_t points = 512;
  std::size_t per_class = 10;
  double noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

constexpr std::size_t kNumPrimitiveClasses = 5;
constexpr std::size_t kNumCompositeParts = 2;

std::vector<PointCloud> generate(const SyntheticSpec& spec);

// ASCII format: header "duc v1 N d has_labels", then one point per line,
// "x y z f1..fd [label]". Values round-trip exactly.
PointCloud read_cloud(const std::string& path);
void write_cloud(const PointCloud& cloud, const std::string& path);

struct AugmentSpec {
  enum class Rotation { kNone, kZAxis, kFull };
  Rotation rotation = Rotation::kNone;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  bool anisotropic = false;
  double translation = 0.0;  // uniform [-t, t] per axis
  double jitter = 0.0;       // gaussian sigma per coordinate

  void validate() const;
  bool is_identity() const;
  // Voting keeps only the scale component, matching the training draws.
  AugmentSpec scales_only() const;
};

// Rotation, then scale, then translation, then jitter; positions only.
PointCloud augment(const PointCloud& cloud, const AugmentSpec& spec, Rng& rng);

}  // namespace dunet

#endif  // DUNET_DATA_HPP_
