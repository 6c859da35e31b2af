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

#ifndef DUNET_DIFFUSION_LAB_HPP_
#define DUNET_DIFFUSION_LAB_HPP_

#include <cstddef>
#include <utility>
#include <vector>

#include "dunet/geometry.hpp"

namespace dunet {

// Handcrafted diffusivity g(s) evaluated on the feature-difference magnitude.
struct DiffusivityFn {
  enum class Kind { kConstant, kPeronaMalik };
  Kind kind = Kind::kConstant;
  double value = 1.0;   // level of the constant diffusivity
  double lambda = 1.0;  // contrast parameter of the Perona-Malik form

  static DiffusivityFn constant(double v = 1.0);
  // g(s) = 1 / (1 + s^2 / lambda^2)
  static DiffusivityFn perona_malik(double lambda);

  double operator()(double s) const;
  double max_magnitude() const;
};

// u_s <- u_s + tau * (1/|N_s|) * sum_n g(|u_n - u_s|) * (u_n - u_s).
// Requires tau * max|g| <= 1 (explicit-scheme stability).
void classic_diffusion_step(PointCloud& cloud, const NeighborIndex& nbrs,
                            const DiffusivityFn& g, double tau);

struct DiffusionRun {
  double tau = 0.0;
  std::size_t steps = 0;
  std::vector<std::vector<double>> snapshots;               // step 0..T when kept
  std::vector<std::pair<std::size_t, double>> contrast;     // (step, ratio), labeled clouds
};

DiffusionRun run_classic_diffusion(const PointCloud& cloud, const NeighborIndex& nbrs,
                                   const DiffusivityFn& g, double tau, std::size_t steps,
                                   bool keep_snapshots = false);

// Inter-region contrast series of a run over a two-region labeled cloud,
// normalized so the step-0 ratio is 1.
const std::vector<std::pair<std::size_t, double>>& contrast_ratio(const DiffusionRun& run);

// 1-D line along x sampled uniformly on [-1, 1] with feature tanh(a*x);
// u_y = u_z = 0 by construction.
PointCloud step_edge_profile(std::size_t n, double sharpness);

// |mean(region 0) - mean(region 1)| in feature space (Euclidean for
// multi-channel features). Throws unless the cloud has exactly two labels.
double region_contrast(const PointCloud& cloud);

}  // namespace dunet

#endif  // DUNET_DIFFUSION_LAB_HPP_
