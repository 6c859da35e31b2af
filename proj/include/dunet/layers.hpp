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

#ifndef DUNET_LAYERS_HPP_
#define DUNET_LAYERS_HPP_

#include <cstddef>
#include <vector>

#include "dunet/geometry.hpp"
#include "dunet/rng.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

// Row-wise linear map x*W^T (+ bias). Weight is [out x in].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when the layer is bias-free

  static Linear make(std::size_t in, std::size_t out, bool with_bias);
  void init_kaiming(Rng& rng);
  Tensor apply(const Tensor& x) const;
  std::size_t in_dim() const { return weight.shape()[1]; }
  std::size_t out_dim() const { return weight.shape()[0]; }
};

// The trainable diffusivity-replacing filter: a square channel-mixing map.
// Bias-free by default so that phi(0) = 0 exactly.
struct PhiFilter {
  Tensor weight;  // [d x d]
  Tensor bias;    // optional [d]

  static PhiFilter make(std::size_t d);
  static PhiFilter identity(std::size_t d);
  static PhiFilter scaled_identity(std::size_t d, double w);
  Tensor apply(const Tensor& x) const;
  std::size_t dim() const { return weight.shape()[0]; }
};

// BatchNorm followed by ReLU.
struct VarphiWrapper {
  BNState bn;

  static VarphiWrapper make(std::size_t d);
  Tensor apply(const Tensor& x, bool training, bool update_running = true);
};

struct DiffusionUnitSpec {
  std::size_t channels = 0;
  std::size_t neighbors = 16;
  bool enable_phi = true;
  bool enable_varphi = true;
  std::size_t repeat = 1;

  void validate() const;
};

// u_s <- u_s + varphi( mean_n phi(u_n - u_s) ), applied `repeat` times with
// fresh neighbor differences and shared parameters.
struct DiffusionUnit {
  DiffusionUnitSpec spec;
  PhiFilter phi;        // defined iff spec.enable_phi
  VarphiWrapper varphi;  // bn state defined iff spec.enable_varphi

  static DiffusionUnit make(const DiffusionUnitSpec& spec);
  Tensor step(const Tensor& u, const NeighborIndex& nbrs, bool training,
              bool update_running = true);
  Tensor forward(const Tensor& u, const NeighborIndex& nbrs, bool training,
                 bool update_running = true);
};

Tensor diffusion_unit_step(DiffusionUnit& du, const Tensor& u, const NeighborIndex& nbrs,
                           bool training = false);

// Fixed local kernel-point layout for the correlation step.
struct KernelDisposition {
  std::vector<Vec3> points;  // first point is the origin
  double sigma = 1.0;        // influence radius

  std::size_t count() const { return points.size(); }
  // Origin plus a spherical Fibonacci shell of l-1 points at 0.66*sigma.
  static KernelDisposition fibonacci(std::size_t l, double sigma);
  void validate() const;
};

struct KPConvLSpec {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  KernelDisposition disposition;

  std::size_t multiplier() const { return d_out / d_in; }
  void validate() const;
};

// Depthwise kernel-point convolution with relative positional encoding.
// Depthwise weights are [l x d_out]; output channel j reads encoded input
// channel j / multiplier. Correlation h_k = max(0, 1 - |off - x_k| / (sigma/2)).
struct KPConvL {
  KPConvLSpec spec;
  Tensor weights;  // [l x d_out], the only depthwise parameters
  Linear rpe;      // (d_in + 3) -> d_in, with bias

  static KPConvL make(const KPConvLSpec& spec);
  // ReLU(Linear(concat(u_n, p_n - p_s))): the position-aware neighbor feature.
  Tensor encode_neighbors(const Tensor& u_n, const Tensor& offsets) const;
  // Correlation matrix [M x l] against the disposition; pure geometry.
  Tensor correlations(const std::vector<double>& offsets, std::size_t m) const;
  Tensor forward(const Tensor& u, const std::vector<Vec3>& positions,
                 const NeighborIndex& nbrs) const;
};

// Per-channel maximum over all rows; gradient routes to the argmax row
// (first on ties). Result shape [1 x d].
Tensor global_max_pool(const Tensor& u);

// Inverted dropout; identity when not training or rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

// One DU step with phi = w*I and no varphi on a monotone 1-D profile laid
// out along x; returns the change of the steepest discrete gradient
// magnitude. Negative w sharpens the edge, positive w flattens it.
double edge_gradient_delta(const PointCloud& profile, double w);
int edge_response_sign(const PointCloud& profile, double w);

}  // namespace dunet

#endif  // DUNET_LAYERS_HPP_
