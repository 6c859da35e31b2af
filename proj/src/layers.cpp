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

#include "dunet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dunet/errors.hpp"

namespace dunet {

// --- Linear -------------------------------------------------------------------

Linear Linear::make(std::size_t in, std::size_t out, bool with_bias) {
  Linear l;
  l.weight = Tensor::zeros({out, in});
  l.weight.set_requires_grad(true);
  if (with_bias) {
    l.bias = Tensor::zeros({out});
    l.bias.set_requires_grad(true);
  }
  return l;
}

void Linear::init_kaiming(Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(in_dim()));
  for (double& w : weight.values()) w = rng.uniform(-bound, bound);
  if (bias.defined()) {
    for (double& b : bias.values()) b = 0.0;
  }
}

Tensor Linear::apply(const Tensor& x) const {
  Tensor y = matmul_t(x, weight);
  if (bias.defined()) y = add(y, bias);
  return y;
}

// --- PhiFilter ----------------------------------------------------------------

PhiFilter PhiFilter::make(std::size_t d) {
  PhiFilter f;
  f.weight = Tensor::zeros({d, d});
  f.weight.set_requires_grad(true);
  return f;
}

PhiFilter PhiFilter::identity(std::size_t d) { return scaled_identity(d, 1.0); }

PhiFilter PhiFilter::scaled_identity(std::size_t d, double w) {
  PhiFilter f = make(d);
  for (std::size_t i = 0; i < d; ++i) f.weight.at(i, i) = w;
  return f;
}

Tensor PhiFilter::apply(const Tensor& x) const {
  if (x.cols() != dim()) {
    throw DimensionError("phi filter of width " + std::to_string(dim()) +
                         " applied to input with " + std::to_string(x.cols()) + " columns");
  }
  Tensor y = matmul_t(x, weight);
  if (bias.defined()) y = add(y, bias);
  return y;
}

// --- VarphiWrapper -------------------------------------------------------------

VarphiWrapper VarphiWrapper::make(std::size_t d) {
  VarphiWrapper v;
  v.bn = BNState::make(d);
  return v;
}

Tensor VarphiWrapper::apply(const Tensor& x, bool training, bool update_running) {
  return relu(batch_stats_normalize(x, bn, training, update_running));
}

// --- DiffusionUnit ---------------------------------------------------------------

void DiffusionUnitSpec::validate() const {
  if (channels < 1) throw SpecError("diffusion unit needs at least one channel");
  if (neighbors < 1) throw SpecError("diffusion unit needs at least one neighbor");
  if (repeat < 1) throw SpecError("diffusion unit repeat count must be >= 1");
}

DiffusionUnit DiffusionUnit::make(const DiffusionUnitSpec& spec) {
  spec.validate();
  DiffusionUnit du;
  du.spec = spec;
  if (spec.enable_phi) du.phi = PhiFilter::make(spec.channels);
  if (spec.enable_varphi) du.varphi = VarphiWrapper::make(spec.channels);
  return du;
}

Tensor DiffusionUnit::step(const Tensor& u, const NeighborIndex& nbrs, bool training,
                           bool update_running) {
  if (u.cols() != spec.channels) {
    throw DimensionError("diffusion unit of width " + std::to_string(spec.channels) +
                         " applied to input with " + std::to_string(u.cols()) + " columns");
  }
  if (nbrs.num_centers() != u.rows()) {
    throw ContractError("diffusion unit neighborhoods must cover every point");
  }
  Tensor u_n = gather_rows(u, nbrs.indices);
  Tensor u_c = gather_rows(u, nbrs.expanded_centers());
  Tensor h = sub(u_n, u_c);
  if (spec.enable_phi) h = phi.apply(h);
  Tensor m = segment_mean(h, nbrs.offsets);
  if (spec.enable_varphi) m = varphi.apply(m, training, update_running);
  return add(u, m);
}

Tensor DiffusionUnit::forward(const Tensor& u, const NeighborIndex& nbrs, bool training,
                              bool update_running) {
  Tensor cur = u;
  for (std::size_t r = 0; r < spec.repeat; ++r) cur = step(cur, nbrs, training, update_running);
  return cur;
}

Tensor diffusion_unit_step(DiffusionUnit& du, const Tensor& u, const NeighborIndex& nbrs,
                           bool training) {
  return du.step(u, nbrs, training);
}

// --- KPConvL --------------------------------------------------------------------

KernelDisposition KernelDisposition::fibonacci(std::size_t l, double sigma) {
  if (l < 1) throw SpecError("kernel disposition needs at least one point");
  if (sigma <= 0.0) throw SpecError("kernel influence radius must be positive");
  KernelDisposition disp;
  disp.sigma = sigma;
  disp.points.push_back({0.0, 0.0, 0.0});
  std::size_t shell = l - 1;
  const double golden = 3.14159265358979323846 * (3.0 - std::sqrt(5.0));
  const double radius = 0.66 * sigma;
  for (std::size_t i = 0; i < shell; ++i) {
    double z = 1.0 - (2.0 * (static_cast<double>(i) + 0.5)) / static_cast<double>(shell);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    double theta = golden * static_cast<double>(i);
    disp.points.push_back({radius * r * std::cos(theta), radius * r * std::sin(theta), radius * z});
  }
  disp.validate();
  return disp;
}

void KernelDisposition::validate() const {
  if (points.empty()) throw SpecError("empty kernel disposition");
  const Vec3 origin{0.0, 0.0, 0.0};
  if (sq_dist(points[0], origin) != 0.0) {
    throw SpecError("first kernel point must be the origin");
  }
  for (const Vec3& p : points) {
    if (sq_dist(p, origin) > sigma * sigma * (1.0 + 1e-12)) {
      throw SpecError("kernel point outside the influence radius");
    }
  }
}

void KPConvLSpec::validate() const {
  if (d_in < 1 || d_out < 1) throw SpecError("kpconv channel widths must be positive");
  if (d_out % d_in != 0) {
    throw SpecError("kpconv d_out = " + std::to_string(d_out) +
                    " is not divisible by d_in = " + std::to_string(d_in));
  }
  disposition.validate();
}

KPConvL KPConvL::make(const KPConvLSpec& spec) {
  spec.validate();
  KPConvL conv;
  conv.spec = spec;
  conv.weights = Tensor::zeros({spec.disposition.count(), spec.d_out});
  conv.weights.set_requires_grad(true);
  conv.rpe = Linear::make(spec.d_in + 3, spec.d_in, /*with_bias=*/true);
  return conv;
}

Tensor KPConvL::encode_neighbors(const Tensor& u_n, const Tensor& offsets) const {
  if (u_n.rows() != offsets.rows()) {
    throw DimensionError("rpe: feature and offset row counts differ");
  }
  if (u_n.cols() != spec.d_in) {
    throw DimensionError("rpe: expected " + std::to_string(spec.d_in) + " feature columns, got " +
                         std::to_string(u_n.cols()));
  }
  return relu(rpe.apply(concat_cols(u_n, offsets)));
}

Tensor KPConvL::correlations(const std::vector<double>& offsets, std::size_t m) const {
  std::size_t l = spec.disposition.count();
  double sigma_hat = 0.5 * spec.disposition.sigma;
  Tensor h = Tensor::zeros({m, l});
  auto& hv = h.values();
  for (std::size_t r = 0; r < m; ++r) {
    Vec3 off{offsets[r * 3], offsets[r * 3 + 1], offsets[r * 3 + 2]};
    for (std::size_t k = 0; k < l; ++k) {
      double dist = std::sqrt(sq_dist(off, spec.disposition.points[k]));
      hv[r * l + k] = std::max(0.0, 1.0 - dist / sigma_hat);
    }
  }
  return h;
}

Tensor KPConvL::forward(const Tensor& u, const std::vector<Vec3>& positions,
                        const NeighborIndex& nbrs) const {
  if (u.cols() != spec.d_in) {
    throw DimensionError("kpconv expects " + std::to_string(spec.d_in) + " input channels, got " +
                         std::to_string(u.cols()));
  }
  std::size_t m = nbrs.total();
  std::vector<double> off(m * 3);
  auto expanded = nbrs.expanded_centers();
  for (std::size_t r = 0; r < m; ++r) {
    const Vec3& pn = positions[nbrs.indices[r]];
    const Vec3& ps = positions[expanded[r]];
    off[r * 3] = pn[0] - ps[0];
    off[r * 3 + 1] = pn[1] - ps[1];
    off[r * 3 + 2] = pn[2] - ps[2];
  }
  Tensor offsets = Tensor::matrix(m, 3, off);
  Tensor encoded = encode_neighbors(gather_rows(u, nbrs.indices), offsets);
  Tensor corr = correlations(off, m);          // [M x l], constant
  Tensor kernel_mix = matmul(corr, weights);   // [M x d_out]
  Tensor spread = repeat_cols(encoded, spec.multiplier());
  return segment_mean(mul(spread, kernel_mix), nbrs.offsets);
}

// --- pooling and dropout -----------------------------------------------------------

Tensor global_max_pool(const Tensor& u) {
  if (u.rows() == 0) throw ArgumentError("global_max_pool on empty input");
  std::vector<std::size_t> one_segment{0, u.rows()};
  return segment_max(u, one_segment);
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  for (double& v : mask) v = rng.uniform() >= rate ? keep_scale : 0.0;
  Tensor out = Tensor::zeros(x.shape());
  const auto& xv = x.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * mask[i];
  if (autodiff::tracked(x) && Tape::active()) {
    auto xd = x.impl();
    auto od = out.impl();
    autodiff::record(out, [=, mk = std::move(mask)]() {
      auto& g = autodiff::grad_acc(xd);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += mk[i] * od->grad[i];
    });
  }
  return out;
}

// --- edge response -------------------------------------------------------------------

namespace {

// Sorted-by-x traversal order of a 1-D profile.
std::vector<std::size_t> x_order(const PointCloud& profile) {
  std::vector<std::size_t> order(profile.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return profile.positions[a][0] < profile.positions[b][0];
  });
  return order;
}

std::size_t steepest_pair(const std::vector<double>& u, const std::vector<double>& x) {
  std::size_t best = 0;
  double best_g = -1.0;
  for (std::size_t i = 0; i + 1 < u.size(); ++i) {
    double g = std::abs((u[i + 1] - u[i]) / (x[i + 1] - x[i]));
    if (g > best_g) {
      best_g = g;
      best = i;
    }
  }
  return best;
}

}  // namespace

double edge_gradient_delta(const PointCloud& profile, double w) {
  if (profile.size() < 8) throw ContractError("edge profile needs at least 8 samples");
  if (profile.feature_dim != 1) throw ContractError("edge profile must be single-channel");
  auto order = x_order(profile);
  std::vector<double> x(profile.size()), u0(profile.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    x[i] = profile.positions[order[i]][0];
    u0[i] = profile.features[order[i]];
  }
  for (std::size_t i = 0; i + 1 < u0.size(); ++i) {
    if (u0[i + 1] < u0[i]) throw ContractError("edge profile must be monotone along x");
  }

  DiffusionUnitSpec spec;
  spec.channels = 1;
  spec.neighbors = 2;
  spec.enable_phi = true;
  spec.enable_varphi = false;
  DiffusionUnit du = DiffusionUnit::make(spec);
  du.phi = PhiFilter::scaled_identity(1, w);

  Tensor u = Tensor::matrix(profile.size(), 1, profile.features);
  NeighborIndex nbrs = knn_excluding_self(profile.positions, 2);
  Tensor u1 = du.step(u, nbrs, /*training=*/false);

  std::vector<double> u1s(profile.size());
  for (std::size_t i = 0; i < order.size(); ++i) u1s[i] = u1.values()[order[i]];

  std::size_t p = steepest_pair(u0, x);
  double g_before = std::abs((u0[p + 1] - u0[p]) / (x[p + 1] - x[p]));
  double g_after = std::abs((u1s[p + 1] - u1s[p]) / (x[p + 1] - x[p]));
  return g_after - g_before;
}

int edge_response_sign(const PointCloud& profile, double w) {
  double delta = edge_gradient_delta(profile, w);
  if (delta > 0.0) return 1;
  if (delta < 0.0) return -1;
  return 0;
}

}  // namespace dunet
