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

#include "dunet/diffusion_lab.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dunet/errors.hpp"

namespace dunet {

DiffusivityFn DiffusivityFn::constant(double v) {
  DiffusivityFn g;
  g.kind = Kind::kConstant;
  g.value = v;
  return g;
}

DiffusivityFn DiffusivityFn::perona_malik(double lambda) {
  if (lambda <= 0.0) throw ArgumentError("perona-malik contrast parameter must be positive");
  DiffusivityFn g;
  g.kind = Kind::kPeronaMalik;
  g.lambda = lambda;
  return g;
}

double DiffusivityFn::operator()(double s) const {
  switch (kind) {
    case Kind::kConstant: return value;
    case Kind::kPeronaMalik: return 1.0 / (1.0 + (s * s) / (lambda * lambda));
  }
  return value;
}

double DiffusivityFn::max_magnitude() const {
  return kind == Kind::kConstant ? std::abs(value) : 1.0;
}

void classic_diffusion_step(PointCloud& cloud, const NeighborIndex& nbrs,
                            const DiffusivityFn& g, double tau) {
  if (tau <= 0.0) throw ArgumentError("diffusion step size must be positive");
  if (tau * g.max_magnitude() > 1.0 + 1e-12) {
    throw StabilityError("explicit diffusion step unstable: tau * max|g| = " +
                         std::to_string(tau * g.max_magnitude()) + " > 1");
  }
  if (cloud.features.empty()) throw ArgumentError("classic_diffusion_step needs features");
  std::size_t d = cloud.feature_dim;
  if (nbrs.num_centers() != cloud.size()) {
    throw ContractError("diffusion neighborhoods must cover every point");
  }

  std::vector<double> next(cloud.features.size());
  std::vector<double> diff(d);
  for (std::size_t s = 0; s < nbrs.num_centers(); ++s) {
    std::size_t center = nbrs.centers[s];
    const double* us = cloud.features.data() + center * d;
    std::vector<double> acc(d, 0.0);
    for (std::size_t r = nbrs.offsets[s]; r < nbrs.offsets[s + 1]; ++r) {
      const double* un = cloud.features.data() + nbrs.indices[r] * d;
      for (std::size_t c = 0; c < d; ++c) diff[c] = un[c] - us[c];
      double gv;
      if (g.kind == DiffusivityFn::Kind::kConstant) {
        gv = g.value;
      } else {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) norm2 += diff[c] * diff[c];
        gv = g(std::sqrt(norm2));
      }
      for (std::size_t c = 0; c < d; ++c) acc[c] += gv * diff[c];
    }
    double cnt = static_cast<double>(nbrs.count(s));
    for (std::size_t c = 0; c < d; ++c) next[center * d + c] = us[c] + tau * (acc[c] / cnt);
  }
  cloud.features = std::move(next);
}

namespace {

std::pair<int, int> two_labels(const PointCloud& cloud) {
  if (!cloud.has_labels()) throw ArgumentError("contrast ratio needs a labeled cloud");
  std::set<int> uniq(cloud.labels.begin(), cloud.labels.end());
  if (uniq.size() != 2) {
    throw ArgumentError("contrast ratio needs exactly two regions, found " +
                        std::to_string(uniq.size()));
  }
  auto it = uniq.begin();
  int a = *it++;
  return {a, *it};
}

}  // namespace

double region_contrast(const PointCloud& cloud) {
  auto [la, lb] = two_labels(cloud);
  std::size_t d = cloud.feature_dim;
  std::vector<double> ma(d, 0.0), mb(d, 0.0);
  std::size_t na = 0, nb = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double* f = cloud.features.data() + i * d;
    if (cloud.labels[i] == la) {
      ++na;
      for (std::size_t c = 0; c < d; ++c) ma[c] += f[c];
    } else {
      ++nb;
      for (std::size_t c = 0; c < d; ++c) mb[c] += f[c];
    }
  }
  double norm2 = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    double delta = ma[c] / static_cast<double>(na) - mb[c] / static_cast<double>(nb);
    norm2 += delta * delta;
  }
  return std::sqrt(norm2);
}

DiffusionRun run_classic_diffusion(const PointCloud& cloud, const NeighborIndex& nbrs,
                                   const DiffusivityFn& g, double tau, std::size_t steps,
                                   bool keep_snapshots) {
  PointCloud work = cloud;
  DiffusionRun run;
  run.tau = tau;
  run.steps = steps;
  bool labeled = work.has_labels();
  double base = labeled ? region_contrast(work) : 0.0;
  if (labeled && base == 0.0) throw ArgumentError("initial inter-region contrast is zero");
  if (keep_snapshots) run.snapshots.push_back(work.features);
  if (labeled) run.contrast.push_back({0, 1.0});
  for (std::size_t t = 1; t <= steps; ++t) {
    classic_diffusion_step(work, nbrs, g, tau);
    if (keep_snapshots) run.snapshots.push_back(work.features);
    if (labeled) run.contrast.push_back({t, region_contrast(work) / base});
  }
  return run;
}

const std::vector<std::pair<std::size_t, double>>& contrast_ratio(const DiffusionRun& run) {
  if (run.contrast.empty()) {
    throw ArgumentError("run has no contrast series; the input cloud was unlabeled");
  }
  return run.contrast;
}

PointCloud step_edge_profile(std::size_t n, double sharpness) {
  if (n < 8) throw ArgumentError("step edge profile needs at least 8 samples");
  PointCloud cloud;
  cloud.name = "step-edge";
  cloud.feature_dim = 1;
  cloud.positions.resize(n);
  cloud.features.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double x = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    cloud.positions[i] = {x, 0.0, 0.0};
    cloud.features[i] = std::tanh(sharpness * x);
  }
  return cloud;
}

}  // namespace dunet
