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

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <thread>

#include "dunet/data.hpp"
#include "dunet/errors.hpp"
#include "dunet/model.hpp"
#include "support.hpp"

using namespace dunet;
using testsup::random_points;

namespace {

ModelConfig toy_config(ModelConfig::Task task) {
  ModelConfig cfg;
  cfg.task = task;
  cfg.widths = {8, 8, 8, 8};
  cfg.neighbors = 4;
  cfg.kernel_points = 5;
  cfg.kpconv_radius = 0.4;
  cfg.kpconv_cap = 8;
  cfg.head_widths = {16, 8};
  cfg.seg_head_width = 8;
  cfg.num_classes = 3;
  cfg.num_parts = 2;
  cfg.dropout = 0.5;
  cfg.init_seed = 5;
  return cfg;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed, bool labeled = false) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.positions = random_points(n, rng);
  if (labeled) {
    cloud.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) cloud.labels[i] = cloud.positions[i][0] > 0 ? 1 : 0;
  }
  return cloud;
}

}  // namespace

TEST_CASE("model build is deterministic under cfg and seed") {
  ModelConfig cfg = toy_config(ModelConfig::Task::kClassification);
  Model a = Model::build(cfg);
  Model b = Model::build(cfg);
  REQUIRE(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    CHECK(a.params()[i].first == b.params()[i].first);
    CHECK(a.params()[i].second.values() == b.params()[i].second.values());
  }
  cfg.init_seed = 6;
  Model c = Model::build(cfg);
  CHECK(a.params()[0].second.values() != c.params()[0].second.values());
}

TEST_CASE("classification output shape is B x C") {
  Model model = Model::build(toy_config(ModelConfig::Task::kClassification));
  PointCloud c1 = random_cloud(32, 1);
  PointCloud c2 = random_cloud(32, 2);
  Tensor logits = model.forward({&c1, &c2}, ForwardOptions::eval());
  CHECK(logits.shape() == Shape{2, 3});
}

TEST_CASE("depthwise parameter totals follow l x d_out") {
  ModelConfig cfg;  // defaults: widths 64,128,256,512, l = 15
  cfg.task = ModelConfig::Task::kClassification;
  Model model = Model::build(cfg);
  CHECK(model.depthwise_weight_count(1) == 15 * 64);
  CHECK(model.depthwise_weight_count(2) == 15 * 128);
  CHECK(model.depthwise_weight_count(3) == 15 * 256);
  CHECK(model.depthwise_weight_count(4) == 15 * 512);
  CHECK(model.depthwise_weight_count() == 14400);
}

TEST_CASE("eval forward is a pure function") {
  Model model = Model::build(toy_config(ModelConfig::Task::kClassification));
  PointCloud cloud = random_cloud(48, 3);
  Tensor a = model.forward_classify(cloud);
  Tensor b = model.forward_classify(cloud);
  CHECK(a.values() == b.values());
}

TEST_CASE("classification logits are permutation invariant") {
  Model model = Model::build(toy_config(ModelConfig::Task::kClassification));
  PointCloud cloud = random_cloud(40, 4);
  Tensor base = model.forward_classify(cloud);

  Rng rng(99);
  std::vector<std::size_t> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  PointCloud shuffled = cloud;
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.positions[i] = cloud.positions[perm[i]];
  Tensor permuted = model.forward_classify(shuffled);
  for (std::size_t j = 0; j < base.numel(); ++j) {
    CHECK(std::abs(base.values()[j] - permuted.values()[j]) < 1e-6);
  }
}

TEST_CASE("segmentation logits are permutation equivariant") {
  Model model = Model::build(toy_config(ModelConfig::Task::kSegmentation));
  PointCloud cloud = random_cloud(40, 5);
  Tensor base = model.forward_segment(cloud);
  REQUIRE(base.shape() == Shape{40, 2});

  Rng rng(100);
  std::vector<std::size_t> perm(cloud.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  PointCloud shuffled = cloud;
  for (std::size_t i = 0; i < perm.size(); ++i) shuffled.positions[i] = cloud.positions[perm[i]];
  Tensor permuted = model.forward_segment(shuffled);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < 2; ++c) {
      CHECK(std::abs(permuted.at(i, c) - base.at(perm[i], c)) < 1e-6);
    }
  }
}

TEST_CASE("duplicated cloud in an eval batch yields identical rows") {
  Model model = Model::build(toy_config(ModelConfig::Task::kClassification));
  PointCloud cloud = random_cloud(36, 6);
  Tensor logits = model.forward({&cloud, &cloud}, ForwardOptions::eval());
  for (std::size_t c = 0; c < 3; ++c) CHECK(logits.at(0, c) == logits.at(1, c));
}

TEST_CASE("translation changes the logits (coordinates are features)") {
  Model model = Model::build(toy_config(ModelConfig::Task::kClassification));
  PointCloud cloud = random_cloud(36, 7);
  PointCloud moved = cloud;
  for (Vec3& p : moved.positions) p[0] += 2.5;
  Tensor a = model.forward_classify(cloud);
  Tensor b = model.forward_classify(moved);
  double diff = 0.0;
  for (std::size_t j = 0; j < a.numel(); ++j) diff += std::abs(a.values()[j] - b.values()[j]);
  CHECK(diff > 1e-6);
}

TEST_CASE("smoothness formula") {
  // Constant field: zero smoothness.
  NeighborIndex nbrs;
  nbrs.centers = {0, 1, 2};
  nbrs.offsets = {0, 2, 4, 6};
  nbrs.indices = {1, 2, 0, 2, 0, 1};
  Tensor flat = Tensor::full({3, 2}, 3.14);
  for (double s : smoothness_values(flat, nbrs)) CHECK(s == 0.0);

  // f_s = (0,0) with neighbors (1,0) and (0,1): || (1,1) || = sqrt(2).
  NeighborIndex one;
  one.centers = {0};
  one.offsets = {0, 2};
  one.indices = {1, 2};
  Tensor f = Tensor::matrix(3, 2, {0, 0, 1, 0, 0, 1});
  auto vals = smoothness_values(f, one);
  CHECK(vals[0] == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("smoothness probe reports per-point series at the DU resolution") {
  Model model = Model::build(toy_config(ModelConfig::Task::kSegmentation));
  PointCloud cloud = random_cloud(40, 8, /*labeled=*/true);
  auto paths = model.du_paths();
  CHECK(paths.size() == 7);  // 4 encoder + 3 decoder hops

  SmoothnessReport report = model.smoothness_probe(cloud, paths.back());
  CHECK(report.before.size() == cloud.size());  // final hop is at input resolution
  CHECK(report.after.size() == cloud.size());
  CHECK(report.positions.size() == cloud.size());
  CHECK(report.labels.size() == cloud.size());

  SmoothnessReport deep = model.smoothness_probe(cloud, "encoder/stage3/du");
  CHECK(deep.before.size() < cloud.size());
  CHECK(deep.before.size() == deep.positions.size());

  CHECK_THROWS_AS(model.smoothness_probe(cloud, "encoder/stage9/du"), LookupError);
}

TEST_CASE("smoothness of the DU input does not depend on the DU parameters") {
  ModelConfig cfg = toy_config(ModelConfig::Task::kSegmentation);
  Model model = Model::build(cfg);
  PointCloud cloud = random_cloud(40, 9);
  std::string path = "decoder/up3/du";
  SmoothnessReport a = model.smoothness_probe(cloud, path);
  Tensor phi = model.param(path + "/phi/weight");
  for (double& w : phi.values()) w += 0.37;
  SmoothnessReport b = model.smoothness_probe(cloud, path);
  CHECK(a.before == b.before);
  CHECK(a.after != b.after);
}

TEST_CASE("toy end-to-end gradients match finite differences") {
  for (auto task : {ModelConfig::Task::kClassification, ModelConfig::Task::kSegmentation}) {
    CAPTURE(static_cast<int>(task));
    ModelConfig cfg = toy_config(task);
    cfg.widths = {4, 4, 4, 4};
    cfg.head_widths = {8};
    cfg.seg_head_width = 4;
    cfg.kernel_points = 3;
    Model model = Model::build(cfg);
    // Move biases off zero so no ReLU pre-activation sits exactly on the
    // kink, where the difference quotient is not the subgradient.
    Rng jitter(500);
    for (const auto& [path, t] : model.params()) {
      Tensor p = t;
      for (double& v : p.values()) v += jitter.uniform(-0.1, 0.1);
    }
    PointCloud c1 = random_cloud(16, 11);
    PointCloud c2 = random_cloud(16, 12);
    GeometryPlan plan = build_geometry(cfg, {&c1, &c2});

    Tensor probe;
    auto loss = [&]() {
      Tensor logits = model.forward(plan, ForwardOptions::frozen_train());
      if (!probe.defined()) {
        Rng rng(55);
        probe = testsup::random_tensor(logits.shape(), rng);
      }
      return sum_all(mul(logits, probe));
    };
    // Spot-check a few representative parameters end to end.
    std::vector<Tensor> sample;
    for (const auto& [path, t] : model.params()) {
      if (path.find("phi/weight") != std::string::npos ||
          path.find("kpconv/weights") != std::string::npos ||
          path.find("lift/linear") != std::string::npos ||
          path.find("gamma") != std::string::npos) {
        sample.push_back(t);
      }
    }
    REQUIRE(!sample.empty());
    double err = testsup::max_grad_error(sample, loss, 1e-5);
    CHECK(err < 1e-3);
  }
}

TEST_CASE("eval forwards run concurrently on shared parameters") {
  Model model = Model::build(toy_config(ModelConfig::Task::kClassification));
  std::vector<PointCloud> clouds;
  std::vector<Tensor> expected;
  for (std::uint64_t s = 0; s < 4; ++s) {
    clouds.push_back(random_cloud(40, 60 + s));
    expected.push_back(model.forward_classify(clouds.back()));
  }
  std::vector<std::vector<double>> got(4);
  {
    std::vector<std::thread> workers;
    for (std::size_t t = 0; t < 4; ++t) {
      workers.emplace_back([&, t]() { got[t] = model.forward_classify(clouds[t]).values(); });
    }
    for (auto& w : workers) w.join();
  }
  for (std::size_t t = 0; t < 4; ++t) CHECK(got[t] == expected[t].values());
}

TEST_CASE("config validation rejects bad widths") {
  ModelConfig cfg = toy_config(ModelConfig::Task::kClassification);
  cfg.widths = {8, 12, 24, 48};  // 12 not divisible by 8
  CHECK_THROWS_AS(Model::build(cfg), SpecError);
  cfg = toy_config(ModelConfig::Task::kClassification);
  cfg.widths = {8, 8, 8};
  CHECK_THROWS_AS(Model::build(cfg), SpecError);
  cfg = toy_config(ModelConfig::Task::kClassification);
  cfg.ratios = {0.5, 0.5, 0.5, 1.5};
  CHECK_THROWS_AS(Model::build(cfg), SpecError);
}
