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

// Acceptance suite: one self-contained check per shipping criterion, one
// PASS/FAIL line each, nonzero exit when anything fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/data.hpp"
#include "dunet/diffusion_lab.hpp"
#include "dunet/layers.hpp"
#include "dunet/model.hpp"
#include "dunet/train.hpp"
#include "support.hpp"

using namespace dunet;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, double seconds,
            const std::string& detail) {
  std::printf("%s criterion %d: %s (%.1fs) %s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
              seconds, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

void run_criterion(int id, const std::string& name,
                   const std::function<bool(std::string&)>& body) {
  auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(id, name, pass, secs, detail);
}

std::vector<Tensor> params_of(Model& model) {
  std::vector<Tensor> out;
  for (const auto& [p, t] : model.params()) out.push_back(t);
  return out;
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.positions = testsup::random_points(n, rng);
  return cloud;
}

ModelConfig toy_cfg(ModelConfig::Task task) {
  ModelConfig cfg;
  cfg.task = task;
  cfg.widths = {4, 4, 4, 4};
  cfg.neighbors = 4;
  cfg.kernel_points = 3;
  cfg.kpconv_radius = 0.4;
  cfg.kpconv_cap = 8;
  cfg.head_widths = {8};
  cfg.seg_head_width = 4;
  cfg.num_classes = 3;
  cfg.num_parts = 2;
  cfg.init_seed = 21;
  return cfg;
}

// --- criterion 1: gradient integrity -------------------------------------------

bool layer_gradients_ok(double& worst) {
  Rng rng(301);
  worst = 0.0;

  {  // phi
    PhiFilter phi = PhiFilter::make(4);
    for (double& w : phi.weight.values()) w = rng.uniform(-1, 1);
    Tensor x = testsup::random_tensor({6, 4}, rng);
    x.set_requires_grad(true);
    Tensor probe = testsup::random_tensor({6, 4}, rng);
    worst = std::max(worst, testsup::max_grad_error({x, phi.weight}, [&]() {
      return sum_all(mul(phi.apply(x), probe));
    }));
  }
  {  // varphi = BN + ReLU
    VarphiWrapper vp = VarphiWrapper::make(3);
    vp.bn.gamma.values() = {0.8, 1.3, 1.0};
    vp.bn.beta.values() = {0.1, 0.0, -0.2};
    Tensor x = testsup::random_tensor({8, 3}, rng);
    x.set_requires_grad(true);
    Tensor probe = testsup::random_tensor({8, 3}, rng);
    worst = std::max(worst, testsup::max_grad_error({x, vp.bn.gamma, vp.bn.beta}, [&]() {
      return sum_all(mul(vp.apply(x, true, false), probe));
    }));
  }
  {  // diffusion unit
    auto pts = testsup::random_points(10, rng);
    NeighborIndex nbrs = knn_excluding_self(pts, 4);
    DiffusionUnitSpec spec;
    spec.channels = 3;
    spec.neighbors = 4;
    DiffusionUnit du = DiffusionUnit::make(spec);
    for (double& w : du.phi.weight.values()) w = rng.uniform(-1, 1);
    Tensor u = testsup::random_tensor({10, 3}, rng);
    u.set_requires_grad(true);
    Tensor probe = testsup::random_tensor({10, 3}, rng);
    worst = std::max(worst,
                     testsup::max_grad_error(
                         {u, du.phi.weight, du.varphi.bn.gamma, du.varphi.bn.beta}, [&]() {
                           return sum_all(mul(du.forward(u, nbrs, true, false), probe));
                         }));
  }
  {  // rpe + kpconv-l
    KPConvLSpec spec;
    spec.d_in = 2;
    spec.d_out = 4;
    spec.disposition = KernelDisposition::fibonacci(5, 0.8);
    KPConvL conv = KPConvL::make(spec);
    for (double& w : conv.weights.values()) w = rng.uniform(-1, 1);
    for (double& w : conv.rpe.weight.values()) w = rng.uniform(-1, 1);
    auto pts = testsup::random_points(12, rng, 0.5);
    auto center_ids = farthest_point_sample(pts, 4);
    std::vector<Vec3> centers;
    for (std::size_t id : center_ids) centers.push_back(pts[id]);
    NeighborIndex nbrs = radius_neighbors(centers, pts, 0.6, 8);
    for (std::size_t i = 0; i < center_ids.size(); ++i) nbrs.centers[i] = center_ids[i];
    Tensor u = testsup::random_tensor({12, 2}, rng);
    u.set_requires_grad(true);
    Tensor probe = testsup::random_tensor({4, 4}, rng);
    worst = std::max(worst,
                     testsup::max_grad_error({u, conv.weights, conv.rpe.weight, conv.rpe.bias},
                                             [&]() {
                                               return sum_all(
                                                   mul(conv.forward(u, pts, nbrs), probe));
                                             }));
  }
  {  // pooling
    Tensor u = testsup::random_tensor({9, 5}, rng);
    u.set_requires_grad(true);
    Tensor probe = testsup::random_tensor({1, 5}, rng);
    worst = std::max(worst, testsup::max_grad_error({u}, [&]() {
      return sum_all(mul(global_max_pool(u), probe));
    }));
  }
  {  // head block: linear -> bn -> relu -> scores -> cross entropy
    Linear fc = Linear::make(5, 6, false);
    fc.init_kaiming(rng);
    BNState bn = BNState::make(6);
    Linear out = Linear::make(6, 3, true);
    out.init_kaiming(rng);
    Tensor x = testsup::random_tensor({7, 5}, rng);
    x.set_requires_grad(true);
    std::vector<int> labels{0, 1, 2, 0, 1, 2, 0};
    worst = std::max(worst,
                     testsup::max_grad_error(
                         {x, fc.weight, bn.gamma, bn.beta, out.weight, out.bias}, [&]() {
                           Tensor h = relu(batch_stats_normalize(fc.apply(x), bn, true, false));
                           return cross_entropy(out.apply(h), labels);
                         }));
  }
  return worst < 1e-4;
}

bool model_gradients_ok(double& worst) {
  worst = 0.0;
  for (auto task : {ModelConfig::Task::kClassification, ModelConfig::Task::kSegmentation}) {
    ModelConfig cfg = toy_cfg(task);
    Model model = Model::build(cfg);
    // Jitter every parameter off the structured init: zero biases plus
    // ReLU-clipped features put RPE pre-activations exactly on the kink,
    // where the subgradient convention and the difference quotient
    // legitimately disagree.
    Rng jitter(500);
    for (const auto& [path, t] : model.params()) {
      Tensor p = t;
      for (double& v : p.values()) v += jitter.uniform(-0.1, 0.1);
    }
    PointCloud c1 = random_cloud(16, 401);
    PointCloud c2 = random_cloud(16, 402);
    GeometryPlan plan = build_geometry(cfg, {&c1, &c2});
    std::vector<int> targets;
    if (task == ModelConfig::Task::kClassification) {
      targets = {0, 2};
    } else {
      targets.assign(32, 0);
      for (std::size_t i = 0; i < 32; ++i) targets[i] = static_cast<int>(i % 2);
    }
    auto loss = [&]() {
      Tensor logits = model.forward(plan, ForwardOptions::frozen_train());
      return cross_entropy(logits, targets);
    };
    worst = std::max(worst, testsup::max_grad_error(params_of(model), loss, 1e-5));
  }
  return worst < 1e-3;
}

// --- criteria 8 and 9 share the trained models -----------------------------------

struct AblationOutcome {
  std::vector<double> full_miou;   // enable_phi + enable_varphi, per seed
  std::vector<double> plain_miou;  // neither, per seed
  std::vector<double> ratio_before;  // boundary/interior smoothness, full models
  std::vector<double> ratio_after;
  std::vector<double> up2_before;  // context: the same probe one hop earlier
  std::vector<double> up2_after;
  double seconds = 0.0;
};

ModelConfig ablation_cfg(bool full, std::uint64_t init_seed) {
  ModelConfig cfg;
  cfg.task = ModelConfig::Task::kSegmentation;
  cfg.widths = {8, 16, 32, 64};
  cfg.neighbors = 16;
  cfg.kernel_points = 9;
  cfg.kpconv_radius = 0.2;
  cfg.kpconv_cap = 16;
  cfg.seg_head_width = 16;
  cfg.enable_phi = full;
  cfg.enable_varphi = full;
  cfg.num_parts = 2;
  cfg.dropout = 0.2;
  cfg.init_seed = init_seed;
  return cfg;
}

AblationOutcome run_ablation() {
  auto t0 = std::chrono::steady_clock::now();
  AblationOutcome out;

  // Three fully independent replicas: each seed draws its own dataset,
  // initialization, and training randomness.
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticSpec spec;
    spec.family = SyntheticSpec::Family::kSegComposites;
    spec.points = 512;
    spec.per_class = 100;
    spec.noise = 0.02;
    spec.seed = 10 + seed;
    Dataset data = split_dataset(generate(spec), ModelConfig::Task::kSegmentation, 2);

    for (bool full : {true, false}) {
      ModelConfig cfg = ablation_cfg(full, seed * 10 + 1);
      TrainConfig tc;
      tc.optimizer = TrainConfig::Optimizer::kSgdMomentum;
      tc.lr = 0.1;
      tc.momentum = 0.9;
      tc.epochs = 40;
      tc.batch_size = 4;
      tc.seed = seed;
      tc.lr_decay = 0.5;
      tc.lr_interval = 20;
      tc.eval_interval = 40;
      tc.augment.anisotropic = true;
      tc.augment.scale_lo = 0.8;
      tc.augment.scale_hi = 1.2;
      tc.augment.translation = 0.1;

      Model model = Model::build(cfg);
      auto params = params_of(model);
      OptState opt = OptState::for_params(params);
      FitResult r = fit(model, data, tc, opt);
      if (full) {
        out.full_miou.push_back(r.final_val_metric);
        // Boundary/interior smoothness ratio around a DU, pooled over the
        // validation clouds.
        auto probe_ratio = [&](const std::string& du_path, std::vector<double>& before,
                               std::vector<double>& after) {
          double b_bnd = 0, b_int = 0, a_bnd = 0, a_int = 0;
          std::size_t n_bnd = 0, n_int = 0;
          for (const PointCloud& cloud : data.val) {
            SmoothnessReport rep = model.smoothness_probe(cloud, du_path);
            for (std::size_t i = 0; i < rep.before.size(); ++i) {
              if (!rep.boundary.empty() && rep.boundary[i]) {
                b_bnd += rep.before[i];
                a_bnd += rep.after[i];
                ++n_bnd;
              } else {
                b_int += rep.before[i];
                a_int += rep.after[i];
                ++n_int;
              }
            }
          }
          before.push_back((b_bnd / static_cast<double>(n_bnd)) /
                           (b_int / static_cast<double>(n_int)));
          after.push_back((a_bnd / static_cast<double>(n_bnd)) /
                          (a_int / static_cast<double>(n_int)));
        };
        probe_ratio(model.du_paths().back(), out.ratio_before, out.ratio_after);
        probe_ratio("decoder/up2/du", out.up2_before, out.up2_after);
      } else {
        out.plain_miou.push_back(r.final_val_metric);
      }
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

double median3(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[1];
}

// --- cli helpers ----------------------------------------------------------------

const fs::path kWork = fs::temp_directory_path() / "dunet_acceptance";

int run_cli(const std::string& args) {
  std::string cmd =
      std::string(DUNET_CLI_PATH) + " " + args + " > " + (kWork / "cli.log").string() + " 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  std::printf("dunet acceptance suite\n");

  run_criterion(1, "gradient integrity across layers and the toy model", [](std::string& d) {
    auto t0 = std::chrono::steady_clock::now();
    double layer_worst = 0.0, model_worst = 0.0;
    bool layers_ok = layer_gradients_ok(layer_worst);
    bool model_ok = model_gradients_ok(model_worst);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "layer rel err " << layer_worst << " (<1e-4), model rel err " << model_worst
       << " (<1e-3)";
    d = os.str();
    return layers_ok && model_ok && secs < 60.0;
  });

  run_criterion(2, "constant fields are exact DU fixed points", [](std::string& d) {
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed * 7 + 1);
      std::size_t dch = 1 + rng.below(8);
      std::size_t n = 6 + rng.below(20);
      DiffusionUnitSpec spec;
      spec.channels = dch;
      spec.neighbors = 3;
      DiffusionUnit du = DiffusionUnit::make(spec);
      for (double& w : du.phi.weight.values()) w = rng.uniform(-2, 2);
      for (double& g : du.varphi.bn.gamma.values()) g = rng.uniform(0.1, 3.0);
      auto pts = testsup::random_points(n, rng);
      NeighborIndex nbrs = knn_excluding_self(pts, 3);
      Tensor u = Tensor::full({n, dch}, rng.uniform(-5, 5));
      Tensor out = du.step(u, nbrs, true, false);
      for (std::size_t i = 0; i < out.numel(); ++i) {
        worst = std::max(worst, std::abs(out.values()[i] - u.values()[i]));
      }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "max |du(const) - const| = " << worst << " over 100 seeds";
    d = os.str();
    return worst < 1e-12 && secs < 5.0;
  });

  run_criterion(3, "edge response sign equals -sign(w)", [](std::string& d) {
    auto t0 = std::chrono::steady_clock::now();
    PointCloud profile = step_edge_profile(64, 4.0);
    bool ok = true;
    std::ostringstream os;
    for (double w : {-0.5, -0.1, 0.1, 0.5}) {
      double delta = edge_gradient_delta(profile, w);
      int want = w < 0 ? 1 : -1;
      int got = delta > 0 ? 1 : (delta < 0 ? -1 : 0);
      ok = ok && got == want;
      os << "w=" << w << " delta=" << delta << "; ";
    }
    double zero = edge_gradient_delta(profile, 0.0);
    ok = ok && std::abs(zero) <= 1e-12;
    os << "w=0 delta=" << zero;
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    d = os.str();
    return ok && secs < 1.0;
  });

  run_criterion(4, "DU with linear phi equals the classic stepper bit-exactly",
                [](std::string& d) {
    Rng rng(404);
    std::size_t checked = 0;
    for (std::size_t n : {16, 64, 256, 512}) {
      std::size_t dch = 1 + rng.below(4);
      PointCloud cloud;
      cloud.feature_dim = dch;
      cloud.positions = testsup::random_points(n, rng);
      cloud.features.resize(n * dch);
      for (double& f : cloud.features) f = rng.uniform(-2, 2);
      NeighborIndex nbrs = knn_excluding_self(cloud.positions, std::min<std::size_t>(8, n - 1));
      double w = rng.uniform(-1.0, 1.0);

      DiffusionUnitSpec spec;
      spec.channels = dch;
      spec.neighbors = 8;
      spec.enable_varphi = false;
      DiffusionUnit du = DiffusionUnit::make(spec);
      du.phi = PhiFilter::scaled_identity(dch, w);
      Tensor out = du.step(Tensor::matrix(n, dch, cloud.features), nbrs, false);

      PointCloud classic = cloud;
      classic_diffusion_step(classic, nbrs, DiffusivityFn::constant(w), 1.0);
      for (std::size_t i = 0; i < classic.features.size(); ++i) {
        if (out.values()[i] != classic.features[i]) {
          d = "mismatch at cloud size " + std::to_string(n);
          return false;
        }
        ++checked;
      }
    }
    d = std::to_string(checked) + " values compared bit-exactly";
    return true;
  });

  run_criterion(5, "perona-malik preserves contrast where the heat kernel mixes",
                [](std::string& d) {
    auto t0 = std::chrono::steady_clock::now();
    Rng rng(17);
    PointCloud sheet;
    sheet.feature_dim = 1;
    for (std::size_t i = 0; i < 400; ++i) {
      double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
      sheet.positions.push_back({x, y, 0});
      sheet.labels.push_back(x < 0 ? 0 : 1);
      sheet.features.push_back(x < 0 ? -1.0 : 1.0);
    }
    NeighborIndex nbrs = knn_excluding_self(sheet.positions, 12);
    DiffusionRun heat = run_classic_diffusion(sheet, nbrs, DiffusivityFn::constant(), 0.9, 50);
    double lambda = 0.1 * region_contrast(sheet);
    DiffusionRun pm =
        run_classic_diffusion(sheet, nbrs, DiffusivityFn::perona_malik(lambda), 0.9, 50);
    double heat_final = contrast_ratio(heat).back().second;
    double pm_final = contrast_ratio(pm).back().second;
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << "pm " << pm_final << " (>0.9), const " << heat_final << " (<0.49 frozen)";
    d = os.str();
    // 0.49 frozen from the first verified run of this seeded setup (0.4847).
    return pm_final > 0.9 && heat_final < 0.49 && secs < 10.0;
  });

  run_criterion(6, "depthwise weight count is exactly l x d_out", [](std::string& d) {
    ModelConfig cfg;  // default widths 64,128,256,512 with l = 15
    cfg.task = ModelConfig::Task::kClassification;
    Model model = Model::build(cfg);
    bool ok = true;
    for (std::size_t stage = 1; stage <= 4; ++stage) {
      ok = ok && model.depthwise_weight_count(stage) == 15 * cfg.widths[stage - 1];
    }
    ok = ok && model.depthwise_weight_count() == 14400;
    d = "total " + std::to_string(model.depthwise_weight_count()) + " (expect 14400)";
    return ok;
  });

  run_criterion(7, "invariance suite and brute-force geometry agreement", [](std::string& d) {
    ModelConfig cls_cfg = toy_cfg(ModelConfig::Task::kClassification);
    cls_cfg.widths = {8, 8, 8, 8};
    Model cls = Model::build(cls_cfg);
    PointCloud cloud = random_cloud(64, 700);
    Tensor base = cls.forward_classify(cloud);

    Rng rng(701);
    std::vector<std::size_t> perm(cloud.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);
    PointCloud shuffled = cloud;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      shuffled.positions[i] = cloud.positions[perm[i]];
    }
    double cls_diff = 0.0;
    Tensor permuted = cls.forward_classify(shuffled);
    for (std::size_t j = 0; j < base.numel(); ++j) {
      cls_diff = std::max(cls_diff, std::abs(base.values()[j] - permuted.values()[j]));
    }

    ModelConfig seg_cfg = toy_cfg(ModelConfig::Task::kSegmentation);
    seg_cfg.widths = {8, 8, 8, 8};
    Model seg = Model::build(seg_cfg);
    Tensor sbase = seg.forward_segment(cloud);
    Tensor sperm = seg.forward_segment(shuffled);
    double seg_diff = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      for (std::size_t c = 0; c < 2; ++c) {
        seg_diff = std::max(seg_diff, std::abs(sperm.at(i, c) - sbase.at(perm[i], c)));
      }
    }

    Rng grng(702);
    auto source = testsup::random_points(2048, grng);
    auto query = testsup::random_points(128, grng);
    auto fast_k = knn(query, source, 16);
    auto slow_k = testsup::brute_knn(query, source, 16);
    auto fast_r = radius_neighbors(query, source, 0.3, 32);
    auto slow_r = testsup::brute_radius(query, source, 0.3, 32);
    bool geom_ok = fast_k.indices == slow_k.indices && fast_k.offsets == slow_k.offsets &&
                   fast_r.indices == slow_r.indices && fast_r.offsets == slow_r.offsets;

    std::ostringstream os;
    os << "cls diff " << cls_diff << ", seg diff " << seg_diff << " (<1e-6), geometry "
       << (geom_ok ? "exact" : "MISMATCH");
    d = os.str();
    return cls_diff < 1e-6 && seg_diff < 1e-6 && geom_ok;
  });

  AblationOutcome ab = run_ablation();

  run_criterion(8, "phi+varphi beats the stripped DU by one mIoU point", [&](std::string& d) {
    double full_med = median3(ab.full_miou);
    double plain_med = median3(ab.plain_miou);
    std::ostringstream os;
    os << "median full " << full_med << " vs plain " << plain_med << " (gap "
       << (full_med - plain_med) * 100.0 << " pts, need >= 1.0) in " << ab.seconds << "s";
    d = os.str();
    return full_med - plain_med >= 0.01 && ab.seconds < 900.0;
  });

  run_criterion(9, "boundary smoothness ratio rises after the final decoder DU",
                [&](std::string& d) {
    int rising = 0;
    std::ostringstream os;
    for (std::size_t s = 0; s < ab.ratio_before.size(); ++s) {
      rising += ab.ratio_after[s] > ab.ratio_before[s] ? 1 : 0;
      os << "seed" << s + 1 << " " << ab.ratio_before[s] << "->" << ab.ratio_after[s] << "; ";
    }
    os << "(context decoder/up2:";
    for (std::size_t s = 0; s < ab.up2_before.size(); ++s) {
      os << " " << ab.up2_before[s] << "->" << ab.up2_after[s];
    }
    os << ")";
    d = os.str();
    return rising >= 2;
  });

  run_criterion(10, "engineering round trips", [](std::string& d) {
    fs::remove_all(kWork);
    fs::create_directories(kWork);

    // Checkpoint save/load reproduces eval logits bit-exactly.
    ModelConfig cfg = toy_cfg(ModelConfig::Task::kClassification);
    Model model = Model::build(cfg);
    PointCloud cloud = random_cloud(48, 1000);
    // Move the BN statistics off their defaults first (no dropout: this
    // forward only feeds the running estimates).
    GeometryPlan plan = build_geometry(cfg, {&cloud, &cloud});
    ForwardOptions warm;
    warm.training = true;
    warm.update_running = true;
    warm.dropout_active = false;
    model.forward(plan, warm);
    Tensor before = model.forward_classify(cloud);
    save_checkpoint(snapshot(model, nullptr, "echo", 3), (kWork / "m.ckpt").string());
    Model fresh = Model::build(cfg);
    restore_into(fresh, nullptr, load_checkpoint((kWork / "m.ckpt").string()));
    Tensor after = fresh.forward_classify(cloud);
    bool ckpt_ok = before.values() == after.values();

    // .duc round trip is value-exact.
    SyntheticSpec spec;
    spec.family = SyntheticSpec::Family::kSegComposites;
    spec.points = 128;
    spec.per_class = 1;
    spec.noise = 0.01;
    spec.seed = 2;
    PointCloud sample = generate(spec)[0];
    write_cloud(sample, (kWork / "c.duc").string());
    PointCloud reread = read_cloud((kWork / "c.duc").string());
    bool duc_ok = reread.positions == sample.positions && reread.features == sample.features &&
                  reread.labels == sample.labels;

    // Seeded CLI reruns produce identical CSVs.
    bool cli_ok = run_cli("gen-data --family seg --n 96 --per-class 3 --noise 0.01 --seed 4 "
                          "--out " +
                          (kWork / "data").string()) == 0;
    if (cli_ok) {
      std::string cloud_file;
      for (const auto& e : fs::directory_iterator(kWork / "data")) {
        if (e.path().extension() == ".duc") {
          cloud_file = e.path().string();
          break;
        }
      }
      cli_ok = run_cli("edge-experiment --weights -0.5,-0.1,0.1,0.5 --points 64 --out " +
                       (kWork / "e1.csv").string()) == 0 &&
               run_cli("edge-experiment --weights -0.5,-0.1,0.1,0.5 --points 64 --out " +
                       (kWork / "e2.csv").string()) == 0 &&
               run_cli("diffuse --diffusivity pm --lambda 0.2 --steps 20 --tau 0.9 --cloud " +
                       cloud_file + " --out " + (kWork / "d1.csv").string()) == 0 &&
               run_cli("diffuse --diffusivity pm --lambda 0.2 --steps 20 --tau 0.9 --cloud " +
                       cloud_file + " --out " + (kWork / "d2.csv").string()) == 0;
      cli_ok = cli_ok && slurp(kWork / "e1.csv") == slurp(kWork / "e2.csv") &&
               slurp(kWork / "d1.csv") == slurp(kWork / "d2.csv") &&
               !slurp(kWork / "e1.csv").empty();
    }

    std::ostringstream os;
    os << "checkpoint " << (ckpt_ok ? "exact" : "MISMATCH") << ", duc "
       << (duc_ok ? "exact" : "MISMATCH") << ", cli reruns "
       << (cli_ok ? "identical" : "MISMATCH");
    d = os.str();
    return ckpt_ok && duc_ok && cli_ok;
  });

  std::printf("%s: %d of 10 criteria failed\n", g_failures == 0 ? "SUCCESS" : "FAILURE",
              g_failures);
  return g_failures == 0 ? 0 : 1;
}
