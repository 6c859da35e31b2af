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

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/data.hpp"
#include "dunet/diffusion_lab.hpp"
#include "dunet/errors.hpp"
#include "dunet/layers.hpp"
#include "dunet/model.hpp"
#include "dunet/svg.hpp"
#include "dunet/train.hpp"

namespace fs = std::filesystem;

namespace dunet::cli {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// --- flat run configuration ---------------------------------------------------

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t votes = 1;
};

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join_doubles(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt(v[i]);
  return os.str();
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ArgumentError("bad boolean value '" + v + "'");
}

std::string rotation_name(AugmentSpec::Rotation r) {
  switch (r) {
    case AugmentSpec::Rotation::kNone: return "none";
    case AugmentSpec::Rotation::kZAxis: return "z";
    case AugmentSpec::Rotation::kFull: return "full";
  }
  return "none";
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "task = " << (cfg.model.task == ModelConfig::Task::kClassification ? "cls" : "seg")
     << "\n";
  os << "widths = " << join_sizes(cfg.model.widths) << "\n";
  os << "ratios = " << join_doubles(cfg.model.ratios) << "\n";
  os << "neighbors = " << cfg.model.neighbors << "\n";
  os << "kernel_points = " << cfg.model.kernel_points << "\n";
  os << "kpconv_radius = " << fmt(cfg.model.kpconv_radius) << "\n";
  os << "kpconv_cap = " << cfg.model.kpconv_cap << "\n";
  os << "enable_phi = " << (cfg.model.enable_phi ? "true" : "false") << "\n";
  os << "enable_varphi = " << (cfg.model.enable_varphi ? "true" : "false") << "\n";
  os << "du_repeat = " << cfg.model.du_repeat << "\n";
  os << "num_classes = " << cfg.model.num_classes << "\n";
  os << "num_parts = " << cfg.model.num_parts << "\n";
  os << "head_widths = " << join_sizes(cfg.model.head_widths) << "\n";
  os << "seg_head_width = " << cfg.model.seg_head_width << "\n";
  os << "dropout = " << fmt(cfg.model.dropout) << "\n";
  os << "init_seed = " << cfg.model.init_seed << "\n";
  os << "optimizer = "
     << (cfg.train.optimizer == TrainConfig::Optimizer::kAdam ? "adam" : "sgd") << "\n";
  os << "lr = " << fmt(cfg.train.lr) << "\n";
  os << "momentum = " << fmt(cfg.train.momentum) << "\n";
  os << "epochs = " << cfg.train.epochs << "\n";
  os << "batch = " << cfg.train.batch_size << "\n";
  os << "seed = " << cfg.train.seed << "\n";
  os << "lr_decay = " << fmt(cfg.train.lr_decay) << "\n";
  os << "lr_interval = " << cfg.train.lr_interval << "\n";
  os << "eval_interval = " << cfg.train.eval_interval << "\n";
  os << "rotation = " << rotation_name(cfg.train.augment.rotation) << "\n";
  os << "scale_lo = " << fmt(cfg.train.augment.scale_lo) << "\n";
  os << "scale_hi = " << fmt(cfg.train.augment.scale_hi) << "\n";
  os << "anisotropic = " << (cfg.train.augment.anisotropic ? "true" : "false") << "\n";
  os << "translation = " << fmt(cfg.train.augment.translation) << "\n";
  os << "jitter = " << fmt(cfg.train.augment.jitter) << "\n";
  os << "votes = " << cfg.votes << "\n";
  return os.str();
}

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto to_sizes = [&]() {
    std::vector<std::size_t> out;
    for (const auto& tok : split_commas(value)) out.push_back(std::stoull(tok));
    return out;
  };
  auto to_doubles = [&]() {
    std::vector<double> out;
    for (const auto& tok : split_commas(value)) out.push_back(std::stod(tok));
    return out;
  };
  if (key == "task") {
    if (value == "cls") {
      cfg.model.task = ModelConfig::Task::kClassification;
    } else if (value == "seg") {
      cfg.model.task = ModelConfig::Task::kSegmentation;
    } else {
      throw ArgumentError("task must be 'cls' or 'seg', got '" + value + "'");
    }
  } else if (key == "widths") {
    cfg.model.widths = to_sizes();
  } else if (key == "ratios") {
    cfg.model.ratios = to_doubles();
  } else if (key == "neighbors" || key == "k") {
    cfg.model.neighbors = std::stoull(value);
  } else if (key == "kernel_points") {
    cfg.model.kernel_points = std::stoull(value);
  } else if (key == "kpconv_radius") {
    cfg.model.kpconv_radius = std::stod(value);
  } else if (key == "kpconv_cap") {
    cfg.model.kpconv_cap = std::stoull(value);
  } else if (key == "enable_phi") {
    cfg.model.enable_phi = parse_bool(value);
  } else if (key == "enable_varphi") {
    cfg.model.enable_varphi = parse_bool(value);
  } else if (key == "du_repeat") {
    cfg.model.du_repeat = std::stoull(value);
  } else if (key == "num_classes") {
    cfg.model.num_classes = std::stoull(value);
  } else if (key == "num_parts") {
    cfg.model.num_parts = std::stoull(value);
  } else if (key == "head_widths") {
    cfg.model.head_widths = to_sizes();
  } else if (key == "seg_head_width") {
    cfg.model.seg_head_width = std::stoull(value);
  } else if (key == "dropout") {
    cfg.model.dropout = std::stod(value);
  } else if (key == "init_seed") {
    cfg.model.init_seed = std::stoull(value);
  } else if (key == "optimizer") {
    if (value == "adam") {
      cfg.train.optimizer = TrainConfig::Optimizer::kAdam;
    } else if (value == "sgd") {
      cfg.train.optimizer = TrainConfig::Optimizer::kSgdMomentum;
    } else {
      throw ArgumentError("optimizer must be 'adam' or 'sgd', got '" + value + "'");
    }
  } else if (key == "lr") {
    cfg.train.lr = std::stod(value);
  } else if (key == "momentum") {
    cfg.train.momentum = std::stod(value);
  } else if (key == "epochs") {
    cfg.train.epochs = std::stoull(value);
  } else if (key == "batch") {
    cfg.train.batch_size = std::stoull(value);
  } else if (key == "seed") {
    cfg.train.seed = std::stoull(value);
  } else if (key == "lr_decay") {
    cfg.train.lr_decay = std::stod(value);
  } else if (key == "lr_interval") {
    cfg.train.lr_interval = std::stoull(value);
  } else if (key == "eval_interval") {
    cfg.train.eval_interval = std::stoull(value);
  } else if (key == "rotation") {
    if (value == "none") {
      cfg.train.augment.rotation = AugmentSpec::Rotation::kNone;
    } else if (value == "z") {
      cfg.train.augment.rotation = AugmentSpec::Rotation::kZAxis;
    } else if (value == "full") {
      cfg.train.augment.rotation = AugmentSpec::Rotation::kFull;
    } else {
      throw ArgumentError("rotation must be none, z, or full, got '" + value + "'");
    }
  } else if (key == "scale_lo") {
    cfg.train.augment.scale_lo = std::stod(value);
  } else if (key == "scale_hi") {
    cfg.train.augment.scale_hi = std::stod(value);
  } else if (key == "anisotropic") {
    cfg.train.augment.anisotropic = parse_bool(value);
  } else if (key == "translation") {
    cfg.train.augment.translation = std::stod(value);
  } else if (key == "jitter") {
    cfg.train.augment.jitter = std::stod(value);
  } else if (key == "votes") {
    cfg.votes = std::stoull(value);
  } else {
    throw ArgumentError("unknown config key '" + key + "'");
  }
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
  std::istringstream is(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(origin + ": line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    apply_key(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(cfg, ss.str(), path);
}

// --- shared pieces --------------------------------------------------------------

std::vector<PointCloud> load_data_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ArgumentError("data directory '" + dir + "' does not exist");
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".duc") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ArgumentError("no .duc files in '" + dir + "'");
  std::vector<PointCloud> clouds;
  clouds.reserve(files.size());
  for (const auto& f : files) clouds.push_back(read_cloud(f));
  return clouds;
}

void print_resolved(const std::string& header, const std::string& text) {
  std::cout << "# resolved " << header << "\n" << text;
  std::cout.flush();
}

void write_metrics_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open '" + path + "' for writing");
  os << "epoch,split,loss,metric_name,metric_value\n";
  for (const auto& row : log) {
    os << row.epoch << "," << row.split << "," << fmt(row.loss) << "," << row.metric_name << ","
       << fmt(row.metric_value) << "\n";
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt, RunConfig& cfg) {
  apply_config_text(cfg, ckpt.config_text, "checkpoint config");
  Model model = Model::build(cfg.model);
  restore_into(model, nullptr, ckpt);
  return model;
}

// --- subcommands -------------------------------------------------------------------

int cmd_gen_data(const std::string& family, std::size_t n, std::size_t per_class, double noise,
                 std::uint64_t seed, const std::string& out_dir) {
  SyntheticSpec spec;
  if (family == "cls") {
    spec.family = SyntheticSpec::Family::kClsPrimitives;
  } else if (family == "seg") {
    spec.family = SyntheticSpec::Family::kSegComposites;
  } else {
    throw ArgumentError("family must be 'cls' or 'seg', got '" + family + "'");
  }
  spec.points = n;
  spec.per_class = per_class;
  spec.noise = noise;
  spec.seed = seed;
  spec.validate();

  std::ostringstream resolved;
  resolved << "family = " << family << "\nn = " << n << "\nper_class = " << per_class
           << "\nnoise = " << fmt(noise) << "\nseed = " << seed << "\nout = " << out_dir << "\n";
  print_resolved("gen-data config", resolved.str());

  fs::create_directories(out_dir);
  auto clouds = generate(spec);
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    char idx[16];
    std::snprintf(idx, sizeof(idx), "%04zu", i);
    fs::path file = fs::path(out_dir) / (std::string(idx) + "_" + clouds[i].name + ".duc");
    write_cloud(clouds[i], file.string());
  }
  std::cout << "wrote " << clouds.size() << " clouds to " << out_dir << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& data_dir, const std::string& out_dir) {
  cfg.model.validate();
  cfg.train.validate();
  auto clouds = load_data_dir(data_dir);

  int max_label = 0;
  for (const auto& c : clouds) {
    if (!c.has_labels()) throw ArgumentError("cloud '" + c.name + "' is unlabeled");
    max_label = std::max(max_label, *std::max_element(c.labels.begin(), c.labels.end()));
  }
  std::size_t label_count = static_cast<std::size_t>(max_label) + 1;
  if (cfg.model.task == ModelConfig::Task::kClassification) {
    cfg.model.num_classes = std::max(cfg.model.num_classes, label_count);
  } else {
    cfg.model.num_parts = std::max(cfg.model.num_parts, label_count);
  }

  std::string resolved = config_to_text(cfg);
  print_resolved("train config", resolved);

  Dataset data = split_dataset(std::move(clouds), cfg.model.task, cfg.model.num_scores());
  Model model = Model::build(cfg.model);
  std::vector<Tensor> param_tensors;
  for (const auto& [path, t] : model.params()) param_tensors.push_back(t);
  OptState opt = OptState::for_params(param_tensors);

  FitResult result = fit(model, data, cfg.train, opt);

  fs::create_directories(out_dir);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.log);
  Checkpoint ckpt = snapshot(model, &opt, resolved, cfg.train.epochs);
  save_checkpoint(ckpt, (fs::path(out_dir) / "model.ckpt").string());
  std::cout << "final val " << result.log.back().metric_name << " = "
            << fmt(result.final_val_metric) << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, std::size_t votes,
             std::uint64_t seed) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg;
  Model model = model_from_checkpoint(ckpt, cfg);
  print_resolved("eval config", config_to_text(cfg));
  auto clouds = load_data_dir(data_dir);

  bool classification = cfg.model.task == ModelConfig::Task::kClassification;
  if (votes <= 1) {
    double metric = classification ? evaluate_oa(model, clouds)
                                   : evaluate_instance_miou(model, clouds);
    std::cout << (classification ? "oa," : "instance_miou,") << fmt(metric) << "\n";
    return 0;
  }
  // Voting: logits averaged over augmented copies, scale draws only.
  AugmentSpec vote_spec = cfg.train.augment.scales_only();
  if (classification) {
    std::vector<int> preds, labels;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      if (!clouds[i].has_labels()) {
        throw ArgumentError("cloud '" + clouds[i].name + "' is unlabeled");
      }
      Tensor logits = evaluate_with_voting(model, clouds[i], votes, vote_spec, seed + i);
      const auto& v = logits.values();
      preds.push_back(static_cast<int>(
          std::max_element(v.begin(), v.end()) - v.begin()));
      labels.push_back(clouds[i].labels[0]);
    }
    std::cout << "oa," << fmt(metrics_oa(preds, labels)) << "\n";
  } else {
    std::vector<std::vector<int>> preds, labels;
    std::vector<std::vector<int>> part_sets;
    std::vector<int> parts(cfg.model.num_parts);
    for (std::size_t p = 0; p < parts.size(); ++p) parts[p] = static_cast<int>(p);
    std::size_t c = cfg.model.num_parts;
    for (std::size_t i = 0; i < clouds.size(); ++i) {
      Tensor logits = evaluate_with_voting(model, clouds[i], votes, vote_spec, seed + i);
      std::vector<int> rows(clouds[i].size());
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const double* row = logits.values().data() + r * c;
        rows[r] = static_cast<int>(std::max_element(row, row + c) - row);
      }
      preds.push_back(std::move(rows));
      labels.push_back(clouds[i].labels);
      part_sets.push_back(parts);
    }
    std::cout << "instance_miou," << fmt(metrics_instance_miou(preds, labels, part_sets)) << "\n";
  }
  return 0;
}

int cmd_diffuse(const std::string& kind, double lambda, std::size_t steps, double tau,
                std::size_t k, const std::string& cloud_path, const std::string& out_csv) {
  DiffusivityFn g = kind == "pm" ? DiffusivityFn::perona_malik(lambda) : DiffusivityFn::constant();
  if (kind != "pm" && kind != "const") {
    throw ArgumentError("diffusivity must be 'const' or 'pm', got '" + kind + "'");
  }
  std::ostringstream resolved;
  resolved << "diffusivity = " << kind << "\nlambda = " << fmt(lambda) << "\nsteps = " << steps
           << "\ntau = " << fmt(tau) << "\nk = " << k << "\ncloud = " << cloud_path
           << "\nout = " << out_csv << "\n";
  print_resolved("diffuse config", resolved.str());

  PointCloud cloud = read_cloud(cloud_path);
  if (cloud.features.empty()) throw ArgumentError("cloud has no feature channels to diffuse");
  NeighborIndex nbrs = knn_excluding_self(cloud.positions, k);
  DiffusionRun run = run_classic_diffusion(cloud, nbrs, g, tau, steps);
  std::ofstream os(out_csv);
  if (!os) throw ArgumentError("cannot open '" + out_csv + "' for writing");
  os << "step,ratio\n";
  for (const auto& [step, ratio] : contrast_ratio(run)) {
    os << step << "," << fmt(ratio) << "\n";
  }
  std::cout << "final contrast ratio = " << fmt(run.contrast.back().second) << "\n";
  return 0;
}

int cmd_edge_experiment(const std::string& weights_csv, std::size_t points, double sharpness,
                        const std::string& out_csv) {
  std::vector<double> weights;
  for (const auto& tok : split_commas(weights_csv)) weights.push_back(std::stod(tok));
  if (weights.empty()) throw ArgumentError("no weights given");
  for (double w : weights) {
    if (!std::isfinite(w)) throw ArgumentError("weights must be finite");
  }
  std::ostringstream resolved;
  resolved << "weights = " << weights_csv << "\npoints = " << points
           << "\nsharpness = " << fmt(sharpness) << "\nout = " << out_csv << "\n";
  print_resolved("edge-experiment config", resolved.str());

  PointCloud profile = step_edge_profile(points, sharpness);
  std::ofstream os(out_csv);
  if (!os) throw ArgumentError("cannot open '" + out_csv + "' for writing");
  os << "w,delta_grad,sign\n";
  for (double w : weights) {
    double delta = edge_gradient_delta(profile, w);
    int sign = delta > 0.0 ? 1 : (delta < 0.0 ? -1 : 0);
    os << fmt(w) << "," << fmt(delta) << "," << sign << "\n";
  }
  return 0;
}

int cmd_smoothness(const std::string& ckpt_path, const std::string& cloud_path,
                   const std::string& layer, const std::string& prefix) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig cfg;
  Model model = model_from_checkpoint(ckpt, cfg);
  std::ostringstream resolved;
  resolved << "ckpt = " << ckpt_path << "\ncloud = " << cloud_path << "\nlayer = " << layer
           << "\nout = " << prefix << "\n";
  print_resolved("smoothness config", resolved.str());

  PointCloud cloud = read_cloud(cloud_path);
  SmoothnessReport report = model.smoothness_probe(cloud, layer);

  auto write_csv = [&](const std::string& path, const std::vector<double>& values) {
    std::ofstream os(path);
    if (!os) throw ArgumentError("cannot open '" + path + "' for writing");
    os << "x,y,z,smoothness" << (report.labels.empty() ? "" : ",label") << "\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Vec3& p = report.positions[i];
      os << fmt(p[0]) << "," << fmt(p[1]) << "," << fmt(p[2]) << "," << fmt(values[i]);
      if (!report.labels.empty()) os << "," << report.labels[i];
      os << "\n";
    }
  };
  write_csv(prefix + "_before.csv", report.before);
  write_csv(prefix + "_after.csv", report.after);

  double vmin = report.before[0], vmax = report.before[0];
  for (double v : report.before) {
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  for (double v : report.after) {
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  write_scatter_svg(prefix + "_before.svg", report.positions, report.before, vmin, vmax,
                    "smoothness before " + layer);
  write_scatter_svg(prefix + "_after.svg", report.positions, report.after, vmin, vmax,
                    "smoothness after " + layer);
  std::cout << "wrote " << prefix << "_{before,after}.{csv,svg}\n";
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"dunet: diffusion-unit point cloud toolkit"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate synthetic point cloud datasets");
  std::string g_family = "cls", g_out = "data";
  std::size_t g_n = 512, g_per = 10;
  double g_noise = 0.0;
  std::uint64_t g_seed = 0;
  gen->add_option("--family", g_family, "cls or seg");
  gen->add_option("--n", g_n, "points per cloud");
  gen->add_option("--per-class", g_per, "clouds per class");
  gen->add_option("--noise", g_noise, "position noise sigma");
  gen->add_option("--seed", g_seed, "generation seed");
  gen->add_option("--out", g_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train a DU-Net");
  std::string t_task = "cls", t_data, t_config, t_out = "run";
  std::uint64_t t_seed = 0;
  std::size_t t_epochs = 0;
  double t_lr = 0.0;
  std::string t_optimizer;
  std::size_t t_batch = 0;
  train->add_option("--task", t_task, "cls or seg")->required();
  train->add_option("--data", t_data, "directory of .duc files")->required();
  train->add_option("--config", t_config, "key = value config file");
  train->add_option("--seed", t_seed, "training seed");
  train->add_option("--out", t_out, "output directory");
  train->add_option("--epochs", t_epochs, "override epochs");
  train->add_option("--lr", t_lr, "override learning rate");
  train->add_option("--optimizer", t_optimizer, "adam or sgd");
  train->add_option("--batch", t_batch, "override batch size");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_ckpt, e_data;
  std::size_t e_votes = 1;
  std::uint64_t e_seed = 0;
  eval->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  eval->add_option("--data", e_data, "directory of .duc files")->required();
  eval->add_option("--votes", e_votes, "augmented evaluations to average");
  eval->add_option("--seed", e_seed, "voting seed");

  // diffuse
  auto* diffuse = app.add_subcommand("diffuse", "run classical diffusion and log contrast");
  std::string d_kind = "const", d_cloud, d_out;
  double d_lambda = 1.0, d_tau = 1.0;
  std::size_t d_steps = 50, d_k = 8;
  diffuse->add_option("--diffusivity", d_kind, "const or pm");
  diffuse->add_option("--lambda", d_lambda, "perona-malik contrast parameter");
  diffuse->add_option("--steps", d_steps, "diffusion steps");
  diffuse->add_option("--tau", d_tau, "step size");
  diffuse->add_option("--k", d_k, "neighborhood size");
  diffuse->add_option("--cloud", d_cloud, "labeled .duc input")->required();
  diffuse->add_option("--out", d_out, "contrast CSV path")->required();

  // edge-experiment
  auto* edge = app.add_subcommand("edge-experiment", "measure edge response per filter weight");
  std::string x_weights = "-0.5,-0.1,0,0.1,0.5", x_out;
  std::size_t x_points = 64;
  double x_sharp = 4.0;
  edge->add_option("--weights", x_weights, "comma-separated filter weights");
  edge->add_option("--points", x_points, "profile sample count");
  edge->add_option("--sharpness", x_sharp, "tanh edge sharpness");
  edge->add_option("--out", x_out, "CSV path")->required();

  // smoothness
  auto* smooth = app.add_subcommand("smoothness", "probe smoothness before and after a DU");
  std::string s_ckpt, s_cloud, s_layer, s_prefix;
  smooth->add_option("--ckpt", s_ckpt, "checkpoint file")->required();
  smooth->add_option("--cloud", s_cloud, ".duc input")->required();
  smooth->add_option("--layer", s_layer, "DU layer path")->required();
  smooth->add_option("--out", s_prefix, "output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(g_family, g_n, g_per, g_noise, g_seed, g_out);
    }
    if (train->parsed()) {
      RunConfig cfg;
      apply_key(cfg, "task", t_task);
      if (t_task == "cls") {
        cfg.train.optimizer = TrainConfig::Optimizer::kAdam;
        cfg.train.lr = 1e-3;
      } else {
        cfg.train.optimizer = TrainConfig::Optimizer::kSgdMomentum;
        cfg.train.lr = 0.1;
        cfg.train.lr_decay = 0.5;
        cfg.train.lr_interval = 20;
        cfg.train.augment.anisotropic = true;
        cfg.train.augment.scale_lo = 0.8;
        cfg.train.augment.scale_hi = 1.2;
        cfg.train.augment.translation = 0.1;
      }
      if (!t_config.empty()) apply_config_file(cfg, t_config);
      // Flags override the file.
      apply_key(cfg, "task", t_task);
      if (train->count("--seed")) {
        cfg.train.seed = t_seed;
        cfg.model.init_seed = t_seed + 1;
      }
      if (train->count("--epochs")) cfg.train.epochs = t_epochs;
      if (train->count("--lr")) cfg.train.lr = t_lr;
      if (train->count("--optimizer")) apply_key(cfg, "optimizer", t_optimizer);
      if (train->count("--batch")) cfg.train.batch_size = t_batch;
      if (cfg.train.epochs < 1) throw ArgumentError("epochs must be >= 1");
      return cmd_train(cfg, t_data, t_out);
    }
    if (eval->parsed()) return cmd_eval(e_ckpt, e_data, e_votes, e_seed);
    if (diffuse->parsed()) {
      return cmd_diffuse(d_kind, d_lambda, d_steps, d_tau, d_k, d_cloud, d_out);
    }
    if (edge->parsed()) return cmd_edge_experiment(x_weights, x_points, x_sharp, x_out);
    if (smooth->parsed()) return cmd_smoothness(s_ckpt, s_cloud, s_layer, s_prefix);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const StabilityError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace dunet::cli
