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

#include "dunet/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dunet/errors.hpp"

namespace dunet {

void ModelConfig::validate() const {
  if (widths.size() != 4) throw SpecError("model needs exactly four stage widths");
  if (ratios.size() != 4) throw SpecError("model needs exactly four downsample ratios");
  for (std::size_t w : widths) {
    if (w < 1) throw SpecError("stage widths must be positive");
  }
  for (std::size_t i = 1; i < widths.size(); ++i) {
    if (widths[i] % widths[i - 1] != 0) {
      throw SpecError("stage width " + std::to_string(widths[i]) +
                      " is not divisible by its input width " + std::to_string(widths[i - 1]));
    }
  }
  for (double r : ratios) {
    if (!(r > 0.0) || r > 1.0) throw SpecError("downsample ratios must lie in (0, 1]");
  }
  if (neighbors < 1) throw SpecError("neighbor count must be positive");
  if (kernel_points < 1) throw SpecError("kernel point count must be positive");
  if (kpconv_radius <= 0.0) throw SpecError("kpconv radius must be positive");
  if (kpconv_cap < 1) throw SpecError("kpconv neighbor cap must be positive");
  if (du_repeat < 1) throw SpecError("du repeat count must be >= 1");
  if (num_classes < 2 && task == Task::kClassification) {
    throw SpecError("classification needs at least two classes");
  }
  if (num_parts < 2 && task == Task::kSegmentation) {
    throw SpecError("segmentation needs at least two part classes");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw SpecError("dropout rate must lie in [0, 1)");
  for (std::size_t h : head_widths) {
    if (h < 1) throw SpecError("head widths must be positive");
  }
  if (seg_head_width < 1) throw SpecError("segmentation head width must be positive");
}

// --- geometry plan -------------------------------------------------------------

namespace {

// Stage size for one cloud: ratio-scaled, never below 3 points while the
// parent has them (3-NN interpolation needs its sources), never above the
// parent count.
std::size_t stage_size(std::size_t parent, double ratio) {
  if (ratio == 1.0) return parent;
  auto scaled = static_cast<std::size_t>(std::llround(static_cast<double>(parent) * ratio));
  std::size_t floor_pts = std::min<std::size_t>(3, parent);
  return std::min(parent, std::max(scaled, std::max<std::size_t>(floor_pts, 1)));
}

void append_shifted(NeighborIndex& dst, const NeighborIndex& src, std::size_t index_shift,
                    std::size_t center_shift) {
  std::size_t base = dst.indices.size();
  if (dst.offsets.empty()) dst.offsets.push_back(0);
  for (std::size_t i : src.indices) dst.indices.push_back(i + index_shift);
  for (std::size_t s = 0; s + 1 < src.offsets.size(); ++s) {
    dst.offsets.push_back(base + src.offsets[s + 1]);
  }
  for (std::size_t c : src.centers) dst.centers.push_back(c + center_shift);
}

std::vector<Vec3> slice(const std::vector<Vec3>& v, std::size_t lo, std::size_t hi) {
  return std::vector<Vec3>(v.begin() + static_cast<std::ptrdiff_t>(lo),
                           v.begin() + static_cast<std::ptrdiff_t>(hi));
}

void build_du_nbrs(LevelGeometry& level, std::size_t k) {
  level.du_nbrs = NeighborIndex{};
  for (std::size_t c = 0; c + 1 < level.cloud_offsets.size(); ++c) {
    std::size_t lo = level.cloud_offsets[c], hi = level.cloud_offsets[c + 1];
    if (hi - lo < 2) {
      throw DegenerateNeighborhoodError("a cloud reached a resolution of " +
                                        std::to_string(hi - lo) +
                                        " points; diffusion needs at least 2");
    }
    auto local = knn_excluding_self(slice(level.positions, lo, hi), std::min(k, hi - lo - 1));
    append_shifted(level.du_nbrs, local, lo, lo);
  }
  level.has_du_nbrs = true;
}

}  // namespace

GeometryPlan build_geometry(const ModelConfig& cfg, const std::vector<const PointCloud*>& batch) {
  cfg.validate();
  if (batch.empty()) throw ArgumentError("empty batch");
  GeometryPlan plan;
  plan.batch_size = batch.size();
  plan.levels.resize(cfg.widths.size() + 1);

  LevelGeometry& base = plan.levels[0];
  base.cloud_offsets.push_back(0);
  for (const PointCloud* cloud : batch) {
    cloud->validate();
    if (cloud->size() < 4) throw ArgumentError("clouds need at least 4 points");
    base.positions.insert(base.positions.end(), cloud->positions.begin(),
                          cloud->positions.end());
    base.cloud_offsets.push_back(base.positions.size());
  }
  plan.points_per_cloud = batch[0]->size();
  base.input_ids.resize(base.positions.size());
  for (std::size_t i = 0; i < base.input_ids.size(); ++i) base.input_ids[i] = i;

  for (std::size_t stage = 1; stage <= cfg.widths.size(); ++stage) {
    const LevelGeometry& parent = plan.levels[stage - 1];
    LevelGeometry& level = plan.levels[stage];
    level.cloud_offsets.push_back(0);
    double radius = cfg.kpconv_radius * std::pow(2.0, static_cast<double>(stage - 1));
    for (std::size_t c = 0; c + 1 < parent.cloud_offsets.size(); ++c) {
      std::size_t plo = parent.cloud_offsets[c], phi = parent.cloud_offsets[c + 1];
      auto parent_slice = slice(parent.positions, plo, phi);
      std::size_t target = stage_size(phi - plo, cfg.ratios[stage - 1]);

      std::vector<std::size_t> local_ids;
      if (target == phi - plo) {
        local_ids.resize(target);
        for (std::size_t i = 0; i < target; ++i) local_ids[i] = i;
      } else {
        local_ids = farthest_point_sample(parent_slice, target);
      }

      std::vector<Vec3> stage_slice(local_ids.size());
      for (std::size_t i = 0; i < local_ids.size(); ++i) {
        stage_slice[i] = parent_slice[local_ids[i]];
        level.positions.push_back(stage_slice[i]);
        level.input_ids.push_back(parent.input_ids[plo + local_ids[i]]);
      }
      level.cloud_offsets.push_back(level.positions.size());

      NeighborIndex kp = radius_neighbors(stage_slice, parent_slice, radius, cfg.kpconv_cap);
      // Centers must address the parent level, not the query order.
      for (std::size_t i = 0; i < kp.centers.size(); ++i) kp.centers[i] = local_ids[i];
      append_shifted(level.kp_nbrs, kp, plo, plo);
    }
    build_du_nbrs(level, cfg.neighbors);
  }

  if (cfg.task == ModelConfig::Task::kSegmentation) {
    std::size_t from = cfg.widths.size();
    for (std::size_t stage = cfg.widths.size(); stage >= 1; --stage) {
      if (cfg.ratios[stage - 1] >= 1.0) continue;
      std::size_t to = stage - 1;
      const LevelGeometry& src = plan.levels[from];
      LevelGeometry& dst = plan.levels[to];
      UpsampleGeometry hop;
      hop.from_level = from;
      hop.to_level = to;
      hop.offsets.push_back(0);
      for (std::size_t c = 0; c + 1 < dst.cloud_offsets.size(); ++c) {
        std::size_t qlo = dst.cloud_offsets[c], qhi = dst.cloud_offsets[c + 1];
        std::size_t slo = src.cloud_offsets[c], shi = src.cloud_offsets[c + 1];
        if (shi - slo < 3) {
          throw ArgumentError("upsampling source has fewer than 3 points");
        }
        auto interp = interpolation_weights(slice(dst.positions, qlo, qhi),
                                            slice(src.positions, slo, shi), 3);
        for (std::size_t r = 0; r < interp.nbrs.indices.size(); ++r) {
          hop.idx.push_back(interp.nbrs.indices[r] + slo);
          hop.weights.push_back(interp.weights[r]);
        }
        for (std::size_t q = 0; q + 1 < interp.nbrs.offsets.size(); ++q) {
          hop.offsets.push_back(hop.offsets.back() + 3);
        }
      }
      if (!dst.has_du_nbrs) build_du_nbrs(dst, cfg.neighbors);
      plan.hops.push_back(std::move(hop));
      from = to;
    }
  }
  return plan;
}

// --- model build -----------------------------------------------------------------

namespace {

std::size_t level_width(const ModelConfig& cfg, std::size_t level) {
  return level == 0 ? cfg.widths[0] : cfg.widths[level - 1];
}

void init_kpconv(KPConvL& conv, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(conv.spec.disposition.count()));
  for (double& w : conv.weights.values()) w = rng.uniform(-bound, bound);
  conv.rpe.init_kaiming(rng);
}

void init_phi(PhiFilter& phi, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(phi.dim()));
  for (double& w : phi.weight.values()) w = rng.uniform(-bound, bound);
}

}  // namespace

void Model::register_param(const std::string& path, const Tensor& t) {
  param_index_[path] = params_.size();
  params_.emplace_back(path, t);
}

void Model::register_linear(const std::string& path, Linear& l) {
  register_param(path + "/weight", l.weight);
  if (l.bias.defined()) register_param(path + "/bias", l.bias);
}

void Model::register_bn(const std::string& path, BNState& bn) {
  register_param(path + "/gamma", bn.gamma);
  register_param(path + "/beta", bn.beta);
}

void Model::register_du(const std::string& path, DiffusionUnit& du) {
  if (du.spec.enable_phi) {
    register_param(path + "/phi/weight", du.phi.weight);
    if (du.phi.bias.defined()) register_param(path + "/phi/bias", du.phi.bias);
  }
  if (du.spec.enable_varphi) register_bn(path + "/bn", du.varphi.bn);
}

Model Model::build(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  Rng rng(cfg.init_seed);

  m.lift_ = Linear::make(3, cfg.widths[0], /*with_bias=*/false);
  m.lift_.init_kaiming(rng);
  m.lift_bn_ = BNState::make(cfg.widths[0]);
  m.register_linear("lift/linear", m.lift_);
  m.register_bn("lift/bn", m.lift_bn_);

  std::size_t d_in = cfg.widths[0];
  for (std::size_t i = 0; i < cfg.widths.size(); ++i) {
    std::string base = "encoder/stage" + std::to_string(i + 1);
    EncoderStage stage;
    KPConvLSpec cspec;
    cspec.d_in = d_in;
    cspec.d_out = cfg.widths[i];
    double sigma = cfg.kpconv_radius * std::pow(2.0, static_cast<double>(i));
    cspec.disposition = KernelDisposition::fibonacci(cfg.kernel_points, sigma);
    stage.conv = KPConvL::make(cspec);
    init_kpconv(stage.conv, rng);

    DiffusionUnitSpec dspec;
    dspec.channels = cfg.widths[i];
    dspec.neighbors = cfg.neighbors;
    dspec.enable_phi = cfg.enable_phi;
    dspec.enable_varphi = cfg.enable_varphi;
    dspec.repeat = cfg.du_repeat;
    stage.du = DiffusionUnit::make(dspec);
    if (dspec.enable_phi) init_phi(stage.du.phi, rng);

    m.stages_.push_back(std::move(stage));
    m.register_param(base + "/kpconv/weights", m.stages_.back().conv.weights);
    m.register_linear(base + "/kpconv/rpe", m.stages_.back().conv.rpe);
    m.register_du(base + "/du", m.stages_.back().du);
    d_in = cfg.widths[i];
  }

  if (cfg.task == ModelConfig::Task::kClassification) {
    std::size_t in = cfg.widths.back();
    for (std::size_t h = 0; h < cfg.head_widths.size(); ++h) {
      std::string base = "head/fc" + std::to_string(h + 1);
      Linear fc = Linear::make(in, cfg.head_widths[h], /*with_bias=*/false);
      fc.init_kaiming(rng);
      m.head_fc_.push_back(fc);
      m.head_bn_.push_back(BNState::make(cfg.head_widths[h]));
      m.register_linear(base, m.head_fc_.back());
      m.register_bn(base + "/bn", m.head_bn_.back());
      in = cfg.head_widths[h];
    }
    m.head_out_ = Linear::make(in, cfg.num_classes, /*with_bias=*/true);
    m.head_out_.init_kaiming(rng);
    m.register_linear("head/out", m.head_out_);
  } else {
    std::size_t from = cfg.widths.size();
    std::size_t cur_w = cfg.widths.back();
    std::size_t hop_id = 0;
    for (std::size_t stage = cfg.widths.size(); stage >= 1; --stage) {
      if (cfg.ratios[stage - 1] >= 1.0) continue;
      std::size_t to = stage - 1;
      ++hop_id;
      std::string base = "decoder/up" + std::to_string(hop_id);
      DecoderStage dec;
      dec.target_level = to;
      std::size_t out_w = level_width(cfg, to);
      dec.fuse = Linear::make(out_w + cur_w, out_w, /*with_bias=*/false);
      dec.fuse.init_kaiming(rng);
      dec.fuse_bn = BNState::make(out_w);

      DiffusionUnitSpec dspec;
      dspec.channels = out_w;
      dspec.neighbors = cfg.neighbors;
      dspec.enable_phi = cfg.enable_phi;
      dspec.enable_varphi = cfg.enable_varphi;
      dspec.repeat = cfg.du_repeat;
      dec.du = DiffusionUnit::make(dspec);
      if (dspec.enable_phi) init_phi(dec.du.phi, rng);

      m.decoder_.push_back(std::move(dec));
      m.register_linear(base + "/fuse", m.decoder_.back().fuse);
      m.register_bn(base + "/fuse/bn", m.decoder_.back().fuse_bn);
      m.register_du(base + "/du", m.decoder_.back().du);
      cur_w = out_w;
      from = to;
    }
    (void)from;

    m.seg_fc_ = Linear::make(cur_w, cfg.seg_head_width, /*with_bias=*/false);
    m.seg_fc_.init_kaiming(rng);
    m.seg_bn_ = BNState::make(cfg.seg_head_width);
    m.register_linear("seghead/fc", m.seg_fc_);
    m.register_bn("seghead/fc/bn", m.seg_bn_);
    m.seg_out_ = Linear::make(cfg.seg_head_width, cfg.num_parts, /*with_bias=*/true);
    m.seg_out_.init_kaiming(rng);
    m.register_linear("seghead/out", m.seg_out_);
  }
  return m;
}

Tensor Model::param(const std::string& path) const {
  auto it = param_index_.find(path);
  if (it == param_index_.end()) throw LookupError("unknown parameter path '" + path + "'");
  return params_[it->second].second;
}

bool Model::has_param(const std::string& path) const {
  return param_index_.count(path) > 0;
}

void Model::zero_grads() {
  for (auto& [path, t] : params_) t.zero_grad();
}

std::vector<std::pair<std::string, BNState*>> Model::bn_entries() {
  std::vector<std::pair<std::string, BNState*>> out;
  out.emplace_back("lift/bn", &lift_bn_);
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    if (stages_[i].du.spec.enable_varphi) {
      out.emplace_back("encoder/stage" + std::to_string(i + 1) + "/du/bn",
                       &stages_[i].du.varphi.bn);
    }
  }
  if (cfg_.task == ModelConfig::Task::kClassification) {
    for (std::size_t h = 0; h < head_bn_.size(); ++h) {
      out.emplace_back("head/fc" + std::to_string(h + 1) + "/bn", &head_bn_[h]);
    }
  } else {
    for (std::size_t k = 0; k < decoder_.size(); ++k) {
      std::string base = "decoder/up" + std::to_string(k + 1);
      out.emplace_back(base + "/fuse/bn", &decoder_[k].fuse_bn);
      if (decoder_[k].du.spec.enable_varphi) {
        out.emplace_back(base + "/du/bn", &decoder_[k].du.varphi.bn);
      }
    }
    out.emplace_back("seghead/fc/bn", &seg_bn_);
  }
  return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> Model::state_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  for (auto& [path, bn] : bn_entries()) {
    out.emplace_back(path + "/running_mean", &bn->running_mean);
    out.emplace_back(path + "/running_var", &bn->running_var);
  }
  return out;
}

std::size_t Model::depthwise_weight_count() const {
  std::size_t total = 0;
  for (std::size_t i = 0; i < stages_.size(); ++i) total += depthwise_weight_count(i + 1);
  return total;
}

std::size_t Model::depthwise_weight_count(std::size_t stage) const {
  if (stage < 1 || stage > stages_.size()) throw LookupError("no encoder stage " + std::to_string(stage));
  return stages_[stage - 1].conv.weights.numel();
}

std::vector<std::string> Model::du_paths() const {
  std::vector<std::string> paths;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    paths.push_back("encoder/stage" + std::to_string(i + 1) + "/du");
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    paths.push_back("decoder/up" + std::to_string(i + 1) + "/du");
  }
  return paths;
}

// --- forward ---------------------------------------------------------------------

Tensor Model::forward(const GeometryPlan& plan, const ForwardOptions& opt, Rng* dropout_rng,
                      ForwardTrace* trace) {
  bool want_dropout = opt.dropout_active && cfg_.dropout > 0.0;
  if (want_dropout && !dropout_rng) {
    throw ContractError("dropout-active forward needs a random source");
  }

  auto run_du = [&](DiffusionUnit& du, const Tensor& x, const NeighborIndex& nbrs,
                    const std::string& path, std::size_t level) {
    Tensor y = du.forward(x, nbrs, opt.training, opt.update_running);
    if (trace) (*trace)[path] = DuTraceEntry{x, y, nbrs, level};
    return y;
  };

  // Raw coordinates are the input features.
  const LevelGeometry& base = plan.levels[0];
  std::vector<double> coords(base.positions.size() * 3);
  for (std::size_t i = 0; i < base.positions.size(); ++i) {
    coords[i * 3] = base.positions[i][0];
    coords[i * 3 + 1] = base.positions[i][1];
    coords[i * 3 + 2] = base.positions[i][2];
  }
  Tensor x = Tensor::matrix(base.positions.size(), 3, std::move(coords));
  x = relu(batch_stats_normalize(lift_.apply(x), lift_bn_, opt.training, opt.update_running));

  std::vector<Tensor> level_feats(plan.levels.size());
  level_feats[0] = x;
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const LevelGeometry& level = plan.levels[i + 1];
    const LevelGeometry& parent = plan.levels[i];
    Tensor kp = stages_[i].conv.forward(level_feats[i], parent.positions, level.kp_nbrs);
    level_feats[i + 1] = run_du(stages_[i].du, kp, level.du_nbrs,
                                "encoder/stage" + std::to_string(i + 1) + "/du", i + 1);
  }

  if (cfg_.task == ModelConfig::Task::kClassification) {
    const LevelGeometry& top = plan.levels.back();
    Tensor pooled = segment_max(level_feats.back(), top.cloud_offsets);
    Tensor h = pooled;
    for (std::size_t j = 0; j < head_fc_.size(); ++j) {
      h = relu(batch_stats_normalize(head_fc_[j].apply(h), head_bn_[j], opt.training,
                                     opt.update_running));
      if (want_dropout) h = dropout(h, cfg_.dropout, true, *dropout_rng);
    }
    return head_out_.apply(h);
  }

  if (plan.hops.size() != decoder_.size()) {
    throw ContractError("geometry plan decoder hops do not match the model");
  }
  Tensor cur = level_feats.back();
  for (std::size_t k = 0; k < decoder_.size(); ++k) {
    const UpsampleGeometry& hop = plan.hops[k];
    DecoderStage& dec = decoder_[k];
    if (hop.to_level != dec.target_level) {
      throw ContractError("geometry plan hop targets do not match the model");
    }
    Tensor gathered = gather_rows(cur, hop.idx);
    Tensor wcol = Tensor::matrix(hop.weights.size(), 1, hop.weights);
    Tensor up = segment_sum(mul(gathered, wcol), hop.offsets);
    Tensor fused = concat_cols(level_feats[hop.to_level], up);
    fused = relu(batch_stats_normalize(dec.fuse.apply(fused), dec.fuse_bn, opt.training,
                                       opt.update_running));
    cur = run_du(dec.du, fused, plan.levels[hop.to_level].du_nbrs,
                 "decoder/up" + std::to_string(k + 1) + "/du", hop.to_level);
  }
  Tensor h = relu(batch_stats_normalize(seg_fc_.apply(cur), seg_bn_, opt.training,
                                        opt.update_running));
  if (want_dropout) h = dropout(h, cfg_.dropout, true, *dropout_rng);
  return seg_out_.apply(h);
}

Tensor Model::forward(const std::vector<const PointCloud*>& batch, const ForwardOptions& opt,
                      Rng* dropout_rng, ForwardTrace* trace) {
  GeometryPlan plan = build_geometry(cfg_, batch);
  return forward(plan, opt, dropout_rng, trace);
}

Tensor Model::forward_classify(const PointCloud& cloud) {
  if (cfg_.task != ModelConfig::Task::kClassification) {
    throw ContractError("forward_classify on a segmentation model");
  }
  return forward({&cloud}, ForwardOptions::eval());
}

Tensor Model::forward_segment(const PointCloud& cloud) {
  if (cfg_.task != ModelConfig::Task::kSegmentation) {
    throw ContractError("forward_segment on a classification model");
  }
  return forward({&cloud}, ForwardOptions::eval());
}

// --- smoothness -------------------------------------------------------------------

std::vector<double> smoothness_values(const Tensor& features, const NeighborIndex& nbrs) {
  std::size_t d = features.cols();
  const auto& fv = features.values();
  std::vector<double> out(nbrs.num_centers());
  std::vector<double> acc(d);
  for (std::size_t s = 0; s < nbrs.num_centers(); ++s) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const double* fs = fv.data() + nbrs.centers[s] * d;
    for (std::size_t r = nbrs.offsets[s]; r < nbrs.offsets[s + 1]; ++r) {
      const double* fn = fv.data() + nbrs.indices[r] * d;
      for (std::size_t c = 0; c < d; ++c) acc[c] += fn[c] - fs[c];
    }
    double norm2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm2 += acc[c] * acc[c];
    out[s] = std::sqrt(norm2);
  }
  return out;
}

SmoothnessReport Model::smoothness_probe(const PointCloud& cloud, const std::string& du_path) {
  GeometryPlan plan = build_geometry(cfg_, {&cloud});
  ForwardTrace trace;
  forward(plan, ForwardOptions::eval(), nullptr, &trace);
  auto it = trace.find(du_path);
  if (it == trace.end()) {
    std::ostringstream msg;
    msg << "unknown layer path '" << du_path << "'; valid paths:";
    for (const auto& p : du_paths()) msg << " " << p;
    throw LookupError(msg.str());
  }
  const DuTraceEntry& entry = it->second;
  const LevelGeometry& level = plan.levels[entry.level];

  SmoothnessReport report;
  report.before = smoothness_values(entry.before, entry.nbrs);
  report.after = smoothness_values(entry.after, entry.nbrs);
  report.positions = level.positions;
  report.input_ids = level.input_ids;
  if (cloud.has_labels()) {
    report.labels.resize(level.input_ids.size());
    for (std::size_t i = 0; i < level.input_ids.size(); ++i) {
      report.labels[i] = cloud.labels[level.input_ids[i]];
    }
  }
  if (!cloud.boundary.empty()) {
    report.boundary.resize(level.input_ids.size());
    for (std::size_t i = 0; i < level.input_ids.size(); ++i) {
      report.boundary[i] = cloud.boundary[level.input_ids[i]];
    }
  }
  return report;
}

}  // namespace dunet
