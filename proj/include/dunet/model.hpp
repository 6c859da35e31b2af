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

#ifndef DUNET_MODEL_HPP_
#define DUNET_MODEL_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dunet/geometry.hpp"
#include "dunet/layers.hpp"
#include "dunet/rng.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

struct ModelConfig {
  enum class Task { kClassification, kSegmentation };
  Task task = Task::kClassification;

  // Encoder stage output widths; the input is lifted to widths[0] first.
  std::vector<std::size_t> widths = {64, 128, 256, 512};
  // Per-stage downsample ratios. Stage 1 keeps full resolution so the
  // three-hop decoder lands back on the input cloud.
  std::vector<double> ratios = {1.0, 0.25, 0.25, 0.25};
  std::size_t neighbors = 16;     // DU neighborhood size
  std::size_t kernel_points = 15; // KPConv-l disposition size
  double kpconv_radius = 0.2;     // stage-1 footprint; doubles per stage
  std::size_t kpconv_cap = 32;    // radius-search neighbor cap

  bool enable_phi = true;
  bool enable_varphi = true;
  std::size_t du_repeat = 1;

  std::size_t num_classes = 5;  // classification classes
  std::size_t num_parts = 2;    // segmentation part classes
  std::vector<std::size_t> head_widths = {512, 256};  // classification head
  std::size_t seg_head_width = 64;
  double dropout = 0.5;

  std::uint64_t init_seed = 1;

  std::size_t num_scores() const {
    return task == Task::kClassification ? num_classes : num_parts;
  }
  void validate() const;
};

// Resolution levels of a batch: level 0 is the raw input, levels 1..4 the
// encoder stages. All ids are global over the concatenated batch.
struct LevelGeometry {
  std::vector<Vec3> positions;
  std::vector<std::size_t> cloud_offsets;  // B+1
  std::vector<std::size_t> input_ids;      // level point -> input row
  NeighborIndex kp_nbrs;  // into the parent level (levels >= 1)
  NeighborIndex du_nbrs;  // within this level, self-excluding
  bool has_du_nbrs = false;
};

struct UpsampleGeometry {
  std::size_t from_level = 0;  // coarse
  std::size_t to_level = 0;    // fine
  std::vector<std::size_t> idx;      // Q*3 ids into the coarse level
  std::vector<double> weights;       // aligned with idx, rows sum to 1
  std::vector<std::size_t> offsets;  // Q+1
};

struct GeometryPlan {
  std::vector<LevelGeometry> levels;   // size 5
  std::vector<UpsampleGeometry> hops;  // decoder order, deepest first
  std::size_t batch_size = 0;
  std::size_t points_per_cloud = 0;
};

GeometryPlan build_geometry(const ModelConfig& cfg, const std::vector<const PointCloud*>& batch);

struct ForwardOptions {
  bool training = false;
  bool update_running = true;  // fold batch stats into the running estimates
  bool dropout_active = false;

  static ForwardOptions train() { return {true, true, true}; }
  static ForwardOptions eval() { return {false, false, false}; }
  // Training statistics without side effects; used by gradient checks.
  static ForwardOptions frozen_train() { return {true, false, false}; }
};

struct DuTraceEntry {
  Tensor before;
  Tensor after;
  NeighborIndex nbrs;
  std::size_t level = 0;
};

using ForwardTrace = std::map<std::string, DuTraceEntry>;

struct SmoothnessReport {
  std::vector<double> before;
  std::vector<double> after;
  std::vector<Vec3> positions;
  std::vector<int> labels;               // empty when the cloud is unlabeled
  std::vector<unsigned char> boundary;   // empty when the cloud has no mask
  std::vector<std::size_t> input_ids;
};

// DU-Net: four KPConv-l + DU encoder stages over farthest-point-sampled
// resolutions, a max-pool classification head, and a 3-NN upsampling decoder
// with skip connections and a DU per hop for segmentation.
class Model {
 public:
  static Model build(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Parameter registry in stable construction order.
  const std::vector<std::pair<std::string, Tensor>>& params() const { return params_; }
  Tensor param(const std::string& path) const;
  bool has_param(const std::string& path) const;
  void zero_grads();
  // BN running statistics keyed by path, for checkpointing.
  std::vector<std::pair<std::string, std::vector<double>*>> state_buffers();

  std::size_t depthwise_weight_count() const;
  std::size_t depthwise_weight_count(std::size_t stage) const;
  std::vector<std::string> du_paths() const;

  // Logits: [B x num_classes] for classification, [B*N x num_parts] for
  // segmentation (rows in input order per cloud).
  Tensor forward(const GeometryPlan& plan, const ForwardOptions& opt, Rng* dropout_rng = nullptr,
                 ForwardTrace* trace = nullptr);
  Tensor forward(const std::vector<const PointCloud*>& batch, const ForwardOptions& opt,
                 Rng* dropout_rng = nullptr, ForwardTrace* trace = nullptr);

  Tensor forward_classify(const PointCloud& cloud);  // eval mode, [1 x C]
  Tensor forward_segment(const PointCloud& cloud);   // eval mode, [N x P]

  SmoothnessReport smoothness_probe(const PointCloud& cloud, const std::string& du_path);

 private:
  struct EncoderStage {
    KPConvL conv;
    DiffusionUnit du;
  };
  struct DecoderStage {
    Linear fuse;
    BNState fuse_bn;
    DiffusionUnit du;
    std::size_t target_level = 0;
  };

  void register_param(const std::string& path, const Tensor& t);
  void register_linear(const std::string& path, Linear& l);
  void register_bn(const std::string& path, BNState& bn);
  void register_du(const std::string& path, DiffusionUnit& du);
  // Path -> live BN state, rebuilt per call; member addresses move with the
  // Model, so no pointers are cached.
  std::vector<std::pair<std::string, BNState*>> bn_entries();

  ModelConfig cfg_;
  Linear lift_;
  BNState lift_bn_;
  std::vector<EncoderStage> stages_;
  std::vector<DecoderStage> decoder_;
  // Classification head: fc+bn+relu+dropout per hidden width, then scores.
  std::vector<Linear> head_fc_;
  std::vector<BNState> head_bn_;
  Linear head_out_;
  // Segmentation head.
  Linear seg_fc_;
  BNState seg_bn_;
  Linear seg_out_;

  std::vector<std::pair<std::string, Tensor>> params_;
  std::map<std::string, std::size_t> param_index_;
};

// Per-point ||sum_n (f_n - f_s)||_2 under the given adjacency.
std::vector<double> smoothness_values(const Tensor& features, const NeighborIndex& nbrs);

}  // namespace dunet

#endif  // DUNET_MODEL_HPP_
