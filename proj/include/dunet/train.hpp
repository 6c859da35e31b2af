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

#ifndef DUNET_TRAIN_HPP_
#define DUNET_TRAIN_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dunet/data.hpp"
#include "dunet/model.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

struct TrainConfig {
  enum class Optimizer { kSgdMomentum, kAdam };
  Optimizer optimizer = Optimizer::kAdam;
  double lr = 1e-3;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 1;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double lr_decay = 1.0;        // multiplicative step-decay factor
  std::size_t lr_interval = 0;  // epochs between decays; 0 disables
  std::size_t eval_interval = 1;  // epochs between metric evaluations
  AugmentSpec augment;

  void validate() const;
};

// Mean over rows of -log softmax(logits)[target], max-stabilized.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

// Optimizer slots aligned with a parameter list by position.
struct OptState {
  std::vector<std::vector<double>> velocity;  // SGD momentum
  std::vector<std::vector<double>> m;         // Adam first moment
  std::vector<std::vector<double>> v;         // Adam second moment
  std::size_t step = 0;

  static OptState for_params(const std::vector<Tensor>& params);
};

// Parameters without a gradient buffer are left untouched.
void sgd_step(std::vector<Tensor>& params, OptState& state, double lr, double momentum);
void adam_step(std::vector<Tensor>& params, OptState& state, double lr, double beta1,
               double beta2, double eps);

// --- metrics -----------------------------------------------------------------
double metrics_oa(const std::vector<int>& preds, const std::vector<int>& labels);
// Per-shape mean of part IoUs (absent parts score 1), averaged over shapes.
double metrics_instance_miou(const std::vector<std::vector<int>>& preds,
                             const std::vector<std::vector<int>>& labels,
                             const std::vector<std::vector<int>>& part_sets);
// Global per-class IoU averaged over classes present in labels or preds.
double metrics_point_miou(const std::vector<int>& preds, const std::vector<int>& labels,
                          std::size_t num_classes);

// --- checkpoint -----------------------------------------------------------------
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_text;  // flat key = value echo
  std::uint64_t epoch = 0;
  std::vector<std::pair<std::string, std::pair<Shape, std::vector<double>>>> params;
  std::vector<std::pair<std::string, std::vector<double>>> buffers;
  bool has_opt = false;
  std::uint64_t opt_step = 0;
  std::vector<std::pair<std::string, std::vector<double>>> opt_slots;
};

Checkpoint snapshot(Model& model, const OptState* opt, const std::string& config_text,
                    std::uint64_t epoch);
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// Restores parameters, BN statistics, and (when present) optimizer state.
// Paths must match the model registry exactly.
void restore_into(Model& model, OptState* opt, const Checkpoint& ckpt);

// --- training loop -----------------------------------------------------------------
struct Dataset {
  std::vector<PointCloud> train;
  std::vector<PointCloud> val;
  std::size_t num_classes = 0;  // classes (cls) or part classes (seg)
};

// Index-interleaved split: every fifth cloud per class goes to val.
Dataset split_dataset(std::vector<PointCloud> clouds, ModelConfig::Task task,
                      std::size_t num_classes);

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  std::string metric_name;
  double metric_value = 0.0;
};

struct FitResult {
  std::vector<EpochLog> log;
  double final_val_metric = 0.0;
};

FitResult fit(Model& model, const Dataset& data, const TrainConfig& cfg, OptState& opt);

// --- evaluation ---------------------------------------------------------------------
std::vector<int> predict_classes(Model& model, const std::vector<PointCloud>& clouds);
std::vector<std::vector<int>> predict_parts(Model& model, const std::vector<PointCloud>& clouds);
double evaluate_oa(Model& model, const std::vector<PointCloud>& clouds);
double evaluate_instance_miou(Model& model, const std::vector<PointCloud>& clouds);

// Mean of eval logits over `votes` augmented copies of the cloud.
Tensor evaluate_with_voting(Model& model, const PointCloud& cloud, std::size_t votes,
                            const AugmentSpec& augment_spec, std::uint64_t seed);

}  // namespace dunet

#endif  // DUNET_TRAIN_HPP_
