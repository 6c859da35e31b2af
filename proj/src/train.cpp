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

#include "dunet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "dunet/errors.hpp"

namespace dunet {

void TrainConfig::validate() const {
  // lr == 0 is allowed: a null update that still exercises the loop.
  if (lr < 0.0) throw ArgumentError("learning rate must be non-negative");
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
  if (!(lr_decay > 0.0)) throw ArgumentError("lr decay factor must be positive");
  augment.validate();
}

// --- cross entropy ---------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects rank-2 logits");
  std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (targets.size() != n) {
    throw ArgumentError("cross_entropy: " + std::to_string(n) + " rows but " +
                        std::to_string(targets.size()) + " targets");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= c) {
      throw ArgumentError("cross_entropy: target " + std::to_string(t) + " out of range [0, " +
                          std::to_string(c) + ")");
    }
  }
  const auto& lv = logits.values();
  std::vector<double> softmax(n * c);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = lv.data() + r * c;
    double mx = row[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      softmax[r * c + j] = std::exp(row[j] - mx);
      denom += softmax[r * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) softmax[r * c + j] /= denom;
    total += std::log(denom) + mx - row[targets[r]];
  }
  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  if (autodiff::tracked(logits) && Tape::active()) {
    auto ld = logits.impl();
    auto od = out.impl();
    auto tg = targets;
    autodiff::record(out, [=, sm = std::move(softmax)]() {
      auto& g = autodiff::grad_acc(ld);
      double go = od->grad[0] / static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          double delta = sm[r * c + j] - (static_cast<std::size_t>(tg[r]) == j ? 1.0 : 0.0);
          g[r * c + j] += go * delta;
        }
      }
    });
  }
  return out;
}

// --- optimizers -------------------------------------------------------------------

OptState OptState::for_params(const std::vector<Tensor>& params) {
  OptState s;
  s.velocity.resize(params.size());
  s.m.resize(params.size());
  s.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.velocity[i].assign(params[i].numel(), 0.0);
    s.m[i].assign(params[i].numel(), 0.0);
    s.v[i].assign(params[i].numel(), 0.0);
  }
  return s;
}

void sgd_step(std::vector<Tensor>& params, OptState& state, double lr, double momentum) {
  ++state.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    auto& w = params[i].values();
    const auto& g = params[i].grad();
    auto& vel = state.velocity[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      vel[j] = momentum * vel[j] + g[j];
      w[j] -= lr * vel[j];
    }
  }
}

void adam_step(std::vector<Tensor>& params, OptState& state, double lr, double beta1,
               double beta2, double eps) {
  ++state.step;
  double t = static_cast<double>(state.step);
  double corr1 = 1.0 - std::pow(beta1, t);
  double corr2 = 1.0 - std::pow(beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    auto& w = params[i].values();
    const auto& g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
      v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
      double mhat = m[j] / corr1;
      double vhat = v[j] / corr2;
      w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// --- metrics ----------------------------------------------------------------------

double metrics_oa(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw ArgumentError("metrics_oa: prediction and label lengths differ or are empty");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(preds.size());
}

double metrics_instance_miou(const std::vector<std::vector<int>>& preds,
                             const std::vector<std::vector<int>>& labels,
                             const std::vector<std::vector<int>>& part_sets) {
  if (preds.size() != labels.size() || preds.size() != part_sets.size() || preds.empty()) {
    throw ArgumentError("metrics_instance_miou: mismatched shape counts");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].size() != labels[s].size()) {
      throw ArgumentError("metrics_instance_miou: shape " + std::to_string(s) +
                          " has mismatched point counts");
    }
    double shape_iou = 0.0;
    for (int part : part_sets[s]) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t i = 0; i < preds[s].size(); ++i) {
        bool p = preds[s][i] == part;
        bool l = labels[s][i] == part;
        inter += p && l;
        uni += p || l;
      }
      // A part absent from both prediction and ground truth counts as 1.
      shape_iou += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    total += shape_iou / static_cast<double>(part_sets[s].size());
  }
  return total / static_cast<double>(preds.size());
}

double metrics_point_miou(const std::vector<int>& preds, const std::vector<int>& labels,
                          std::size_t num_classes) {
  if (preds.size() != labels.size() || preds.empty()) {
    throw ArgumentError("metrics_point_miou: prediction and label lengths differ or are empty");
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t cls = 0; cls < num_classes; ++cls) {
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      bool p = preds[i] == static_cast<int>(cls);
      bool l = labels[i] == static_cast<int>(cls);
      inter += p && l;
      uni += p || l;
    }
    if (uni > 0) {
      total += static_cast<double>(inter) / static_cast<double>(uni);
      ++counted;
    }
  }
  return counted == 0 ? 0.0 : total / static_cast<double>(counted);
}

// --- checkpoint -------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'D', 'U', 'N', 'E', 'T', '0', '0', '1'};

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  write_u64(os, v.size());
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

std::string read_string(std::istream& is) {
  std::uint32_t len = read_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

std::vector<double> read_doubles(std::istream& is) {
  std::uint64_t len = read_u64(is);
  std::vector<double> v(len);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(len * 8));
  return v;
}

}  // namespace

Checkpoint snapshot(Model& model, const OptState* opt, const std::string& config_text,
                    std::uint64_t epoch) {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  ckpt.epoch = epoch;
  for (const auto& [path, t] : model.params()) {
    ckpt.params.emplace_back(path, std::make_pair(t.shape(), t.values()));
  }
  for (const auto& [path, buf] : model.state_buffers()) {
    ckpt.buffers.emplace_back(path, *buf);
  }
  if (opt) {
    ckpt.has_opt = true;
    ckpt.opt_step = opt->step;
    const auto& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      ckpt.opt_slots.emplace_back(params[i].first + "#velocity", opt->velocity[i]);
      ckpt.opt_slots.emplace_back(params[i].first + "#m", opt->m[i]);
      ckpt.opt_slots.emplace_back(params[i].first + "#v", opt->v[i]);
    }
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ArgumentError("cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  write_u32(os, ckpt.version);
  write_u64(os, ckpt.epoch);
  write_string(os, ckpt.config_text);
  write_u32(os, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, shaped] : ckpt.params) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(shaped.first.size()));
    for (std::size_t e : shaped.first) write_u64(os, e);
    write_doubles(os, shaped.second);
  }
  write_u32(os, static_cast<std::uint32_t>(ckpt.buffers.size()));
  for (const auto& [name, buf] : ckpt.buffers) {
    write_string(os, name);
    write_doubles(os, buf);
  }
  os.put(ckpt.has_opt ? 1 : 0);
  if (ckpt.has_opt) {
    write_u64(os, ckpt.opt_step);
    write_u32(os, static_cast<std::uint32_t>(ckpt.opt_slots.size()));
    for (const auto& [name, buf] : ckpt.opt_slots) {
      write_string(os, name);
      write_doubles(os, buf);
    }
  }
  if (!os) throw ArgumentError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ArgumentError("cannot open '" + path + "' for reading");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("'" + path + "' is not a DUNET001 checkpoint");
  }
  Checkpoint ckpt;
  ckpt.version = read_u32(is);
  if (ckpt.version != 1) {
    throw ParseError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.epoch = read_u64(is);
  ckpt.config_text = read_string(is);
  std::uint32_t np = read_u32(is);
  for (std::uint32_t i = 0; i < np; ++i) {
    std::string name = read_string(is);
    std::uint32_t rank = read_u32(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<std::size_t>(read_u64(is));
    ckpt.params.emplace_back(name, std::make_pair(shape, read_doubles(is)));
  }
  std::uint32_t nb = read_u32(is);
  for (std::uint32_t i = 0; i < nb; ++i) {
    std::string name = read_string(is);
    ckpt.buffers.emplace_back(name, read_doubles(is));
  }
  int has_opt = is.get();
  if (has_opt == 1) {
    ckpt.has_opt = true;
    ckpt.opt_step = read_u64(is);
    std::uint32_t ns = read_u32(is);
    for (std::uint32_t i = 0; i < ns; ++i) {
      std::string name = read_string(is);
      ckpt.opt_slots.emplace_back(name, read_doubles(is));
    }
  }
  if (!is) throw ParseError("truncated checkpoint '" + path + "'");
  return ckpt;
}

void restore_into(Model& model, OptState* opt, const Checkpoint& ckpt) {
  const auto& params = model.params();
  if (ckpt.params.size() != params.size()) {
    throw ParseError("checkpoint holds " + std::to_string(ckpt.params.size()) +
                     " parameters, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, shaped] = ckpt.params[i];
    if (name != params[i].first) {
      throw ParseError("checkpoint parameter '" + name + "' does not match model path '" +
                       params[i].first + "'");
    }
    Tensor t = params[i].second;
    if (shaped.first != t.shape()) {
      throw ParseError("checkpoint parameter '" + name + "' has shape " +
                       shape_str(shaped.first) + ", model expects " + shape_str(t.shape()));
    }
    t.values() = shaped.second;
  }
  auto buffers = model.state_buffers();
  if (ckpt.buffers.size() != buffers.size()) {
    throw ParseError("checkpoint state buffer count does not match the model");
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (ckpt.buffers[i].first != buffers[i].first) {
      throw ParseError("checkpoint buffer '" + ckpt.buffers[i].first + "' does not match '" +
                       buffers[i].first + "'");
    }
    *buffers[i].second = ckpt.buffers[i].second;
  }
  if (opt && ckpt.has_opt) {
    opt->step = ckpt.opt_step;
    if (ckpt.opt_slots.size() != params.size() * 3) {
      throw ParseError("checkpoint optimizer slots do not match the model");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      opt->velocity[i] = ckpt.opt_slots[i * 3].second;
      opt->m[i] = ckpt.opt_slots[i * 3 + 1].second;
      opt->v[i] = ckpt.opt_slots[i * 3 + 2].second;
    }
  }
}

// --- dataset ----------------------------------------------------------------------

Dataset split_dataset(std::vector<PointCloud> clouds, ModelConfig::Task task,
                      std::size_t num_classes) {
  Dataset data;
  data.num_classes = num_classes;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    if (i % 5 == 4) {
      data.val.push_back(std::move(clouds[i]));
    } else {
      data.train.push_back(std::move(clouds[i]));
    }
  }
  (void)task;
  if (data.train.empty() || data.val.empty()) {
    throw ArgumentError("dataset too small to split into train and val");
  }
  return data;
}

// --- evaluation helpers --------------------------------------------------------------

namespace {

int argmax_row(const std::vector<double>& v, std::size_t row, std::size_t c) {
  int best = 0;
  double bv = v[row * c];
  for (std::size_t j = 1; j < c; ++j) {
    if (v[row * c + j] > bv) {
      bv = v[row * c + j];
      best = static_cast<int>(j);
    }
  }
  return best;
}

int cloud_class(const PointCloud& cloud) {
  if (!cloud.has_labels()) throw ArgumentError("classification cloud '" + cloud.name + "' is unlabeled");
  return cloud.labels[0];
}

}  // namespace

std::vector<int> predict_classes(Model& model, const std::vector<PointCloud>& clouds) {
  std::vector<int> preds;
  preds.reserve(clouds.size());
  std::size_t c = model.config().num_classes;
  for (const PointCloud& cloud : clouds) {
    Tensor logits = model.forward_classify(cloud);
    preds.push_back(argmax_row(logits.values(), 0, c));
  }
  return preds;
}

std::vector<std::vector<int>> predict_parts(Model& model, const std::vector<PointCloud>& clouds) {
  std::vector<std::vector<int>> preds;
  preds.reserve(clouds.size());
  std::size_t c = model.config().num_parts;
  for (const PointCloud& cloud : clouds) {
    Tensor logits = model.forward_segment(cloud);
    std::vector<int> rows(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) rows[i] = argmax_row(logits.values(), i, c);
    preds.push_back(std::move(rows));
  }
  return preds;
}

double evaluate_oa(Model& model, const std::vector<PointCloud>& clouds) {
  std::vector<int> preds = predict_classes(model, clouds);
  std::vector<int> labels(clouds.size());
  for (std::size_t i = 0; i < clouds.size(); ++i) labels[i] = cloud_class(clouds[i]);
  return metrics_oa(preds, labels);
}

double evaluate_instance_miou(Model& model, const std::vector<PointCloud>& clouds) {
  auto preds = predict_parts(model, clouds);
  std::vector<std::vector<int>> labels;
  std::vector<std::vector<int>> part_sets;
  std::vector<int> parts(model.config().num_parts);
  std::iota(parts.begin(), parts.end(), 0);
  for (const PointCloud& cloud : clouds) {
    if (!cloud.has_labels()) throw ArgumentError("segmentation cloud '" + cloud.name + "' is unlabeled");
    labels.push_back(cloud.labels);
    part_sets.push_back(parts);
  }
  return metrics_instance_miou(preds, labels, part_sets);
}

Tensor evaluate_with_voting(Model& model, const PointCloud& cloud, std::size_t votes,
                            const AugmentSpec& augment_spec, std::uint64_t seed) {
  if (votes < 1) throw ArgumentError("voting needs at least one evaluation");
  Rng rng(seed);
  Tensor acc;
  for (std::size_t a = 0; a < votes; ++a) {
    PointCloud view = augment(cloud, augment_spec, rng);
    Tensor logits = model.forward({&view}, ForwardOptions::eval());
    acc = a == 0 ? logits : add(acc, logits);
  }
  return scale(acc, 1.0 / static_cast<double>(votes));
}

// --- fit --------------------------------------------------------------------------

namespace {

// Locates the first non-finite gradient for the NaN-abort diagnostic.
std::string first_bad_gradient(const Model& model) {
  for (const auto& [path, t] : model.params()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) return path;
    }
  }
  return "(no non-finite gradient found)";
}

}  // namespace

FitResult fit(Model& model, const Dataset& data, const TrainConfig& cfg, OptState& opt) {
  cfg.validate();
  if (data.train.empty()) throw ArgumentError("fit: empty training set");
  bool classification = model.config().task == ModelConfig::Task::kClassification;

  std::vector<Tensor> param_tensors;
  for (const auto& [path, t] : model.params()) param_tensors.push_back(t);

  Rng rng(cfg.seed);
  FitResult result;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    if (cfg.lr_interval > 0) {
      lr *= std::pow(cfg.lr_decay, static_cast<double>((epoch - 1) / cfg.lr_interval));
    }

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    // Classification heads normalize over batch rows, so a trailing
    // singleton batch is folded into its predecessor.
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(i),
                                     order.begin() +
                                         static_cast<std::ptrdiff_t>(std::min(
                                             i + cfg.batch_size, order.size())));
      batches.push_back(std::move(batch));
    }
    if (classification && batches.size() > 1 && batches.back().size() < 2) {
      auto tail = batches.back();
      batches.pop_back();
      batches.back().insert(batches.back().end(), tail.begin(), tail.end());
    }
    if (classification && batches.size() == 1 && batches[0].size() < 2) {
      throw ArgumentError("classification training needs at least 2 clouds per batch");
    }

    double epoch_loss = 0.0;
    std::size_t batch_no = 0;
    for (const auto& batch_ids : batches) {
      ++batch_no;
      std::vector<PointCloud> views;
      views.reserve(batch_ids.size());
      std::vector<int> targets;
      for (std::size_t id : batch_ids) {
        views.push_back(augment(data.train[id], cfg.augment, rng));
        if (classification) {
          targets.push_back(cloud_class(data.train[id]));
        } else {
          const auto& l = data.train[id].labels;
          targets.insert(targets.end(), l.begin(), l.end());
        }
      }
      std::vector<const PointCloud*> batch;
      for (const auto& v : views) batch.push_back(&v);

      Tape tape;
      Tensor logits = model.forward(batch, ForwardOptions::train(), &rng);
      Tensor loss = cross_entropy(logits, targets);
      double loss_value = loss.values()[0];
      model.zero_grads();
      backward(loss);
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no) + "; first bad gradient at " +
                           first_bad_gradient(model));
      }
      if (cfg.optimizer == TrainConfig::Optimizer::kSgdMomentum) {
        sgd_step(param_tensors, opt, lr, cfg.momentum);
      } else {
        adam_step(param_tensors, opt, lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      }
      model.zero_grads();
      epoch_loss += loss_value;
    }
    epoch_loss /= static_cast<double>(batches.size());

    std::size_t every = std::max<std::size_t>(1, cfg.eval_interval);
    if (epoch % every == 0 || epoch == cfg.epochs) {
      const char* metric = classification ? "oa" : "instance_miou";
      double train_metric = classification ? evaluate_oa(model, data.train)
                                           : evaluate_instance_miou(model, data.train);
      result.log.push_back({epoch, "train", epoch_loss, metric, train_metric});
      if (!data.val.empty()) {
        double val_metric = classification ? evaluate_oa(model, data.val)
                                           : evaluate_instance_miou(model, data.val);
        result.log.push_back({epoch, "val", epoch_loss, metric, val_metric});
        result.final_val_metric = val_metric;
      }
    }
  }
  return result;
}

}  // namespace dunet
