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

#ifndef DUNET_TENSOR_HPP_
#define DUNET_TENSOR_HPP_

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dunet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a backward pass reaches it
  bool requires_grad = false;
  int node = -1;             // id on the tape that produced it, -1 for leaves
  const void* tape = nullptr;
};

// Dense 64-bit float tensor. Copies are shallow handles to shared storage;
// op results own fresh storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> vals);
  static Tensor scalar(double v) { return from({1}, {v}); }
  static Tensor row(std::vector<double> vals);
  static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> vals);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t numel() const { return impl_->values.size(); }
  // Row/column view of a rank-1 or rank-2 tensor.
  std::size_t rows() const;
  std::size_t cols() const;

  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }
  double& at(std::size_t r, std::size_t c) { return impl_->values[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return impl_->values[r * cols() + c]; }

  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const;
  void zero_grad();
  int node() const { return impl_->node; }

  std::shared_ptr<TensorData> impl() const { return impl_; }

 private:
  std::shared_ptr<TensorData> impl_;
};

// Dynamic differentiation tape. Constructing a Tape makes it the active
// recorder for the current thread; ops record a backward rule iff a tape is
// active and at least one input is tracked. Dropping the tape (or clear())
// releases the recorded graph.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();
  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Recording interface used by op implementations (including fused ops in
  // other modules). The backward rule must accumulate into input grads and
  // may assume the output grad buffer is populated.
  int add_node(std::shared_ptr<TensorData> output, std::function<void()> backward_fn);

  void run_backward(const std::shared_ptr<TensorData>& loss);

 private:
  struct Node {
    std::shared_ptr<TensorData> output;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;
  Tape* prev_ = nullptr;
};

namespace autodiff {

// True when `t` participates in the gradient computation: either a parameter
// leaf or an intermediate recorded on the active tape.
bool tracked(const Tensor& t);
bool tracked(const std::shared_ptr<TensorData>& d);

// Marks `out` as the result of an op with the given backward rule on the
// active tape. No-op when nothing is recording.
void record(Tensor& out, std::function<void()> backward_fn);

// Accumulation buffer for a tracked tensor, allocated on first use.
std::vector<double>& grad_acc(const std::shared_ptr<TensorData>& d);

}  // namespace autodiff

// --- elementwise ---------------------------------------------------------
// Binary ops accept equal shapes, a rank-1 [d] (or [1 x d]) operand
// broadcast across the rows of an [n x d] operand, or an [n x 1] operand
// broadcast across its columns.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& a);

// --- linear algebra -------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
// a * transpose(b); the natural layout for row-major weight matrices.
Tensor matmul_t(const Tensor& a, const Tensor& b);

// --- indexing and reductions ---------------------------------------------
Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx);
// `offsets` partitions rows into contiguous nonempty segments (size s+1).
Tensor segment_mean(const Tensor& a, const std::vector<std::size_t>& offsets);
Tensor segment_sum(const Tensor& a, const std::vector<std::size_t>& offsets);
// Per-segment, per-channel maximum; gradient routes to the first argmax row.
Tensor segment_max(const Tensor& a, const std::vector<std::size_t>& offsets);
Tensor concat_cols(const Tensor& a, const Tensor& b);
// out[r][j] = a[r][j / m]; every input column repeated m times.
Tensor repeat_cols(const Tensor& a, std::size_t m);
Tensor sum_all(const Tensor& a);

// --- batch normalization ---------------------------------------------------
struct BNState {
  Tensor gamma;  // [d]
  Tensor beta;   // [d]
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;  // new_running = (1-momentum)*old + momentum*batch

  static BNState make(std::size_t d);
  std::size_t dim() const { return running_mean.size(); }
};

// Training mode normalizes with per-channel batch statistics (biased
// variance) and, when update_running is set, folds them into the running
// estimates. Eval mode uses the running statistics. Affine gamma/beta last.
Tensor batch_stats_normalize(const Tensor& x, BNState& state, bool training,
                             bool update_running = true);

// --- reverse pass ----------------------------------------------------------
// Seeds d(loss)/d(loss) = 1 and walks the active tape in reverse. Leaf
// gradients accumulate across repeated calls.
void backward(const Tensor& loss);

}  // namespace dunet

#endif  // DUNET_TENSOR_HPP_
