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

#include "dunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dunet/errors.hpp"
#include "dunet/parallel.hpp"

namespace dunet {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return s.empty() ? 0 : n;
}

using DataPtr = std::shared_ptr<TensorData>;

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// --- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  Tensor t;
  t.impl_ = std::make_shared<TensorData>();
  t.impl_->shape = std::move(shape);
  t.impl_->values.assign(shape_numel(t.impl_->shape), v);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> vals) {
  if (shape_numel(shape) != vals.size()) {
    throw DimensionError("tensor data length " + std::to_string(vals.size()) +
                         " does not match shape " + shape_str(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<TensorData>();
  t.impl_->shape = std::move(shape);
  t.impl_->values = std::move(vals);
  return t;
}

Tensor Tensor::row(std::vector<double> vals) {
  Shape s{vals.size()};
  return from(s, std::move(vals));
}

Tensor Tensor::matrix(std::size_t r, std::size_t c, std::vector<double> vals) {
  return from({r, c}, std::move(vals));
}

std::size_t Tensor::rows() const { return impl_->shape.empty() ? 0 : impl_->shape[0]; }

std::size_t Tensor::cols() const {
  if (rank() == 1) return impl_->shape[0];
  if (rank() == 2) return impl_->shape[1];
  throw DimensionError("cols() on tensor of shape " + shape_str(impl_->shape));
}

const std::vector<double>& Tensor::grad() const {
  static const std::vector<double> empty;
  return impl_->grad.empty() ? empty : impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.clear(); }

// --- Tape -------------------------------------------------------------------

Tape::Tape() : prev_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::clear() { nodes_.clear(); }

int Tape::add_node(std::shared_ptr<TensorData> output, std::function<void()> backward_fn) {
  int id = static_cast<int>(nodes_.size());
  output->node = id;
  output->tape = this;
  nodes_.push_back({std::move(output), std::move(backward_fn)});
  return id;
}

void Tape::run_backward(const std::shared_ptr<TensorData>& loss) {
  // Drop stale intermediate gradients so only leaf grads persist across
  // repeated calls.
  for (auto& n : nodes_) n.output->grad.clear();
  loss->grad.assign(1, 1.0);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // not reachable from the loss
    it->backward();
  }
}

namespace autodiff {

bool tracked(const std::shared_ptr<TensorData>& d) {
  return d->requires_grad || (d->node >= 0 && d->tape == g_active_tape && g_active_tape);
}

bool tracked(const Tensor& t) { return tracked(t.impl()); }

void record(Tensor& out, std::function<void()> backward_fn) {
  if (g_active_tape) g_active_tape->add_node(out.impl(), std::move(backward_fn));
}

std::vector<double>& grad_acc(const std::shared_ptr<TensorData>& d) {
  if (d->grad.empty()) d->grad.assign(d->values.size(), 0.0);
  return d->grad;
}

}  // namespace autodiff

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward expects a scalar loss, got shape " + shape_str(loss.shape()));
  }
  Tape* t = Tape::active();
  if (!t) throw ContractError("backward called with no active tape");
  t->run_backward(loss.impl());
}

// --- elementwise binary ops ---------------------------------------------------

namespace {

enum class Broadcast { kNone, kRow, kCol };

// Figures out how `small` maps onto `big`: full shape match, a row vector
// repeated down the rows, or a column repeated across the columns.
Broadcast broadcast_kind(const Shape& big, const Shape& small, const char* opname) {
  if (big == small) return Broadcast::kNone;
  if (big.size() == 2) {
    std::size_t n = big[0], d = big[1];
    if ((small.size() == 1 && small[0] == d) ||
        (small.size() == 2 && small[0] == 1 && small[1] == d)) {
      return Broadcast::kRow;
    }
    if (small.size() == 2 && small[0] == n && small[1] == 1) return Broadcast::kCol;
  }
  throw DimensionError(std::string(opname) + ": incompatible shapes " + shape_str(big) +
                       " and " + shape_str(small));
}

// Index of the broadcast operand element feeding position i of the result.
inline std::size_t bsrc(Broadcast k, std::size_t i, std::size_t d) {
  switch (k) {
    case Broadcast::kNone: return i;
    case Broadcast::kRow: return i % d;
    case Broadcast::kCol: return i / d;
  }
  return i;
}

// Reduce a full-size gradient back onto the (possibly broadcast) operand.
void reduce_into(const DataPtr& dst, Broadcast k, const std::vector<double>& g, std::size_t d) {
  auto& acc = autodiff::grad_acc(dst);
  if (k == Broadcast::kNone) {
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) acc[bsrc(k, i, d)] += g[i];
  }
}

template <typename Fwd, typename Bwd>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  const Tensor* big = &a;
  const Tensor* small = &b;
  bool a_is_big = true;
  Broadcast kind;
  if (a.shape() == b.shape()) {
    kind = Broadcast::kNone;
  } else if (a.numel() >= b.numel()) {
    kind = broadcast_kind(a.shape(), b.shape(), name);
  } else {
    big = &b;
    small = &a;
    a_is_big = false;
    kind = broadcast_kind(b.shape(), a.shape(), name);
  }
  std::size_t d = big->rank() == 2 ? big->shape()[1] : big->numel();
  Tensor out = Tensor::zeros(big->shape());
  const auto& bv = big->values();
  const auto& sv = small->values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    double x = a_is_big ? bv[i] : sv[bsrc(kind, i, d)];
    double y = a_is_big ? sv[bsrc(kind, i, d)] : bv[i];
    ov[i] = fwd(x, y);
  }

  if ((autodiff::tracked(a) || autodiff::tracked(b)) && Tape::active()) {
    auto ad = a.impl();
    auto bd = b.impl();
    auto od = out.impl();
    bool track_a = autodiff::tracked(a);
    bool track_b = autodiff::tracked(b);
    autodiff::record(out, [=]() {
      const auto& g = od->grad;
      std::vector<double> ga(track_a ? g.size() : 0, 0.0);
      std::vector<double> gb(track_b ? g.size() : 0, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        std::size_t si = bsrc(kind, i, d);
        double x = a_is_big ? ad->values[i] : ad->values[si];
        double y = a_is_big ? bd->values[si] : bd->values[i];
        auto [dx, dy] = bwd(x, y);
        if (track_a) ga[i] = dx * g[i];
        if (track_b) gb[i] = dy * g[i];
      }
      if (track_a) reduce_into(ad, a_is_big ? Broadcast::kNone : kind, ga, d);
      if (track_b) reduce_into(bd, a_is_big ? kind : Broadcast::kNone, gb, d);
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y) { return std::pair{y, x}; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  // Ties route the gradient to the first operand.
  return binary_op(
      "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y) {
        return x >= y ? std::pair{1.0, 0.0} : std::pair{0.0, 1.0};
      });
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    autodiff::record(out, [=]() {
      auto& g = autodiff::grad_acc(ad);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * od->grad[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    autodiff::record(out, [=]() {
      auto& g = autodiff::grad_acc(ad);
      // Subgradient 0 at the kink.
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += (ad->values[i] > 0.0) * od->grad[i];
    });
  }
  return out;
}

// --- matmul -------------------------------------------------------------------

namespace {

void require_rank2(const Tensor& t, const char* opname) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(opname) + " expects rank-2 operands, got " +
                         shape_str(t.shape()));
  }
}

constexpr std::size_t kMatmulGrain = 1 << 15;  // flops per worker slice, roughly

// C[n x m] += A[n x k] * B[k x m], rows [lo, hi).
void mm_nn(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
           std::size_t m) {
  std::size_t grain = std::max<std::size_t>(1, kMatmulGrain / std::max<std::size_t>(1, k * m));
  parallel_for(n, grain, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      double* c = C + i * m;
      const double* a = A + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        double ap = a[p];
        const double* b = B + p * m;
        for (std::size_t j = 0; j < m; ++j) c[j] += ap * b[j];
      }
    }
  });
}

// C[n x m] += A[n x k] * B[m x k]^T.
void mm_nt(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
           std::size_t m) {
  std::size_t grain = std::max<std::size_t>(1, kMatmulGrain / std::max<std::size_t>(1, k * m));
  parallel_for(n, grain, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double* a = A + i * k;
      double* c = C + i * m;
      for (std::size_t j = 0; j < m; ++j) {
        const double* b = B + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
        c[j] += acc;
      }
    }
  });
}

// C[k x m] += A[n x k]^T * B[n x m]. Serial over n; parallel over k rows
// would race, so the loop partitions output rows instead.
void mm_tn(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
           std::size_t m) {
  std::size_t grain = std::max<std::size_t>(1, kMatmulGrain / std::max<std::size_t>(1, n * m));
  parallel_for(k, grain, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* a = A + i * k;
      const double* b = B + i * m;
      for (std::size_t p = lo; p < hi; ++p) {
        double ap = a[p];
        double* c = C + p * m;
        for (std::size_t j = 0; j < m; ++j) c[j] += ap * b[j];
      }
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  std::size_t n = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], m = b.shape()[1];
  if (k != k2) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({n, m});
  mm_nn(a.values().data(), b.values().data(), out.values().data(), n, k, m);
  if ((autodiff::tracked(a) || autodiff::tracked(b)) && Tape::active()) {
    auto ad = a.impl();
    auto bd = b.impl();
    auto od = out.impl();
    bool ta = autodiff::tracked(a), tb = autodiff::tracked(b);
    autodiff::record(out, [=]() {
      const auto& g = od->grad;
      if (ta) {
        auto& ga = autodiff::grad_acc(ad);
        mm_nt(g.data(), bd->values.data(), ga.data(), n, m, k);  // dA = G * B^T
      }
      if (tb) {
        auto& gb = autodiff::grad_acc(bd);
        mm_tn(ad->values.data(), g.data(), gb.data(), n, k, m);  // dB = A^T * G
      }
    });
  }
  return out;
}

Tensor matmul_t(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_t");
  require_rank2(b, "matmul_t");
  std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_t: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros({n, m});
  mm_nt(a.values().data(), b.values().data(), out.values().data(), n, k, m);
  if ((autodiff::tracked(a) || autodiff::tracked(b)) && Tape::active()) {
    auto ad = a.impl();
    auto bd = b.impl();
    auto od = out.impl();
    bool ta = autodiff::tracked(a), tb = autodiff::tracked(b);
    autodiff::record(out, [=]() {
      const auto& g = od->grad;
      if (ta) {
        auto& ga = autodiff::grad_acc(ad);
        mm_nn(g.data(), bd->values.data(), ga.data(), n, m, k);  // dA = G * B
      }
      if (tb) {
        auto& gb = autodiff::grad_acc(bd);
        mm_tn(g.data(), ad->values.data(), gb.data(), n, m, k);  // dB = G^T * A
      }
    });
  }
  return out;
}

// --- indexing and reductions ---------------------------------------------------

namespace {

std::size_t row_width(const Tensor& t, const char* opname) {
  if (t.rank() == 1) return 1;
  if (t.rank() == 2) return t.shape()[1];
  throw DimensionError(std::string(opname) + " expects rank-1 or rank-2 input, got " +
                       shape_str(t.shape()));
}

void check_offsets(const std::vector<std::size_t>& offsets, std::size_t nrows,
                   const char* opname) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != nrows) {
    throw ArgumentError(std::string(opname) + ": offsets must start at 0 and end at " +
                        std::to_string(nrows));
  }
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    if (offsets[s + 1] <= offsets[s]) {
      throw DegenerateNeighborhoodError(std::string(opname) + ": segment " + std::to_string(s) +
                                        " is empty");
    }
  }
}

}  // namespace

Tensor gather_rows(const Tensor& a, const std::vector<std::size_t>& idx) {
  std::size_t d = row_width(a, "gather_rows");
  std::size_t n = a.rows();
  for (std::size_t i : idx) {
    if (i >= n) {
      throw IndexError("gather_rows: index " + std::to_string(i) + " out of range [0, " +
                       std::to_string(n) + ")");
    }
  }
  Shape oshape = a.rank() == 1 ? Shape{idx.size()} : Shape{idx.size(), d};
  Tensor out = Tensor::zeros(oshape);
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(av.data() + idx[r] * d, d, ov.data() + r * d);
  }
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    auto ids = idx;  // own a copy for the closure
    autodiff::record(out, [=]() {
      auto& g = autodiff::grad_acc(ad);
      const auto& go = od->grad;
      // Scatter-add: duplicate indices accumulate.
      for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t c = 0; c < d; ++c) g[ids[r] * d + c] += go[r * d + c];
      }
    });
  }
  return out;
}

namespace {

enum class SegKind { kMean, kSum };

Tensor segment_reduce(const Tensor& a, const std::vector<std::size_t>& offsets, SegKind kind) {
  const char* name = kind == SegKind::kMean ? "segment_mean" : "segment_sum";
  std::size_t d = row_width(a, name);
  check_offsets(offsets, a.rows(), name);
  std::size_t s = offsets.size() - 1;
  Shape oshape = a.rank() == 1 ? Shape{s} : Shape{s, d};
  Tensor out = Tensor::zeros(oshape);
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t seg = 0; seg < s; ++seg) {
    double* o = ov.data() + seg * d;
    for (std::size_t r = offsets[seg]; r < offsets[seg + 1]; ++r) {
      const double* x = av.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) o[c] += x[c];
    }
    if (kind == SegKind::kMean) {
      double cnt = static_cast<double>(offsets[seg + 1] - offsets[seg]);
      for (std::size_t c = 0; c < d; ++c) o[c] /= cnt;
    }
  }
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    auto offs = offsets;
    autodiff::record(out, [=]() {
      auto& g = autodiff::grad_acc(ad);
      const auto& go = od->grad;
      for (std::size_t seg = 0; seg + 1 < offs.size(); ++seg) {
        double w = kind == SegKind::kMean
                       ? 1.0 / static_cast<double>(offs[seg + 1] - offs[seg])
                       : 1.0;
        const double* gs = go.data() + seg * d;
        for (std::size_t r = offs[seg]; r < offs[seg + 1]; ++r) {
          for (std::size_t c = 0; c < d; ++c) g[r * d + c] += w * gs[c];
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor segment_mean(const Tensor& a, const std::vector<std::size_t>& offsets) {
  return segment_reduce(a, offsets, SegKind::kMean);
}

Tensor segment_sum(const Tensor& a, const std::vector<std::size_t>& offsets) {
  return segment_reduce(a, offsets, SegKind::kSum);
}

Tensor segment_max(const Tensor& a, const std::vector<std::size_t>& offsets) {
  std::size_t d = row_width(a, "segment_max");
  check_offsets(offsets, a.rows(), "segment_max");
  std::size_t s = offsets.size() - 1;
  Shape oshape = a.rank() == 1 ? Shape{s} : Shape{s, d};
  Tensor out = Tensor::zeros(oshape);
  std::vector<std::size_t> argmax(s * d);
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t seg = 0; seg < s; ++seg) {
    for (std::size_t c = 0; c < d; ++c) {
      std::size_t best = offsets[seg];
      double bv = av[best * d + c];
      for (std::size_t r = offsets[seg] + 1; r < offsets[seg + 1]; ++r) {
        if (av[r * d + c] > bv) {
          bv = av[r * d + c];
          best = r;
        }
      }
      ov[seg * d + c] = bv;
      argmax[seg * d + c] = best;
    }
  }
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    autodiff::record(out, [=, am = std::move(argmax)]() {
      auto& g = autodiff::grad_acc(ad);
      const auto& go = od->grad;
      for (std::size_t i = 0; i < go.size(); ++i) {
        std::size_t c = i % d;
        g[am[i] * d + c] += go[i];
      }
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  if (a.shape()[0] != b.shape()[0]) {
    throw DimensionError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::size_t n = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  Tensor out = Tensor::zeros({n, p + q});
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out.values();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * p, p, ov.data() + r * (p + q));
    std::copy_n(bv.data() + r * q, q, ov.data() + r * (p + q) + p);
  }
  if ((autodiff::tracked(a) || autodiff::tracked(b)) && Tape::active()) {
    auto ad = a.impl();
    auto bd = b.impl();
    auto od = out.impl();
    bool ta = autodiff::tracked(a), tb = autodiff::tracked(b);
    autodiff::record(out, [=]() {
      const auto& go = od->grad;
      if (ta) {
        auto& g = autodiff::grad_acc(ad);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < p; ++c) g[r * p + c] += go[r * (p + q) + c];
      }
      if (tb) {
        auto& g = autodiff::grad_acc(bd);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < q; ++c) g[r * q + c] += go[r * (p + q) + p + c];
      }
    });
  }
  return out;
}

Tensor repeat_cols(const Tensor& a, std::size_t m) {
  require_rank2(a, "repeat_cols");
  if (m == 0) throw ArgumentError("repeat_cols: multiplier must be positive");
  std::size_t n = a.shape()[0], d = a.shape()[1];
  Tensor out = Tensor::zeros({n, d * m});
  const auto& av = a.values();
  auto& ov = out.values();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d * m; ++j) ov[r * d * m + j] = av[r * d + j / m];
  }
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    autodiff::record(out, [=]() {
      auto& g = autodiff::grad_acc(ad);
      const auto& go = od->grad;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < d * m; ++j) g[r * d + j / m] += go[r * d * m + j];
      }
    });
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (autodiff::tracked(a) && Tape::active()) {
    auto ad = a.impl();
    auto od = out.impl();
    autodiff::record(out, [=]() {
      auto& g = autodiff::grad_acc(ad);
      double go = od->grad[0];
      for (double& v : g) v += go;
    });
  }
  return out;
}

// --- batch normalization --------------------------------------------------------

BNState BNState::make(std::size_t d) {
  BNState s;
  s.gamma = Tensor::full({d}, 1.0);
  s.beta = Tensor::zeros({d});
  s.gamma.set_requires_grad(true);
  s.beta.set_requires_grad(true);
  s.running_mean.assign(d, 0.0);
  s.running_var.assign(d, 1.0);
  return s;
}

Tensor batch_stats_normalize(const Tensor& x, BNState& state, bool training,
                             bool update_running) {
  require_rank2(x, "batch_stats_normalize");
  std::size_t n = x.shape()[0], d = x.shape()[1];
  if (d != state.dim()) {
    throw DimensionError("batch_stats_normalize: input has " + std::to_string(d) +
                         " channels, state has " + std::to_string(state.dim()));
  }
  if (training && n < 2) {
    throw InsufficientBatchError("batch_stats_normalize: training mode needs n >= 2, got n = " +
                                 std::to_string(n));
  }

  std::vector<double> mean(d, 0.0), var(d, 0.0);
  const auto& xv = x.values();
  if (training) {
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += xv[r * d + c];
    for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        double dv = xv[r * d + c] - mean[c];
        var[c] += dv * dv;
      }
    }
    for (std::size_t c = 0; c < d; ++c) var[c] /= static_cast<double>(n);
    if (update_running) {
      for (std::size_t c = 0; c < d; ++c) {
        state.running_mean[c] =
            (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mean[c];
        state.running_var[c] =
            (1.0 - state.momentum) * state.running_var[c] + state.momentum * var[c];
      }
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  std::vector<double> inv_std(d);
  for (std::size_t c = 0; c < d; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + state.eps);

  Tensor out = Tensor::zeros(x.shape());
  auto& ov = out.values();
  const auto& gv = state.gamma.values();
  const auto& bv = state.beta.values();
  std::vector<double> xhat(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      double h = (xv[r * d + c] - mean[c]) * inv_std[c];
      xhat[r * d + c] = h;
      ov[r * d + c] = gv[c] * h + bv[c];
    }
  }

  bool any = autodiff::tracked(x) || autodiff::tracked(state.gamma) ||
             autodiff::tracked(state.beta);
  if (any && Tape::active()) {
    auto xd = x.impl();
    auto gd = state.gamma.impl();
    auto bd = state.beta.impl();
    auto od = out.impl();
    bool tx = autodiff::tracked(x);
    bool tg = autodiff::tracked(state.gamma);
    bool tb = autodiff::tracked(state.beta);
    autodiff::record(out, [=, xh = std::move(xhat), istd = std::move(inv_std)]() {
      const auto& go = od->grad;
      if (tg) {
        auto& gg = autodiff::grad_acc(gd);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) gg[c] += go[r * d + c] * xh[r * d + c];
      }
      if (tb) {
        auto& gb = autodiff::grad_acc(bd);
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < d; ++c) gb[c] += go[r * d + c];
      }
      if (tx) {
        auto& gx = autodiff::grad_acc(xd);
        if (training) {
          // dx = gamma*istd * (g - mean(g) - xhat * mean(g*xhat))
          std::vector<double> mg(d, 0.0), mgh(d, 0.0);
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              mg[c] += go[r * d + c];
              mgh[c] += go[r * d + c] * xh[r * d + c];
            }
          }
          for (std::size_t c = 0; c < d; ++c) {
            mg[c] /= static_cast<double>(n);
            mgh[c] /= static_cast<double>(n);
          }
          const auto& gam = gd->values;
          for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
              gx[r * d + c] += gam[c] * istd[c] *
                               (go[r * d + c] - mg[c] - xh[r * d + c] * mgh[c]);
            }
          }
        } else {
          const auto& gam = gd->values;
          for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += gam[c] * istd[c] * go[r * d + c];
        }
      }
    });
  }
  return out;
}

}  // namespace dunet
