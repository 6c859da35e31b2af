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

#include "dunet/errors.hpp"
#include "dunet/tensor.hpp"
#include "support.hpp"

using namespace dunet;
using testsup::max_grad_error;
using testsup::random_tensor;
using testsup::rel_err;

TEST_CASE("elementwise ops compute and differentiate") {
  Tensor a = Tensor::row({1, 2});
  Tensor b = Tensor::row({3, 4});
  CHECK(add(a, b).values() == std::vector<double>{4, 6});

  Tensor x = Tensor::row({1.5, -2.0});
  x.set_requires_grad(true);
  {
    Tape tape;
    Tensor zero = sub(x, x);
    CHECK(zero.values() == std::vector<double>{0, 0});
    backward(sum_all(zero));
  }
  CHECK(x.grad() == std::vector<double>{0, 0});

  Tensor y = Tensor::row({3});
  y.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(mul(y, y)));
  }
  CHECK(y.grad()[0] == doctest::Approx(6.0));

  CHECK_THROWS_AS(add(Tensor::row({1, 2}), Tensor::row({1, 2, 3})), DimensionError);
}

TEST_CASE("broadcast add and mul") {
  Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor row = Tensor::row({10, 20, 30});
  CHECK(add(m, row).values() == std::vector<double>{11, 22, 33, 14, 25, 36});
  Tensor col = Tensor::matrix(2, 1, {2, 3});
  CHECK(mul(m, col).values() == std::vector<double>{2, 4, 6, 12, 15, 18});

  // Gradients reduce along the broadcast axis.
  row.set_requires_grad(true);
  col.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(add(m, row)));
    backward(sum_all(mul(m, col)));
  }
  CHECK(row.grad() == std::vector<double>{2, 2, 2});
  CHECK(col.grad() == std::vector<double>{6, 15});
}

TEST_CASE("matmul values") {
  Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor v = Tensor::matrix(2, 1, {5, 7});
  CHECK(matmul(eye, v).values() == std::vector<double>{5, 7});
  Tensor a = Tensor::matrix(1, 2, {1, 2});
  Tensor b = Tensor::matrix(2, 1, {3, 4});
  CHECK(matmul(a, b).values() == std::vector<double>{11});
  CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3, std::vector<double>(6)),
                         Tensor::matrix(2, 3, std::vector<double>(6))),
                  DimensionError);
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(7);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  double err = max_grad_error({a, b}, [&]() { return sum_all(mul(matmul(a, b), matmul(a, b))); });
  CHECK(err < 1e-6);
}

TEST_CASE("relu forward and subgradient") {
  Tensor x = Tensor::row({-1, 0, 2});
  CHECK(relu(x).values() == std::vector<double>{0, 0, 2});
  x.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(relu(x)));
  }
  CHECK(x.grad() == std::vector<double>{0, 0, 1});
}

TEST_CASE("gather_rows selects, scatters, and validates") {
  Tensor rows = Tensor::matrix(3, 1, {1, 2, 3});
  CHECK(gather_rows(rows, {2, 0}).values() == std::vector<double>{3, 1});
  CHECK(gather_rows(rows, {0, 1, 2}).values() == rows.values());
  CHECK_THROWS_AS(gather_rows(rows, {3}), IndexError);

  rows.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(gather_rows(rows, {0, 0})));
  }
  CHECK(rows.grad() == std::vector<double>{2, 0, 0});
}

TEST_CASE("gather/scatter conserves gradient mass") {
  Rng rng(11);
  Tensor src = random_tensor({16, 4}, rng);
  src.set_requires_grad(true);
  std::vector<std::size_t> idx;
  for (int i = 0; i < 40; ++i) idx.push_back(rng.below(16));
  Tensor out;
  {
    Tape tape;
    out = gather_rows(src, idx);
    Tensor w = random_tensor({40, 4}, rng);
    backward(sum_all(mul(out, w)));
    double out_mass = 0.0, src_mass = 0.0;
    for (double g : out.impl()->grad) out_mass += g;
    for (double g : src.grad()) src_mass += g;
    CHECK(std::abs(out_mass - src_mass) < 1e-12);
  }
}

TEST_CASE("segment_mean values and gradients") {
  Tensor rows = Tensor::matrix(2, 1, {2, 4});
  CHECK(segment_mean(rows, {0, 2}).values() == std::vector<double>{3});
  Tensor three = Tensor::matrix(3, 1, {1, 2, 3});
  CHECK(segment_mean(three, {0, 1, 2, 3}).values() == std::vector<double>{1, 2, 3});

  three.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(segment_mean(three, {0, 3})));
  }
  for (double g : three.grad()) CHECK(g == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(segment_mean(three, {0, 1, 1, 3}), DegenerateNeighborhoodError);
}

TEST_CASE("batch normalization examples") {
  // channel values [1, 3] with eps -> 0: mean 2, std 1.
  BNState bn = BNState::make(1);
  bn.eps = 0.0;
  Tensor x = Tensor::matrix(2, 1, {1, 3});
  Tensor y = batch_stats_normalize(x, bn, /*training=*/true);
  CHECK(y.values()[0] == doctest::Approx(-1.0));
  CHECK(y.values()[1] == doctest::Approx(1.0));

  // Already zero-mean unit-variance input is a fixed point up to eps.
  BNState bn2 = BNState::make(1);
  Tensor z = Tensor::matrix(2, 1, {-1, 1});
  Tensor out = batch_stats_normalize(z, bn2, true);
  CHECK(out.values()[0] == doctest::Approx(-1.0).epsilon(1e-4));
  CHECK(out.values()[1] == doctest::Approx(1.0).epsilon(1e-4));

  // Eval mode applies the affine map against running statistics.
  BNState bn3 = BNState::make(1);
  bn3.eps = 0.0;
  bn3.gamma.values()[0] = 2.0;
  bn3.beta.values()[0] = 1.0;
  Tensor one = Tensor::matrix(1, 1, {1});
  CHECK(batch_stats_normalize(one, bn3, /*training=*/false).values()[0] == doctest::Approx(3.0));

  BNState bn4 = BNState::make(1);
  CHECK_THROWS_AS(batch_stats_normalize(one, bn4, true), InsufficientBatchError);
}

TEST_CASE("batch statistics are exact per channel") {
  Rng rng(3);
  for (double scalev : {1.0, 40.0, 2000.0}) {
    Tensor x = random_tensor({64, 5}, rng, -scalev, scalev);
    BNState bn = BNState::make(5);
    Tensor y = batch_stats_normalize(x, bn, true);
    for (std::size_t c = 0; c < 5; ++c) {
      double mean = 0.0, var = 0.0, xvar = 0.0, xmean = 0.0;
      for (std::size_t r = 0; r < 64; ++r) {
        mean += y.at(r, c);
        xmean += x.at(r, c);
      }
      mean /= 64;
      xmean /= 64;
      for (std::size_t r = 0; r < 64; ++r) {
        var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
        xvar += (x.at(r, c) - xmean) * (x.at(r, c) - xmean);
      }
      var /= 64;
      xvar /= 64;
      CHECK(std::abs(mean) < 1e-10);
      // The eps in the denominator shifts the variance to s^2/(s^2+eps).
      CHECK(std::abs(var - xvar / (xvar + bn.eps)) < 1e-10);
    }
  }
}

TEST_CASE("batch normalization updates running statistics with momentum") {
  BNState bn = BNState::make(1);
  Tensor x = Tensor::matrix(2, 1, {1, 3});  // batch mean 2, biased var 1
  batch_stats_normalize(x, bn, true);
  CHECK(bn.running_mean[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.0));
  CHECK(bn.running_var[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
  // update_running=false leaves them untouched.
  batch_stats_normalize(x, bn, true, /*update_running=*/false);
  CHECK(bn.running_mean[0] == doctest::Approx(0.2));
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::row({1, 2, 3});
  x.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(x));
  }
  CHECK(x.grad() == std::vector<double>{1, 1, 1});

  Tensor y = Tensor::row({-1, 2});
  y.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(relu(y)));
  }
  CHECK(y.grad() == std::vector<double>{0, 1});

  // Repeated calls accumulate into leaf gradients.
  Tensor z = Tensor::row({5});
  z.set_requires_grad(true);
  {
    Tape tape;
    Tensor loss = sum_all(z);
    backward(loss);
    backward(loss);
  }
  CHECK(z.grad() == std::vector<double>{2});

  {
    Tape tape;
    Tensor vec = Tensor::row({1, 2});
    CHECK_THROWS_AS(backward(vec), ContractError);
  }
}

TEST_CASE("requires_grad=false leaves never accumulate") {
  Tensor a = Tensor::row({1, 2});
  Tensor w = Tensor::row({3, 4});
  w.set_requires_grad(true);
  {
    Tape tape;
    backward(sum_all(mul(a, w)));
  }
  CHECK_FALSE(a.has_grad());
  CHECK(w.grad() == std::vector<double>{1, 2});
}

TEST_CASE("every op matches the finite-difference oracle") {
  Rng rng(2024);
  Tensor a = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({5, 4}, rng);
  Tensor row = random_tensor({4}, rng);
  Tensor col = random_tensor({5, 1}, rng);
  Tensor m1 = random_tensor({5, 3}, rng);
  Tensor m2 = random_tensor({3, 4}, rng);
  Tensor m2t = random_tensor({4, 3}, rng);
  Tensor probe56 = random_tensor({5, 6}, rng);
  for (Tensor t : {a, b, row, col, m1, m2, m2t}) t.set_requires_grad(true);
  std::vector<std::size_t> idx{0, 2, 2, 4, 1};
  std::vector<std::size_t> segs{0, 2, 5};
  BNState bn = BNState::make(4);
  bn.gamma.values() = {0.5, 1.5, -0.7, 1.1};
  bn.beta.values() = {0.1, -0.2, 0.3, 0.0};

  auto cases = std::vector<std::pair<const char*, std::function<Tensor()>>>{
      {"add", [&] { return sum_all(mul(add(a, b), b)); }},
      {"sub", [&] { return sum_all(mul(sub(a, b), a)); }},
      {"mul", [&] { return sum_all(mul(mul(a, b), b)); }},
      {"maximum", [&] { return sum_all(mul(maximum(a, b), b)); }},
      {"scale", [&] { return sum_all(mul(scale(a, -1.7), b)); }},
      {"add_row_broadcast", [&] { return sum_all(mul(add(a, row), b)); }},
      {"mul_col_broadcast", [&] { return sum_all(mul(mul(a, col), b)); }},
      {"relu", [&] { return sum_all(mul(relu(a), b)); }},
      {"matmul", [&] { return sum_all(mul(matmul(m1, m2), a)); }},
      {"matmul_t", [&] { return sum_all(mul(matmul_t(m1, Tensor(m2t)), a)); }},
      {"gather_rows", [&] { return sum_all(mul(gather_rows(a, idx), gather_rows(b, idx))); }},
      {"segment_mean", [&] { return sum_all(mul(segment_mean(a, segs), segment_mean(b, segs))); }},
      {"segment_sum", [&] { return sum_all(mul(segment_sum(a, segs), segment_mean(b, segs))); }},
      {"segment_max", [&] { return sum_all(mul(segment_max(a, segs), segment_mean(b, segs))); }},
      {"concat_cols", [&] { return sum_all(mul(concat_cols(a, b), concat_cols(b, a))); }},
      {"repeat_cols", [&] { return sum_all(mul(repeat_cols(m1, 2), probe56)); }},
      {"batch_norm_train",
       [&] { return sum_all(mul(batch_stats_normalize(a, bn, true, false), b)); }},
      {"batch_norm_eval",
       [&] { return sum_all(mul(batch_stats_normalize(a, bn, false), b)); }},
  };
  for (auto& [name, fn] : cases) {
    CAPTURE(name);
    double err = max_grad_error({a, b, row, col, m1, m2, m2t, bn.gamma, bn.beta}, fn);
    CHECK(err < 1e-4);
  }
}
