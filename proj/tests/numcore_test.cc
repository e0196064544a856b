// tests/numcore_test.cc

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hierctc/tensor.h"

using namespace hierctc;

TEST_CASE("matmul identity and zero cases") {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Rng rng(42);
  Tensor b = Tensor::uniform({3, 2}, -1.0, 1.0, rng);
  Tensor c = matmul(eye, b);
  for (int i = 0; i < 6; ++i) CHECK(c.data()[i] == doctest::Approx(b.data()[i]));

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor z = Tensor::from({2, 1}, {0, 0});
  Tensor az = matmul(a, z);
  CHECK(az.data()[0] == 0.0);
  CHECK(az.data()[1] == 0.0);

  CHECK_THROWS_AS(matmul(a, Tensor::from({3, 1}, {1, 2, 3})),
                  std::invalid_argument);
}

TEST_CASE("matmul gradient of sum equals ones * b^T and matches finite differences") {
  Rng rng(7);
  Tensor a = Tensor::uniform({3, 4}, -1.0, 1.0, rng, /*param=*/true);
  Tensor b = Tensor::uniform({4, 2}, -1.0, 1.0, rng, /*param=*/true);
  a.zero_grad();
  backward(sum(matmul(a, b)));
  // d(sum)/dA = ones(3x2) . B^T
  for (int i = 0; i < 3; ++i)
    for (int p = 0; p < 4; ++p) {
      double expect = 0.0;
      for (int j = 0; j < 2; ++j) expect += b.data()[p * 2 + j];
      CHECK(a.grad()[i * 4 + p] == doctest::Approx(expect).epsilon(1e-12));
    }
  const double err =
      grad_check([&] { return sum(matmul(a, b)); }, {a, b});
  CHECK(err < 1e-6);
}

TEST_CASE("log_softmax examples") {
  Tensor u = log_softmax(Tensor::from({3}, {0, 0, 0}));
  for (double v : u.data()) CHECK(v == doctest::Approx(std::log(1.0 / 3.0)));

  Tensor big = log_softmax(Tensor::from({2}, {1000, 0}));
  CHECK(big.data()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(big.data()[1] == doctest::Approx(-1000.0));
  CHECK(std::isfinite(big.data()[0]));

  Rng rng(3);
  Tensor r = log_softmax(Tensor::uniform({5}, -4.0, 4.0, rng));
  double s = 0.0;
  for (double v : r.data()) s += std::exp(v);
  CHECK(std::abs(s - 1.0) < 1e-12);

  CHECK_THROWS_AS(
      log_softmax(Tensor::from({2}, {std::numeric_limits<double>::infinity(), 0})),
      std::runtime_error);
}

TEST_CASE("layer_norm examples") {
  Tensor gain = Tensor::from({3}, {1, 1, 1});
  Tensor bias = Tensor::from({3}, {0, 0, 0});
  Tensor c = layer_norm(Tensor::from({3}, {5, 5, 5}), gain, bias);
  for (double v : c.data()) CHECK(v == doctest::Approx(0.0));

  Tensor g2 = Tensor::from({2}, {1, 1});
  Tensor b2 = Tensor::from({2}, {0, 0});
  Tensor n = layer_norm(Tensor::from({2}, {1, -1}), g2, b2);
  CHECK(n.data()[0] == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(n.data()[1] == doctest::Approx(-1.0).epsilon(1e-4));

  Rng rng(11);
  Tensor g8 = Tensor::from({8}, std::vector<double>(8, 1.0));
  Tensor b8 = Tensor::from({8}, std::vector<double>(8, 0.0));
  Tensor out = layer_norm(Tensor::uniform({8}, -2.0, 2.0, rng), g8, b8);
  double mean = 0.0;
  for (double v : out.data()) mean += v;
  mean /= 8;
  CHECK(std::abs(mean) < 1e-10);
  double var = 0.0;
  for (double v : out.data()) var += (v - mean) * (v - mean);
  var /= 8;
  CHECK(std::abs(var - 1.0) < 1e-4);
}

TEST_CASE("scaled_dot_attention examples") {
  Rng rng(5);
  // Single key: softmax over a singleton is 1, output equals v.
  Tensor q = Tensor::uniform({2, 4}, -1.0, 1.0, rng);
  Tensor k1 = Tensor::uniform({1, 4}, -1.0, 1.0, rng);
  Tensor v1 = Tensor::uniform({1, 3}, -1.0, 1.0, rng);
  Tensor out = scaled_dot_attention(q, k1, v1);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(out.at(i, j) == doctest::Approx(v1.data()[j]).epsilon(1e-12));

  // Two identical keys: output is the mean of the two values.
  Tensor krow = Tensor::uniform({1, 4}, -1.0, 1.0, rng);
  Tensor k2 = Tensor::from({2, 4}, [&] {
    std::vector<double> d(krow.data());
    d.insert(d.end(), krow.data().begin(), krow.data().end());
    return d;
  }());
  Tensor v2 = Tensor::from({2, 3}, {1, 2, 3, 5, 6, 7});
  Tensor out2 = scaled_dot_attention(Tensor::uniform({1, 4}, -1, 1, rng), k2, v2);
  CHECK(out2.at(0, 0) == doctest::Approx(3.0));
  CHECK(out2.at(0, 1) == doctest::Approx(4.0));
  CHECK(out2.at(0, 2) == doctest::Approx(5.0));

  // Causal mask: position 0 attends only to itself.
  AttentionMask mask = AttentionMask::causal(3);
  Tensor k3 = Tensor::uniform({3, 4}, -1.0, 1.0, rng);
  Tensor v3 = Tensor::uniform({3, 2}, -1.0, 1.0, rng);
  Tensor out3 = scaled_dot_attention(Tensor::uniform({3, 4}, -1, 1, rng), k3, v3, &mask);
  CHECK(out3.at(0, 0) == doctest::Approx(v3.at(0, 0)).epsilon(1e-12));
  CHECK(out3.at(0, 1) == doctest::Approx(v3.at(0, 1)).epsilon(1e-12));

  // Fully masked row is an error.
  AttentionMask dead;
  dead.rows = 1;
  dead.cols = 2;
  dead.allow = {0, 0};
  CHECK_THROWS_AS(scaled_dot_attention(Tensor::uniform({1, 4}, -1, 1, rng),
                                       Tensor::uniform({2, 4}, -1, 1, rng),
                                       Tensor::uniform({2, 2}, -1, 1, rng), &dead),
                  std::invalid_argument);
}

TEST_CASE("backward basics") {
  Tensor x = Tensor::from({4}, {1, 2, 3, 4}, /*param=*/true);
  x.zero_grad();
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));

  // loss = x.x (scalar product with itself) -> grad = 2x
  Tensor y = Tensor::from({3}, {1.0, -2.0, 0.5}, true);
  y.zero_grad();
  backward(sum(mul(y, y)));
  for (int i = 0; i < 3; ++i)
    CHECK(y.grad()[i] == doctest::Approx(2.0 * y.data()[i]));

  // Non-scalar loss is a contract error.
  CHECK_THROWS_AS(backward(x), std::invalid_argument);
}

TEST_CASE("backward sums fan-out contributions and accumulates across calls") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  x.zero_grad();
  // f = g(x) + h(x) with g = sum(x*x), h = sum(3x): df/dx = 2x + 3
  backward(add(sum(mul(x, x)), sum(scale(x, 3.0))));
  for (int i = 0; i < 3; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i] + 3.0));

  // Repeated calls without reset accumulate into the leaf.
  Tensor z = Tensor::from({2}, {1, 1}, true);
  z.zero_grad();
  Tensor loss = sum(z);
  backward(loss);
  backward(loss);
  for (double g : z.grad()) CHECK(g == doctest::Approx(2.0));
}

TEST_CASE("grad_check tolerances") {
  Rng rng(17);
  Tensor w = Tensor::uniform({4}, -1.0, 1.0, rng, true);
  // Linear function: errors at machine-precision scale.
  CHECK(grad_check([&] { return sum(scale(w, 2.5)); }, {w}) < 1e-10);

  Tensor logits = Tensor::uniform({3, 5}, -2.0, 2.0, rng, true);
  CHECK(grad_check([&] { return nll_loss(log_softmax(logits), {1, 0, 4}); },
                   {logits}) < 1e-6);
}

TEST_CASE("every op passes a finite-difference gradient check") {
  Rng rng(23);
  Tensor a = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
  Tensor b = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
  Tensor w = Tensor::uniform({4, 3}, -1.0, 1.0, rng, true);
  Tensor bias = Tensor::uniform({4}, -1.0, 1.0, rng, true);
  Tensor gain = Tensor::uniform({4}, 0.5, 1.5, rng, true);
  Tensor q = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
  Tensor k = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
  Tensor v = Tensor::uniform({3, 4}, -1.0, 1.0, rng, true);
  AttentionMask mask = AttentionMask::causal(3);

  CHECK(grad_check([&] { return sum(add(a, b)); }, {a, b}) < 1e-4);
  CHECK(grad_check([&] { return sum(add_row(a, bias)); }, {a, bias}) < 1e-4);
  CHECK(grad_check([&] { return sum(mul(a, b)); }, {a, b}) < 1e-4);
  CHECK(grad_check([&] { return sum(exp(scale(a, 0.3))); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return sum(gelu(a)); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return sum(matmul(a, w)); }, {a, w}) < 1e-4);
  CHECK(grad_check([&] { return sum(mul(log_softmax(a), b)); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return sum(mul(layer_norm(a, gain, bias), b)); },
                   {a, gain, bias}) < 1e-4);
  CHECK(grad_check([&] { return sum(mul(scaled_dot_attention(q, k, v, &mask), a)); },
                   {q, k, v}) < 1e-4);
  CHECK(grad_check([&] { return sum(gather_rows(a, {0, 2, 2})); }, {a}) < 1e-4);
  CHECK(grad_check([&] { return sum(slice_cols(a, 1, 3)); }, {a}) < 1e-4);
  CHECK(grad_check(
            [&] { return sum(concat_cols({slice_cols(a, 0, 2), slice_cols(b, 2, 4)})); },
            {a, b}) < 1e-4);
}

TEST_CASE("ops are deterministic given a seeded source") {
  Rng rng1(99), rng2(99);
  Tensor t1 = Tensor::uniform({4, 4}, -1.0, 1.0, rng1);
  Tensor t2 = Tensor::uniform({4, 4}, -1.0, 1.0, rng2);
  CHECK(t1.data() == t2.data());
  Tensor o1 = log_softmax(matmul(t1, t1));
  Tensor o2 = log_softmax(matmul(t2, t2));
  CHECK(o1.data() == o2.data());
}
