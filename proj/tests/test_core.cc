#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "core/autograd.h"
#include "core/error.h"
#include "core/rng.h"
#include "core/tensor.h"
#include "gradcheck.h"

using namespace rssl;
using ag::Var;

namespace {

  Tensor random_tensor(Index r, Index c, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    Tensor t(r, c);
    for (Index i = 0; i < t.size(); ++i)
      t[i] = scale * rng.normal();
    return t;
  }

  // Scalar readout with an independent fixed weight per output element.
  Var readout(const Var& y, std::uint64_t seed = 99) {
    const Index n = y.rows() * y.cols();
    const Var w(random_tensor(1, n, seed), false);
    return ag::sum(ag::linear(ag::reshape(y, 1, n), w, Var()));
  }

  constexpr double kTol = 1e-6;

}

TEST_CASE("gemm agrees with a naive triple loop for every transpose combination") {
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const Tensor a = ta ? random_tensor(4, 3, 1) : random_tensor(3, 4, 1);
      const Tensor b = tb ? random_tensor(5, 4, 2) : random_tensor(4, 5, 2);
      Tensor c = random_tensor(3, 5, 3);
      const Tensor c0 = c;
      gemm(a, ta, b, tb, c, 0.7, 0.3);
      for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 5; ++j) {
          double s = 0.0;
          for (Index k = 0; k < 4; ++k)
            s += (ta ? a(k, i) : a(i, k)) * (tb ? b(j, k) : b(k, j));
          CHECK(c(i, j) == doctest::Approx(0.7 * s + 0.3 * c0(i, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("gemm rejects mismatched shapes") {
  Tensor c(2, 2);
  CHECK_THROWS_AS(gemm(Tensor(2, 3), false, Tensor(2, 2), false, c), Error);
}

TEST_CASE("elementwise and structural ops have correct gradients") {
  const Tensor a = random_tensor(4, 3, 10), b = random_tensor(4, 3, 11);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::add(v[0], v[1])); }, {a, b}).worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::sub(v[0], v[1])); }, {a, b}).worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::scale(v[0], -2.5)); }, {a}).worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::gelu(v[0])); }, {a}).worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::concat_cols({v[0], v[1]})); }, {a, b})
          .worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::concat_rows({v[0], v[1]})); }, {a, b})
          .worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::reshape(v[0], 2, 6)); }, {a}).worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::fit_rows(v[0], 2)); }, {a}).worst_relative < kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::fit_rows(v[0], 7)); }, {a}).worst_relative < kTol);
}

TEST_CASE("linear and normalization gradients") {
  const Tensor x = random_tensor(5, 4, 20), w = random_tensor(3, 4, 21), bias = random_tensor(1, 3, 22);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::linear(v[0], v[1], v[2])); }, {x, w, bias})
          .worst_relative < kTol);
  const Tensor g = random_tensor(1, 4, 23), be = random_tensor(1, 4, 24);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::layer_norm(v[0], v[1], v[2])); }, {x, g, be})
          .worst_relative < 1e-5);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::time_norm(v[0], v[1], v[2])); }, {x, g, be})
          .worst_relative < 1e-5);
}

TEST_CASE("layer_norm rows and time_norm columns are standardized") {
  const Tensor x = random_tensor(6, 5, 30, 3.0);
  const Var ones(Tensor(1, 5, 1.0)), zeros(Tensor(1, 5));
  const Tensor ln = ag::layer_norm(Var(x), ones, zeros, 0.0).value();
  for (Index r = 0; r < 6; ++r) {
    double m = 0, s = 0;
    for (Index c = 0; c < 5; ++c)
      m += ln(r, c) / 5;
    for (Index c = 0; c < 5; ++c)
      s += (ln(r, c) - m) * (ln(r, c) - m) / 5;
    CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
  const Tensor tn = ag::time_norm(Var(x), ones, zeros, 0.0).value();
  for (Index c = 0; c < 5; ++c) {
    double m = 0;
    for (Index r = 0; r < 6; ++r)
      m += tn(r, c) / 6;
    CHECK(std::abs(m) < 1e-12);
  }
}

TEST_CASE("softmax families normalize and differentiate") {
  const Tensor x = random_tensor(3, 8, 40);
  const Tensor p = ag::softmax_groups(Var(x), 2).value();
  for (Index r = 0; r < 3; ++r)
    for (Index g = 0; g < 2; ++g) {
      double s = 0;
      for (Index v = 0; v < 4; ++v)
        s += p(r, g * 4 + v);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  const Tensor lp = ag::log_softmax_rows(Var(x)).value();
  for (Index r = 0; r < 3; ++r) {
    double s = 0;
    for (Index c = 0; c < 8; ++c)
      s += std::exp(lp(r, c));
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::softmax_groups(v[0], 2)); }, {x}).worst_relative <
        kTol);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::log_softmax_rows(v[0])); }, {x}).worst_relative <
        kTol);
}

TEST_CASE("convolutions: output lengths and gradients") {
  const Tensor x = random_tensor(23, 3, 50);
  const Tensor w = random_tensor(4, 5 * 3, 51, 0.3), b = random_tensor(1, 4, 52);
  const Var y = ag::conv1d(Var(x), Var(w), Var(b), 5, 3);
  CHECK(y.rows() == (23 - 5) / 3 + 1);
  CHECK(y.cols() == 4);
  // Oracle for one output element.
  double expect = b[2];
  for (Index k = 0; k < 5; ++k)
    for (Index c = 0; c < 3; ++c)
      expect += w(2, k * 3 + c) * x(3 * 4 + k, c);
  CHECK(y.value()(4, 2) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::conv1d(v[0], v[1], v[2], 5, 3)); }, {x, w, b})
          .worst_relative < kTol);

  const Tensor xt = random_tensor(6, 4, 53), wt = random_tensor(4, 5 * 2, 54, 0.3), bt = random_tensor(1, 2, 55);
  const Var yt = ag::conv_transpose1d(Var(xt), Var(wt), Var(bt), 5, 3);
  CHECK(yt.rows() == (6 - 1) * 3 + 5);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::conv_transpose1d(v[0], v[1], v[2], 5, 3)); },
                           {xt, wt, bt})
          .worst_relative < kTol);

  const Tensor wd = random_tensor(5, 3, 56), bd = random_tensor(1, 3, 57);
  const Var yd = ag::depthwise_conv_same(Var(x), Var(wd), Var(bd));
  CHECK(yd.rows() == 23);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::depthwise_conv_same(v[0], v[1], v[2])); },
                           {x, wd, bd})
          .worst_relative < kTol);
}

TEST_CASE("transposed convolution is the adjoint of convolution") {
  // <conv(x), y> == <x, conv_T(y)> with shared weights laid out per the docs.
  const Index cin = 3, cout = 2, k = 4, s = 2, t = 12;
  const Tensor x = random_tensor(t, cin, 60), w = random_tensor(cout, k * cin, 61);
  const Var cx = ag::conv1d(Var(x), Var(w), Var(), k, s);
  const Tensor y = random_tensor(cx.rows(), cout, 62);
  // conv_transpose weight (C_in' = cout) x (K * C_out' = cin).
  Tensor wt(cout, k * cin);
  for (Index o = 0; o < cout; ++o)
    for (Index kk = 0; kk < k; ++kk)
      for (Index c = 0; c < cin; ++c)
        wt(o, kk * cin + c) = w(o, kk * cin + c);
  const Tensor ty = ag::conv_transpose1d(Var(y), Var(wt), Var(), k, s).value();
  double lhs = 0, rhs = 0;
  for (Index i = 0; i < y.size(); ++i)
    lhs += cx.value()[i] * y[i];
  for (Index i = 0; i < x.size(); ++i)
    rhs += x[i] * ty[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("masking, attention, lstm, codebook lookup gradients") {
  const Tensor x = random_tensor(5, 4, 70), emb = random_tensor(1, 4, 71);
  const std::vector<bool> mask{false, true, false, true, true};
  const Tensor masked = ag::mask_rows(Var(x), mask, Var(emb)).value();
  CHECK(masked(1, 2) == emb[2]);
  CHECK(masked(0, 2) == x(0, 2));
  CHECK(testing::gradcheck([&](const auto& v) { return readout(ag::mask_rows(v[0], mask, v[1])); }, {x, emb})
          .worst_relative < kTol);

  const Tensor q = random_tensor(5, 4, 72), k = random_tensor(5, 4, 73), vv = random_tensor(5, 4, 74);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::attention(v[0], v[1], v[2], 2)); }, {q, k, vv})
          .worst_relative < kTol);

  const Tensor gates = random_tensor(6, 4 * 3, 75), rw = random_tensor(4 * 3, 3, 76, 0.5);
  for (bool reverse : {false, true})
    CHECK(testing::gradcheck([&](const auto& v) { return readout(ag::lstm(v[0], v[1], reverse)); }, {gates, rw})
            .worst_relative < kTol);

  const Tensor sel = ag::softmax_groups(Var(random_tensor(3, 8, 77)), 2).value();
  const Tensor book = random_tensor(8, 5, 78);
  CHECK(testing::gradcheck([](const auto& v) { return readout(ag::codebook_lookup(v[0], v[1], 2)); }, {sel, book})
          .worst_relative < kTol);
}

TEST_CASE("lstm reverse direction equals forward direction on the time-reversed input") {
  const Tensor gates = random_tensor(7, 8, 80), rw = random_tensor(8, 2, 81, 0.5);
  Tensor flipped(7, 8);
  for (Index t = 0; t < 7; ++t)
    for (Index c = 0; c < 8; ++c)
      flipped(t, c) = gates(6 - t, c);
  const Tensor rev = ag::lstm(Var(gates), Var(rw), true).value();
  const Tensor fwd = ag::lstm(Var(flipped), Var(rw), false).value();
  for (Index t = 0; t < 7; ++t)
    for (Index c = 0; c < 2; ++c)
      CHECK(rev(t, c) == doctest::Approx(fwd(6 - t, c)).epsilon(1e-12));
}

TEST_CASE("straight-through: hard forward, soft gradient") {
  const Tensor soft = random_tensor(2, 3, 90);
  Tensor hard(2, 3);
  hard(0, 1) = 1.0;
  hard(1, 2) = 1.0;
  Var s(soft, true);
  const Var st = ag::straight_through(hard, s);
  CHECK(st.value()(0, 1) == 1.0);
  CHECK(st.value()(0, 0) == 0.0);
  ag::backward(readout(st));
  Var s2(soft, true);
  ag::backward(readout(s2));
  for (Index i = 0; i < soft.size(); ++i)
    CHECK(s.grad()[i] == s2.grad()[i]);
}

TEST_CASE("no-grad guard records nothing") {
  Var a(random_tensor(2, 2, 95), true);
  {
    ag::NoGradGuard guard;
    const Var y = ag::scale(a, 2.0);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(ag::grad_enabled());
}

TEST_CASE("derive_seed separates tags and indices, rng helpers are reproducible") {
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "b", 0));
  CHECK(derive_seed(1, "a", 0) != derive_seed(1, "a", 1));
  CHECK(derive_seed(1, "a", 0) == derive_seed(1, "a", 0));
  Rng r1(5), r2(5);
  for (int i = 0; i < 100; ++i)
    CHECK(r1.uniform_int(3, 9) == r2.uniform_int(3, 9));
  Rng r(6);
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.uniform_int(-2, 2);
    CHECK(v >= -2);
    CHECK(v <= 2);
  }
}
