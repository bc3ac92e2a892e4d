#include <cmath>

#include "doctest.h"
#include "pie/gradcheck.hpp"
#include "pie/optim.hpp"
#include "pie/tape.hpp"

using namespace pie;

namespace {

Tensor<double> random_tensor(std::vector<int64_t> shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& x : t.v) x = rng.next_normal() * scale;
  return t;
}

std::shared_ptr<AttentionMask> full_mask(int64_t n) {
  auto m = std::make_shared<AttentionMask>(n);
  std::fill(m->allow.begin(), m->allow.end(), 1);
  return m;
}

std::shared_ptr<AttentionMask> identity_mask(int64_t n) {
  auto m = std::make_shared<AttentionMask>(n);
  for (int64_t i = 0; i < n; ++i) m->at(i, i) = 1;
  return m;
}

}  // namespace

TEST_CASE("3x3 matmul matches the hand-computed fixture") {
  Tape<double> t;
  auto a = t.constant(Tensor<double>({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  auto b = t.constant(Tensor<double>({3, 3}, {9, 8, 7, 6, 5, 4, 3, 2, 1}));
  auto c = t.matmul(a, b);
  // row 0: (1*9+2*6+3*3, 1*8+2*5+3*2, 1*7+2*4+3*1) = (30, 24, 18)
  std::vector<double> expected = {30, 24, 18, 84, 69, 54, 138, 114, 90};
  CHECK(t.value(c).v == expected);
}

TEST_CASE("softmax of equal values is uniform and rows sum to one") {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({2, 4}, {3, 3, 3, 3, -1, 0, 1, 2}));
  auto s = t.softmax_rows(x);
  for (int64_t j = 0; j < 4; ++j) CHECK(t.value(s).at(0, j) == doctest::Approx(0.25));
  for (int64_t i = 0; i < 2; ++i) {
    double sum = 0;
    for (int64_t j = 0; j < 4; ++j) sum += t.value(s).at(i, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("attention with an identity mask returns V rows") {
  Rng rng(3);
  Tape<double> t;
  auto q = t.constant(random_tensor({5, 8}, rng));
  auto k = t.constant(random_tensor({5, 8}, rng));
  Tensor<double> vt = random_tensor({5, 8}, rng);
  auto v = t.constant(vt);
  auto out = t.masked_attention(q, k, v, AttentionSpec<double>::single(identity_mask(5), 2));
  for (int64_t i = 0; i < 5; ++i)
    for (int64_t j = 0; j < 8; ++j) CHECK(t.value(out).at(i, j) == doctest::Approx(vt.at(i, j)));
}

TEST_CASE("attention with an all-true mask equals unmasked softmax attention") {
  Rng rng(11);
  Tape<double> t;
  Tensor<double> Q = random_tensor({4, 6}, rng), K = random_tensor({4, 6}, rng),
                 V = random_tensor({4, 6}, rng);
  auto out = t.masked_attention(t.constant(Q), t.constant(K), t.constant(V),
                                AttentionSpec<double>::single(full_mask(4), 1));
  // independent dense computation
  double scale = 1.0 / std::sqrt(6.0);
  for (int64_t i = 0; i < 4; ++i) {
    double logits[4], mx = -1e300;
    for (int64_t j = 0; j < 4; ++j) {
      double dot = 0;
      for (int64_t c = 0; c < 6; ++c) dot += Q.at(i, c) * K.at(j, c);
      logits[j] = dot * scale;
      mx = std::max(mx, logits[j]);
    }
    double sum = 0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      sum += l;
    }
    for (int64_t c = 0; c < 6; ++c) {
      double o = 0;
      for (int64_t j = 0; j < 4; ++j) o += logits[j] / sum * V.at(j, c);
      CHECK(t.value(out).at(i, c) == doctest::Approx(o).epsilon(1e-12));
    }
  }
}

TEST_CASE("backward on sum(W x) yields the outer-product structure") {
  // loss = sum(W·x): dW = 1 * xᵀ broadcast over rows
  Parameter<double> W("W", Tensor<double>({2, 3}, {0.5, -1, 2, 1, 0, -2}));
  Tape<double> t;
  auto w = t.parameter(W);
  auto x = t.constant(Tensor<double>({3, 1}, {1, 2, 3}));
  auto y = t.matmul(w, x);
  auto loss = t.reduce_sum(y);
  t.backward(loss);
  std::vector<double> expected = {1, 2, 3, 1, 2, 3};
  CHECK(W.grad.v == expected);
}

TEST_CASE("zero-loss constant graph leaves all gradients zero") {
  Parameter<double> W("W", Tensor<double>({2, 2}, {1, 2, 3, 4}));
  Tape<double> t;
  auto w = t.parameter(W);
  auto loss = t.mul_scalar(t.reduce_sum(w), 0.0);
  t.backward(loss);
  for (double g : W.grad.v) CHECK(g == 0.0);
}

TEST_CASE("backward before forward signals invalid state") {
  Tape<double> t;
  CHECK_THROWS_AS(t.backward(0), ProgrammingError);
  auto a = t.constant(Tensor<double>({2, 2}));
  CHECK_THROWS_AS(t.backward(a), ProgrammingError);  // non-scalar loss
  CHECK_THROWS_AS(t.backward(99), ProgrammingError);
}

TEST_CASE("repeated backward calls accumulate parameter gradients") {
  Parameter<double> W("W", Tensor<double>({1, 1}, {3.0}));
  Tape<double> t;
  auto loss = t.reduce_sum(t.mul(t.parameter(W), t.parameter(W)));
  t.backward(loss);
  double once = W.grad.v[0];
  t.backward(loss);
  CHECK(W.grad.v[0] == doctest::Approx(2 * once));
}

TEST_CASE("shape mismatches are reported as programming errors") {
  Tape<double> t;
  auto a = t.constant(Tensor<double>({2, 3}));
  auto b = t.constant(Tensor<double>({2, 3}));
  CHECK_THROWS_AS(t.matmul(a, b), ProgrammingError);
  auto c = t.constant(Tensor<double>({3, 2}));
  CHECK_THROWS_AS(t.add(a, c), ProgrammingError);
}

// ---- gradient checks per primitive ----

namespace {

// Builds a scalar loss from a primitive applied to parameters, then runs the
// finite-difference check.
template <class BuildFn>
double primitive_max_rel_err(std::vector<Parameter<double>*> params, BuildFn build) {
  auto eval = [&](bool with_grad) {
    Tape<double> t;
    auto loss = build(t);
    if (with_grad) t.backward(loss);
    return t.value(loss).v[0];
  };
  return grad_check(params, eval).max_rel_err;
}

}  // namespace

TEST_CASE("gradients of every primitive pass central finite differences") {
  Rng rng(17);
  Parameter<double> A("A", random_tensor({4, 6}, rng, 0.7));
  Parameter<double> B("B", random_tensor({6, 5}, rng, 0.7));
  Parameter<double> C("C", random_tensor({4, 6}, rng, 0.7));
  Parameter<double> bias("bias", random_tensor({6}, rng, 0.5));
  Parameter<double> gain("gain", random_tensor({6}, rng, 0.3));
  Tensor<double> fixed = random_tensor({4, 6}, rng, 1.1);

  SUBCASE("matmul") {
    double err = primitive_max_rel_err({&A, &B}, [&](Tape<double>& t) {
      return t.reduce_sum(t.gelu(t.matmul(t.parameter(A), t.parameter(B))));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("matmul_nt") {
    double err = primitive_max_rel_err({&A, &C}, [&](Tape<double>& t) {
      return t.reduce_sum(t.gelu(t.matmul_nt(t.parameter(A), t.parameter(C))));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("add_bias and mul") {
    double err = primitive_max_rel_err({&A, &bias}, [&](Tape<double>& t) {
      auto x = t.add_bias(t.parameter(A), t.parameter(bias));
      return t.reduce_sum(t.mul(x, t.constant(fixed)));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("layer_norm") {
    double err = primitive_max_rel_err({&A, &gain, &bias}, [&](Tape<double>& t) {
      auto y = t.layer_norm(t.parameter(A), t.parameter(gain), t.parameter(bias));
      return t.reduce_sum(t.mul(y, t.constant(fixed)));
    });
    CHECK(err < 1e-4);
  }
  SUBCASE("gelu") {
    double err = primitive_max_rel_err({&A}, [&](Tape<double>& t) {
      return t.reduce_sum(t.gelu(t.parameter(A)));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("softmax_rows") {
    double err = primitive_max_rel_err({&A}, [&](Tape<double>& t) {
      auto y = t.softmax_rows(t.parameter(A));
      return t.reduce_sum(t.mul(y, t.constant(fixed)));
    });
    CHECK(err < 1e-4);
  }
  SUBCASE("rowwise_dot and sub") {
    double err = primitive_max_rel_err({&A, &C}, [&](Tape<double>& t) {
      auto d = t.rowwise_dot(t.parameter(A), t.sub(t.parameter(C), t.parameter(A)));
      return t.reduce_sum(d);
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("embedding lookup and bag") {
    double err = primitive_max_rel_err({&A}, [&](Tape<double>& t) {
      auto table = t.parameter(A);
      auto rows = t.embedding_lookup(table, {0, 2, 2, 3});
      typename Tape<double>::Bag b1{{0, 1.0}, {1, 0.5}};
      typename Tape<double>::Bag b2{{3, 1.0}};
      auto bag = t.embedding_bag(table, {b1, b2});
      return t.add(t.reduce_sum(t.gelu(rows)), t.reduce_sum(t.gelu(bag)));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("gather and replace rows") {
    Tensor<double> mult = random_tensor({4, 6}, rng);
    double err = primitive_max_rel_err({&A}, [&](Tape<double>& t) {
      auto g = t.gather_rows(t.parameter(A), {3, 1, 1, 0});
      Tensor<double> rows({1, 6});
      rows.fill(0.25);
      auto r = t.replace_rows(g, {2}, rows);
      return t.reduce_sum(t.mul(r, t.constant(mult)));
    });
    CHECK(err < 1e-6);
  }
  SUBCASE("masked attention (multi-head, masked)") {
    auto mask = std::make_shared<AttentionMask>(4);
    // irregular but row-valid mask
    for (int64_t i = 0; i < 4; ++i) mask->at(i, i) = 1;
    mask->at(0, 2) = 1;
    mask->at(1, 0) = 1;
    mask->at(3, 1) = 1;
    mask->at(3, 2) = 1;
    Parameter<double> Qp("Q", random_tensor({4, 6}, rng, 0.8));
    Parameter<double> Kp("K", random_tensor({4, 6}, rng, 0.8));
    Parameter<double> Vp("V", random_tensor({4, 6}, rng, 0.8));
    double err = primitive_max_rel_err({&Qp, &Kp, &Vp}, [&](Tape<double>& t) {
      auto out = t.masked_attention(t.parameter(Qp), t.parameter(Kp), t.parameter(Vp),
                                    AttentionSpec<double>::single(mask, 3));
      return t.reduce_sum(t.mul(out, t.constant(fixed)));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("grad_check flags an intentionally corrupted gradient") {
  Rng rng(23);
  Parameter<double> W("W", random_tensor({3, 3}, rng));
  auto eval = [&](bool with_grad) {
    Tape<double> t;
    auto loss = t.reduce_sum(t.mul(t.parameter(W), t.parameter(W)));
    if (with_grad) {
      t.backward(loss);
      W.grad.v[0] += 1.7;  // corrupt one coordinate
    }
    return t.value(loss).v[0];
  };
  auto report = grad_check({&W}, eval);
  CHECK(report.max_rel_err > 1e-2);
}

TEST_CASE("grad_check on a quadratic bowl is nearly exact") {
  Rng rng(29);
  Parameter<double> w("w", random_tensor({8}, rng));
  auto eval = [&](bool with_grad) {
    Tape<double> t;
    auto loss = t.reduce_sum(t.mul(t.parameter(w), t.parameter(w)));
    if (with_grad) t.backward(loss);
    return t.value(loss).v[0];
  };
  auto report = grad_check({&w}, eval);
  CHECK(report.max_rel_err < 1e-8);
}

TEST_CASE("one adam step on f(w)=w^2 moves toward the minimum") {
  Parameter<double> w("w", Tensor<double>({1}, {1.0}));
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Adam<double> opt(cfg);
  w.grad.v[0] = 2.0;  // d(w^2)/dw at w=1
  opt.step({&w});
  CHECK(std::abs(w.value.v[0]) < 1.0);
}

TEST_CASE("adam converges on a 2-D quadratic within 200 steps") {
  Parameter<double> w("w", Tensor<double>({2}, {1.5, -2.0}));
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  Adam<double> opt(cfg);
  double loss = 0;
  for (int it = 0; it < 200; ++it) {
    loss = 2.0 * w.value.v[0] * w.value.v[0] + 0.5 * w.value.v[1] * w.value.v[1];
    w.grad.v[0] = 4.0 * w.value.v[0];
    w.grad.v[1] = 1.0 * w.value.v[1];
    opt.step({&w});
    w.zero_grad();
  }
  CHECK(loss < 1e-3);
}

TEST_CASE("adam with zero gradients leaves parameters unchanged") {
  Parameter<double> w("w", Tensor<double>({3}, {1, 2, 3}));
  Adam<double> opt;
  w.zero_grad();
  opt.step({&w});
  CHECK(w.value.v == std::vector<double>{1, 2, 3});
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Parameter<double> w("w.bad", Tensor<double>({1}, {1.0}));
  Adam<double> opt;
  w.grad.v[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(opt.step({&w}), doctest::Contains("w.bad"), NumericError);
}

TEST_CASE("dropout uses inverted scaling and keeps gradients consistent") {
  Rng rng(41);
  Tape<float> t;
  Tensor<float> ones({100, 10});
  ones.fill(1.0f);
  Rng drop_rng(7);
  auto x = t.constant(ones);
  auto y = t.dropout(x, 0.3f, drop_rng);
  double sum = 0;
  size_t zeros = 0;
  for (float v : t.value(y).v) {
    sum += v;
    if (v == 0.0f) ++zeros;
  }
  // kept entries are scaled by 1/(1-p); expectation is preserved
  CHECK(sum / 1000.0 == doctest::Approx(1.0).epsilon(0.1));
  CHECK(zeros > 200);
  CHECK(zeros < 400);
}

TEST_CASE("single-threaded tape runs are bit-identical across repeats") {
  Rng rng(53);
  Tensor<double> a = random_tensor({6, 6}, rng), b = random_tensor({6, 6}, rng);
  auto run = [&]() {
    Tape<double> t;
    auto out = t.masked_attention(t.constant(a), t.constant(b), t.constant(a),
                                  AttentionSpec<double>::single(full_mask(6), 2));
    return t.value(t.layer_norm(t.matmul(t.constant(a), out), t.constant(Tensor<double>({6}, {1, 1, 1, 1, 1, 1})),
                                t.constant(Tensor<double>({6})))).v;
  };
  CHECK(run() == run());
}
