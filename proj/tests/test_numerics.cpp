#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "capstag/errors.hpp"
#include "capstag/grad_check.hpp"
#include "capstag/tape.hpp"
#include "test_util.hpp"

using namespace capstag;
using testutil::random_tensor;

namespace {

// Re-randomizes the listed parameters and grad-checks the computation at each
// of `points` draws.
void check_gradients(const char* what,
                     const std::function<Var(Tape&, std::vector<Parameter>&)>& f,
                     std::vector<Parameter> params, std::size_t points = 100,
                     double lo = -2.0, double hi = 2.0) {
  Rng rng(std::hash<std::string>{}(what));
  std::vector<Parameter*> ptrs;
  for (Parameter& p : params) ptrs.push_back(&p);
  double worst = 0.0;
  for (std::size_t rep = 0; rep < points; ++rep) {
    for (Parameter& p : params)
      for (double& v : p.value.data) v = uniform_range(rng, lo, hi);
    auto wrapped = [&](Tape& t) { return f(t, params); };
    worst = std::max(worst, grad_check(wrapped, ptrs, 1e-5));
  }
  INFO(what);
  CHECK(worst <= 1e-4);
}

Parameter param(const char* name, std::vector<std::size_t> shape) {
  return Parameter(name, Tensor::zeros(std::move(shape)));
}

}  // namespace

TEST_CASE("matmul identity and selector examples") {
  Tape t;
  Var eye = t.leaf(Tensor::matrix({{1, 0}, {0, 1}}));
  Var m = t.leaf(Tensor::matrix({{1, 2}, {3, 4}}));
  const Tensor& out = t.value(t.matmul(eye, m));
  CHECK(out.data == std::vector<double>{1, 2, 3, 4});

  Var sel = t.leaf(Tensor::matrix({{1, 0}}));
  Var col = t.leaf(Tensor::matrix({{5.0}, {7.0}}));
  const Tensor& picked = t.value(t.matmul(sel, col));
  CHECK(picked.shape == std::vector<std::size_t>{1, 1});
  CHECK(picked.data[0] == 5.0);
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape t;
  Var a = t.leaf(Tensor::zeros({2, 3}));
  Var b = t.leaf(Tensor::zeros({2, 2}));
  CHECK_THROWS_WITH_AS(t.matmul(a, b),
                       "matmul: inner dimensions disagree, [2x3] x [2x2]", DimensionError);
}

TEST_CASE("gradient of sum(A*B) wrt A equals ones x B^T") {
  Rng rng(7);
  Parameter a("a", random_tensor({3, 4}, rng));
  Tensor b_val = random_tensor({4, 2}, rng);
  {
    Tape t;
    Var out = t.sum(t.matmul(t.param(a), t.leaf(b_val)));
    t.backward(out);
  }
  // ones(3x2) x B^T, written out directly
  Tensor expected = Tensor::zeros({3, 4});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t l = 0; l < 4; ++l)
      for (std::size_t j = 0; j < 2; ++j) expected(i, l) += b_val(l, j);
  CHECK(testutil::max_abs_diff(a.grad, expected) < 1e-12);

  Parameter* ptr = &a;
  const double err = grad_check(
      [&](Tape& t) { return t.sum(t.matmul(t.param(a), t.leaf(b_val))); }, {&ptr, 1}, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("sigmoid values") {
  Tape t;
  Var x = t.leaf(Tensor::vec({0.0, 2.0, -2.0, 1000.0, -1000.0}));
  const Tensor& y = t.value(t.sigmoid(x));
  CHECK(y.data[0] == 0.5);
  CHECK(testutil::close(y.data[1], 0.880797, 1e-6));
  CHECK(testutil::close(y.data[1] + y.data[2], 1.0, 1e-12));  // sigma(x)+sigma(-x)=1
  CHECK(std::isfinite(y.data[3]));
  CHECK(std::isfinite(y.data[4]));
  CHECK(y.data[3] > 0.0);
  CHECK(y.data[3] < 1.0);
}

TEST_CASE("tanh values") {
  Tape t;
  Var x = t.leaf(Tensor::vec({0.0, 1.0, -1.0}));
  const Tensor& y = t.value(t.tanh_op(x));
  CHECK(y.data[0] == 0.0);
  CHECK(testutil::close(y.data[1], 0.761594, 1e-6));
  CHECK(y.data[1] == -y.data[2]);
}

TEST_CASE("softmax examples and invariants") {
  Tape t;
  Var c = t.leaf(Tensor::vec({3.7, 3.7, 3.7}));
  const Tensor& u = t.value(t.softmax(c, 0));
  for (double v : u.data) CHECK(testutil::close(v, 1.0 / 3.0, 1e-12));

  Var x = t.leaf(Tensor::vec({0.0, std::log(3.0)}));
  const Tensor& y = t.value(t.softmax(x, 0));
  CHECK(testutil::close(y.data[0], 0.25, 1e-12));
  CHECK(testutil::close(y.data[1], 0.75, 1e-12));

  // shift invariance and normalization for magnitudes up to 1e3
  Rng rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor big = random_tensor({5}, rng, -1e3, 1e3);
    Tensor shifted = big;
    for (double& v : shifted.data) v += 123.25;
    Tape t2;
    const Tensor& a = t2.value(t2.softmax(t2.leaf(big), 0));
    const Tensor& b = t2.value(t2.softmax(t2.leaf(shifted), 0));
    double sum = 0.0;
    for (double v : a.data) sum += v;
    CHECK(testutil::close(sum, 1.0, 1e-12));
    CHECK(testutil::max_abs_diff(a, b) <= 1e-12);
  }
}

TEST_CASE("softmax along both axes of a matrix") {
  Tape t;
  Var m = t.leaf(Tensor::matrix({{0, 1, 2}, {3, 1, 0}}));
  const Tensor& rows = t.value(t.softmax(m, 1));
  const Tensor& cols = t.value(t.softmax(m, 0));
  for (std::size_t i = 0; i < 2; ++i) {
    double s = rows(i, 0) + rows(i, 1) + rows(i, 2);
    CHECK(testutil::close(s, 1.0, 1e-12));
  }
  for (std::size_t j = 0; j < 3; ++j) {
    double s = cols(0, j) + cols(1, j);
    CHECK(testutil::close(s, 1.0, 1e-12));
  }
}

TEST_CASE("logsumexp examples") {
  Tape t;
  const Tensor& ln2 = t.value(t.logsumexp(t.leaf(Tensor::vec({0.0, 0.0})), 0));
  CHECK(testutil::close(ln2.data[0], 0.693147, 1e-6));

  const Tensor& single = t.value(t.logsumexp(t.leaf(Tensor::vec({4.25})), 0));
  CHECK(single.data[0] == 4.25);

  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor x = random_tensor({6}, rng, -100, 100);
    double mx = x.data[0];
    for (double v : x.data) mx = std::max(mx, v);
    Tape t2;
    const double lse = t2.value(t2.logsumexp(t2.leaf(x), 0)).data[0];
    CHECK(lse >= mx);
    // stability identity: identical doubles by construction
    Tensor shifted = x;
    for (double& v : shifted.data) v -= mx;
    const double inner = t2.value(t2.logsumexp(t2.leaf(shifted), 0)).data[0];
    CHECK(lse == mx + inner);
  }
}

TEST_CASE("concat examples") {
  Tape t;
  Var a = t.leaf(Tensor::vec({1, 2}));
  Var b = t.leaf(Tensor::vec({3}));
  CHECK(t.value(t.concat(a, b, 0)).data == std::vector<double>{1, 2, 3});

  Var empty = t.leaf(Tensor::zeros({0}));
  CHECK(t.value(t.concat(a, empty, 0)).data == std::vector<double>{1, 2});

  Var m = t.leaf(Tensor::zeros({2, 3}));
  Var bad = t.leaf(Tensor::zeros({3, 3}));
  CHECK_THROWS_AS(t.concat(m, bad, 1), DimensionError);
}

TEST_CASE("concat gradient splits ones") {
  Parameter a("a", Tensor::vec({1, 2}));
  Parameter b("b", Tensor::vec({3, 4, 5}));
  Tape t;
  Var out = t.sum(t.concat(t.param(a), t.param(b), 0));
  t.backward(out);
  for (double g : a.grad.data) CHECK(g == 1.0);
  for (double g : b.grad.data) CHECK(g == 1.0);
}

TEST_CASE("dropout identity modes are bitwise") {
  Rng rng(5);
  Tensor x = random_tensor({40}, rng);
  Tape t;
  Var in = t.leaf(x);
  Var zero_rate = t.dropout(in, 0.0, rng, true);
  CHECK(t.value(zero_rate).data == x.data);
  Var eval_mode = t.dropout(in, 0.5, rng, false);
  CHECK(t.value(eval_mode).data == x.data);
  CHECK_THROWS_AS(t.dropout(in, 1.0, rng, true), ConfigError);
}

TEST_CASE("dropout training statistics at rate 0.5") {
  const std::size_t n = 100000;
  Tensor x = Tensor::full({n}, 3.0);
  Rng rng(1234);
  Tape t;
  const Tensor& y = t.value(t.dropout(t.leaf(x), 0.5, rng, true));
  std::size_t survivors = 0;
  double mean = 0.0;
  for (double v : y.data) {
    if (v != 0.0) ++survivors;
    mean += v;
  }
  mean /= static_cast<double>(n);
  const double survive_rate = static_cast<double>(survivors) / static_cast<double>(n);
  CHECK(survive_rate > 0.49);
  CHECK(survive_rate < 0.51);
  CHECK(std::abs(mean - 3.0) / 3.0 < 0.02);
}

TEST_CASE("dropout masks replay bitwise under the same seed") {
  Tensor x = Tensor::full({512}, 1.0);
  Rng r1(99), r2(99);
  Tape t1, t2;
  const Tensor& y1 = t1.value(t1.dropout(t1.leaf(x), 0.3, r1, true));
  const Tensor& y2 = t2.value(t2.dropout(t2.leaf(x), 0.3, r2, true));
  CHECK(y1.data == y2.data);
}

TEST_CASE("grad_check closed forms") {
  Parameter w("w", Tensor::scalar(3.0));
  Parameter* pw = &w;
  const double err = grad_check([&](Tape& t) {
    Var v = t.param(w);
    return t.sum(t.mul(v, v));
  }, {&pw, 1}, 1e-5);
  CHECK(err < 1e-8);
  CHECK(w.grad.data[0] == doctest::Approx(6.0).epsilon(1e-10));

  Rng rng(21);
  Parameter v("v", random_tensor({7}, rng));
  Parameter* pv = &v;
  const double err2 =
      grad_check([&](Tape& t) { return t.sum(t.sigmoid(t.param(v))); }, {&pv, 1}, 1e-5);
  CHECK(err2 < 1e-6);
}

TEST_CASE("grad_check rejects eps outside its window") {
  Parameter w("w", Tensor::scalar(1.0));
  Parameter* pw = &w;
  CHECK_THROWS_AS(grad_check([&](Tape& t) { return t.sum(t.param(w)); }, {&pw, 1}, 1e-2),
                  ConfigError);
}

TEST_CASE("parameter gradients accumulate across uses and reset to zero") {
  Parameter w("w", Tensor::vec({1.5, -0.5}));
  Tape t;
  Var v = t.param(w);
  Var out = t.sum(t.add(v, v));  // w contributes twice
  t.backward(out);
  CHECK(w.grad.data == std::vector<double>{2.0, 2.0});
  w.zero_grad();
  CHECK(w.grad.data == std::vector<double>{0.0, 0.0});
}

namespace {

// Sum of squares: makes the check sensitive to the whole Jacobian, not just
// column sums.
Var sq_sum(Tape& t, Var v) { return t.sum(t.mul(v, v)); }

}  // namespace

TEST_CASE("every differentiable op passes grad_check at 100 random points") {
  check_gradients("add", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.add(t.param(p[0]), t.param(p[1])));
  }, {param("a", {2, 3}), param("b", {2, 3})});

  check_gradients("sub", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.sub(t.param(p[0]), t.param(p[1])));
  }, {param("a", {2, 3}), param("b", {2, 3})});

  check_gradients("mul", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.mul(t.param(p[0]), t.param(p[1])));
  }, {param("a", {2, 3}), param("b", {2, 3})});

  check_gradients("affine", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.affine(t.param(p[0]), -1.7, 0.3));
  }, {param("a", {2, 3})});

  check_gradients("matmul 2dx2d", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.matmul(t.param(p[0]), t.param(p[1])));
  }, {param("a", {2, 3}), param("b", {3, 4})});

  check_gradients("matmul 2dx1d", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.matmul(t.param(p[0]), t.param(p[1])));
  }, {param("a", {3, 4}), param("b", {4})});

  check_gradients("matmul 1dx2d", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.matmul(t.param(p[0]), t.param(p[1])));
  }, {param("a", {3}), param("b", {3, 2})});

  check_gradients("sigmoid", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.sigmoid(t.param(p[0])));
  }, {param("a", {2, 3})});

  check_gradients("tanh", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.tanh_op(t.param(p[0])));
  }, {param("a", {2, 3})});

  check_gradients("softmax axis1", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.softmax(t.param(p[0]), 1));
  }, {param("a", {3, 4})});

  check_gradients("softmax axis0", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.softmax(t.param(p[0]), 0));
  }, {param("a", {3, 4})});

  check_gradients("logsumexp axis1", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.logsumexp(t.param(p[0]), 1));
  }, {param("a", {3, 4})});

  check_gradients("logsumexp axis0", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.logsumexp(t.param(p[0]), 0));
  }, {param("a", {3, 4})});

  check_gradients("logsumexp rank1", [](Tape& t, std::vector<Parameter>& p) {
    return t.logsumexp(t.param(p[0]), 0);
  }, {param("a", {5})});

  check_gradients("concat axis0", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.concat(t.param(p[0]), t.param(p[1]), 0));
  }, {param("a", {2, 3}), param("b", {1, 3})});

  check_gradients("concat axis1", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.concat(t.param(p[0]), t.param(p[1]), 1));
  }, {param("a", {2, 3}), param("b", {2, 2})});

  check_gradients("dropout", [](Tape& t, std::vector<Parameter>& p) {
    Rng rng(4242);  // fixed mask so every finite-difference eval agrees
    return sq_sum(t, t.dropout(t.param(p[0]), 0.4, rng, true));
  }, {param("a", {4, 5})});

  check_gradients("gather_rows with repeats", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.gather_rows(t.param(p[0]), {2, 0, 2, 1}));
  }, {param("table", {3, 4})});

  check_gradients("row", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.row(t.param(p[0]), 1));
  }, {param("m", {3, 4})});

  check_gradients("stack_rows", [](Tape& t, std::vector<Parameter>& p) {
    std::vector<Var> rows = {t.param(p[0]), t.param(p[1]), t.param(p[0])};
    return sq_sum(t, t.stack_rows(rows));
  }, {param("r0", {4}), param("r1", {4})});

  check_gradients("transpose", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.matmul(t.transpose(t.param(p[0])), t.param(p[1])));
  }, {param("m", {3, 2}), param("v", {3})});

  check_gradients("reshape", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.matmul(t.reshape(t.param(p[0]), {2, 6}), t.param(p[1])));
  }, {param("m", {3, 4}), param("v", {6})});

  check_gradients("submatrix", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.submatrix(t.param(p[0]), 1, 3, 0, 2));
  }, {param("m", {4, 3})});

  check_gradients("add_rowvec", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.add_rowvec(t.param(p[0]), t.param(p[1])));
  }, {param("m", {3, 4}), param("v", {4})});

  check_gradients("add_colvec", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.add_colvec(t.param(p[0]), t.param(p[1])));
  }, {param("m", {3, 4}), param("v", {3})});

  check_gradients("sum", [](Tape& t, std::vector<Parameter>& p) {
    Var s = t.sum(t.param(p[0]));
    return t.mul(s, s);
  }, {param("a", {2, 3})});

  check_gradients("gather_elems with repeats", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.gather_elems(t.param(p[0]), {{0, 1}, {2, 2}, {0, 1}}));
  }, {param("m", {3, 3})});

  check_gradients("mask_fill", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.mask_fill(t.param(p[0]), {1, 0, 1, 1, 0, 1}, -3.0));
  }, {param("m", {2, 3})});

  check_gradients("row_norms", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.row_norms(t.param(p[0])));
  }, {param("m", {3, 4})});

  check_gradients("squash_rows", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.squash_rows(t.param(p[0])));
  }, {param("m", {3, 4})});

  check_gradients("caps_predictions", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.reshape(t.caps_predictions(t.param(p[0]), t.param(p[1])), {2 * 3 * 4}));
  }, {param("w", {2, 3, 4, 5}), param("u", {2, 5})});

  check_gradients("caps_weighted_sum", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.caps_weighted_sum(t.param(p[0]), t.param(p[1])));
  }, {param("c", {3, 2}), param("u", {3, 2, 4})});

  check_gradients("caps_agreement", [](Tape& t, std::vector<Parameter>& p) {
    return sq_sum(t, t.caps_agreement(t.param(p[0]), t.param(p[1])));
  }, {param("u", {3, 2, 4}), param("v", {2, 4})});
}
