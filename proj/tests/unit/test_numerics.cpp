#include "doctest.h"
#include "helpers.hpp"

#include <cmath>

using namespace tarpro;
using tarpro::test::mlp_problem;
using tarpro::test::random_mlp;
using tarpro::test::random_tensor;

namespace {

Mlp single(Tensor2 w, Tensor2 b, Activation a) { return Mlp({Layer{std::move(w), std::move(b), a}}); }

double sum_squares(const Tensor2& y, Tensor2* g) {
  if (g) *g = 2.0 * y;
  return y.squaredNorm();
}

}  // namespace

TEST_CASE("forward: identity layer passes input through") {
  const Mlp m = single(Tensor2::Identity(2, 2), Tensor2::Zero(1, 2), Activation::identity());
  Tensor2 x(1, 2);
  x << 1, 2;
  CHECK(m.forward(x) == x);
}

TEST_CASE("forward: zero weights give the bias") {
  const Mlp m = single(Tensor2::Zero(3, 1), Tensor2::Constant(1, 1, 3.0), Activation::identity());
  Tensor2 x(1, 3);
  x << 5, -7, 0.25;
  CHECK(m.forward(x)(0, 0) == 3.0);
}

TEST_CASE("forward: relu layer matches a hand matrix product") {
  Tensor2 w(2, 2);
  w << 1, 0, 1, 1;
  const Mlp m = single(w, Tensor2::Zero(1, 2), Activation::relu());
  Tensor2 x(1, 2);
  x << -1, 2;
  // pre = [-1*1 + 2*1, -1*0 + 2*1]
  const double pre0 = x(0, 0) * w(0, 0) + x(0, 1) * w(1, 0);
  const double pre1 = x(0, 0) * w(0, 1) + x(0, 1) * w(1, 1);
  const Tensor2 y = m.forward(x);
  CHECK(y(0, 0) == std::max(0.0, pre0));
  CHECK(y(0, 1) == std::max(0.0, pre1));
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 2.0);
}

TEST_CASE("forward: dimension mismatch raises a shape error") {
  Rng rng(1);
  const std::size_t dims[] = {3, 4, 2};
  const Mlp m = Mlp::init(dims, Activation::relu(), Activation::identity(), rng);
  CHECK_THROWS_AS(m.forward(Tensor2::Zero(1, 2)), ShapeError);
  Layer a{Tensor2::Zero(2, 3), Tensor2::Zero(1, 3), Activation::relu()};
  Layer b{Tensor2::Zero(4, 1), Tensor2::Zero(1, 1), Activation::identity()};
  CHECK_THROWS_AS(Mlp({a, b}), ShapeError);
  CHECK_THROWS_AS(Activation::leaky_relu(1.5), ShapeError);
}

TEST_CASE("forward is bit-deterministic") {
  Rng rng(7);
  Mlp m = random_mlp({4, 8, 8, 3}, Activation::leaky_relu(0.2), Activation::identity(), rng);
  const Tensor2 x = random_tensor(5, 4, rng);
  const Tensor2 a = m.forward(x);
  const Tensor2 b = m.forward(x);
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0);
}

TEST_CASE("init: Glorot-uniform bounds and zero bias") {
  Rng rng(3);
  const std::size_t dims[] = {10, 30, 5};
  const Mlp m = Mlp::init(dims, Activation::relu(), Activation::identity(), rng);
  for (const auto& l : m.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(l.in_dim() + l.out_dim()));
    CHECK(l.weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(l.bias.isZero());
  }
}

TEST_CASE("backward: linear layer weight gradient equals input times upstream") {
  Tensor2 w(3, 1);
  w << 0.5, -1, 2;
  const Mlp m = single(w, Tensor2::Zero(1, 1), Activation::identity());
  Tensor2 x(1, 3);
  x << 1, 2, 3;
  Tensor2 up(1, 1);
  up << 1.5;
  Tensor2 dx;
  const MlpGrads g = m.backward(m.forward_cached(x), up, &dx);
  CHECK((g.weight[0] - x.transpose() * 1.5).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.bias[0](0, 0) == 1.5);
  CHECK((dx - 1.5 * w.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: relu blocks gradient at negative pre-activation") {
  Tensor2 w(1, 2);
  w << 1, -1;
  const Mlp m = single(w, Tensor2::Zero(1, 2), Activation::relu());
  Tensor2 x(1, 1);
  x << 2;  // pre = [2, -2]
  const MlpGrads g = m.backward(m.forward_cached(x), Tensor2::Ones(1, 2));
  CHECK(g.weight[0](0, 0) == 2.0);
  CHECK(g.weight[0](0, 1) == 0.0);
}

TEST_CASE("backward: random two-layer nets match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Mlp m = random_mlp({3, 6, 2}, Activation::relu(), Activation::identity(), rng);
    const Tensor2 x = random_tensor(4, 3, rng);
    CHECK(grad_check(mlp_problem(m, x, sum_squares)) < 1e-5);
  }
}

TEST_CASE("backward: leaky relu chains match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    Mlp m = random_mlp({5, 7, 7, 4}, Activation::leaky_relu(0.2), Activation::identity(), rng);
    const Tensor2 x = random_tensor(3, 5, rng);
    CHECK(grad_check(mlp_problem(m, x, sum_squares)) < 1e-4);
  }
}

TEST_CASE("grad_check: quadratic loss on a linear net is exact") {
  Rng rng(5);
  Mlp m = random_mlp({4, 3}, Activation::identity(), Activation::identity(), rng);
  const Tensor2 x = random_tensor(6, 4, rng);
  CHECK(grad_check(mlp_problem(m, x, sum_squares)) < 1e-8);
}

TEST_CASE("grad_check detects a wrong gradient and restores parameters") {
  Tensor2 p = Tensor2::Constant(1, 2, 0.7);
  const Tensor2 before = p;
  GradCheckProblem prob;
  prob.params = {&p};
  prob.loss = [&] { return p.squaredNorm(); };
  prob.gradient = [&] { return std::vector<Tensor2>{p}; };  // should be 2p
  CHECK(grad_check(prob) > 0.5);
  CHECK(p == before);
}

TEST_CASE("grad_check: non-finite loss raises a numeric error") {
  Tensor2 p = Tensor2::Zero(1, 1);
  GradCheckProblem prob;
  prob.params = {&p};
  prob.loss = [] { return std::nan(""); };
  prob.gradient = [&] { return std::vector<Tensor2>{p}; };
  CHECK_THROWS_AS(grad_check(prob), NumericError);
}

TEST_CASE("cross-entropy: uniform logits give log C, gradient checks") {
  Tensor2 logits = Tensor2::Zero(4, 3);
  const std::vector<int> y{0, 1, 2, 1};
  CHECK(softmax_cross_entropy(logits, y) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    Mlp m = random_mlp({4, 6, 3}, Activation::leaky_relu(0.2), Activation::identity(), rng);
    const Tensor2 x = random_tensor(5, 4, rng);
    std::vector<int> labels;
    for (int i = 0; i < 5; ++i) labels.push_back(static_cast<int>(rng() % 3));
    auto head = [labels](const Tensor2& out, Tensor2* g) { return softmax_cross_entropy(out, labels, g); };
    CHECK(grad_check(mlp_problem(m, x, head)) < 1e-4);
  }
}

TEST_CASE("normalize_rows_backward matches central differences") {
  Rng rng(11);
  Tensor2 x = random_tensor(3, 4, rng);
  const Tensor2 w = random_tensor(3, 4, rng);
  GradCheckProblem p;
  p.params = {&x};
  p.loss = [&] { return normalize_rows(x).cwiseProduct(w).sum(); };
  p.gradient = [&] {
    Tensor2 norms;
    const Tensor2 u = normalize_rows(x, &norms);
    return std::vector<Tensor2>{normalize_rows_backward(u, norms, w)};
  };
  CHECK(grad_check(p) < 1e-6);
}

TEST_CASE("sgd: plain step arithmetic") {
  Tensor2 w = Tensor2::Constant(1, 1, 1.0);
  const Tensor2 g = Tensor2::Constant(1, 1, 0.5);
  Optimizer opt(SgdConfig{0.1, 0.0});
  Tensor2* ps[] = {&w};
  const Tensor2* gs[] = {&g};
  opt.step(ps, gs);
  CHECK(w(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
}

TEST_CASE("sgd: momentum recurrence gives a second update of 0.19") {
  Tensor2 w = Tensor2::Zero(1, 1);
  const Tensor2 g = Tensor2::Ones(1, 1);
  Optimizer opt(SgdConfig{0.1, 0.9});
  Tensor2* ps[] = {&w};
  const Tensor2* gs[] = {&g};
  opt.step(ps, gs);
  const double after_first = w(0, 0);
  opt.step(ps, gs);
  // m1 = 1, m2 = 0.9 * 1 + 1
  CHECK(after_first - w(0, 0) == doctest::Approx(0.1 * (0.9 * 1.0 + 1.0)).epsilon(1e-12));
}

TEST_CASE("adam: first step moves by about lr against the gradient sign") {
  for (double gv : {3.0, -0.02, 1e-3}) {
    Tensor2 w = Tensor2::Zero(1, 1);
    const Tensor2 g = Tensor2::Constant(1, 1, gv);
    Optimizer opt(AdamConfig{0.01});
    Tensor2* ps[] = {&w};
    const Tensor2* gs[] = {&g};
    opt.step(ps, gs);
    // m_hat = g, v_hat = g^2 after bias correction
    const double expect = -0.01 * gv / (std::abs(gv) + 1e-8);
    CHECK(w(0, 0) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("optimizer: zero gradient without momentum is the identity; non-finite rejected") {
  Rng rng(2);
  Tensor2 w = random_tensor(2, 3, rng);
  const Tensor2 before = w;
  const Tensor2 zero = Tensor2::Zero(2, 3);
  Optimizer opt(SgdConfig{0.5, 0.0});
  Tensor2* ps[] = {&w};
  const Tensor2* gs[] = {&zero};
  opt.step(ps, gs);
  CHECK(w == before);
  Tensor2 bad = zero;
  bad(1, 2) = std::numeric_limits<double>::infinity();
  const Tensor2* bs[] = {&bad};
  CHECK_THROWS_AS(opt.step(ps, bs), NumericError);
}

TEST_CASE("seed derivation is deterministic and stream-separated") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
  Rng a = make_rng(9, kStreamVae);
  Rng b = make_rng(9, kStreamVae);
  CHECK(a() == b());
}

TEST_CASE("checksum tracks parameter changes") {
  Rng rng(4);
  Mlp m = random_mlp({2, 3, 1}, Activation::relu(), Activation::identity(), rng);
  const auto c = m.checksum();
  CHECK(m.checksum() == c);
  m.layers()[0].weight(0, 0) += 1e-12;
  CHECK(m.checksum() != c);
}
