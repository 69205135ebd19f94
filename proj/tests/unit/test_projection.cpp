#include "doctest.h"
#include "helpers.hpp"

#include <cmath>
#include <numbers>

#include "tarpro/projection.hpp"

using namespace tarpro;
using tarpro::test::random_mlp;
using tarpro::test::random_tensor;

namespace {

RowVector vec(std::initializer_list<double> v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

Mlp identity_decoder(Eigen::Index d) {
  return Mlp({Layer{Tensor2::Identity(d, d), Tensor2::Zero(1, d), Activation::identity()}});
}

Sampler vae_with_decoder(Mlp decoder) {
  VaeModel v;
  v.latent_dim = decoder.in_dim();
  v.decoder = std::move(decoder);
  const auto L = static_cast<Eigen::Index>(v.latent_dim);
  v.encoder = Mlp({Layer{Tensor2::Zero(v.decoder.out_dim(), 2 * L), Tensor2::Zero(1, 2 * L),
                         Activation::identity()}});
  return v;
}

// Two-class classifier on the first coordinate's sign.
ClassifierModel sign_classifier(Eigen::Index d) {
  Tensor2 w = Tensor2::Zero(d, 2);
  w(0, 0) = 1.0;
  w(0, 1) = -1.0;
  ClassifierModel c;
  c.net = Mlp({Layer{w, Tensor2::Zero(1, 2), Activation::identity()}});
  c.num_classes = 2;
  return c;
}

double second_difference(const std::vector<double>& l, std::size_t i) { return l[i + 1] - 2 * l[i] + l[i - 1]; }

}  // namespace

TEST_CASE("loss_LS: identical, orthogonal, antiparallel") {
  CHECK(loss_LS(vec({1, 2}), vec({1, 2})) == doctest::Approx(0.0));
  CHECK(loss_LS(vec({1, 0}), vec({0, 3})) == doctest::Approx(1.0));
  CHECK(loss_LS(vec({1, 1}), vec({-2, -2})) == doctest::Approx(2.0));
  CHECK(loss_LS(vec({0.3, -1}), vec({2, 5})) == doctest::Approx(loss_LS(vec({3, -10}), vec({0.2, 0.5}))));
  CHECK_THROWS_AS(loss_LS(vec({0, 0}), vec({1, 0})), NumericError);
}

TEST_CASE("smooth: identity at W=1, constants unchanged, truncated edges") {
  const std::vector<double> v{3, 1, 4, 1, 5};
  CHECK(smooth(v, 1) == v);
  const std::vector<double> c(9, 2.5);
  for (double x : smooth(c, 5)) CHECK(x == doctest::Approx(2.5));
  const auto s = smooth({0, 1, 2, 3}, 3);
  REQUIRE(s.size() == 4);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(1.0));
  CHECK(s[2] == doctest::Approx(2.0));
  CHECK(s[3] == doctest::Approx(2.5));
  CHECK_THROWS_AS(smooth(v, 2), ShapeError);
}

TEST_CASE("elbow_index: hand sequences against brute-force second differences") {
  const std::vector<double> a{10, 8, 6, 5, 4.5, 4.25};
  CHECK(second_difference(a, 2) == 1.0);
  CHECK(elbow_index(a) == 2);
  CHECK(elbow_index({1, 2, 3, 4, 5, 6}) == 1);
  CHECK(elbow_index({4, 2, 1, 1, 1}) == 1);
  CHECK_THROWS_AS(elbow_index({1, 2}), ShapeError);
}

TEST_CASE("elbow_index: invariant to shifts and positive affine maps") {
  Rng rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> l;
    for (int i = 0; i < 30; ++i) l.push_back(std::normal_distribution<double>()(rng));
    std::size_t brute = 1;
    for (std::size_t i = 2; i + 1 < l.size(); ++i) {
      if (second_difference(l, i) > second_difference(l, brute)) brute = i;
    }
    CHECK(elbow_index(l) == brute);
    std::vector<double> m;
    for (double x : l) m.push_back(3.0 * x + 7.0);
    CHECK(elbow_index(m) == brute);
  }
}

TEST_CASE("projection gradient through a decoder matches central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Mlp dec = random_mlp({3, 7, 5}, Activation::leaky_relu(0.2), Activation::identity(), rng);
    const RowVector z_t = random_tensor(1, 5, rng).row(0);
    Tensor2 u = random_tensor(1, 3, rng);
    GradCheckProblem p;
    p.params = {&u};
    p.loss = [&] { return projection_loss_and_grad(dec, z_t, u.row(0), nullptr); };
    p.gradient = [&] {
      RowVector du;
      projection_loss_and_grad(dec, z_t, u.row(0), &du);
      return std::vector<Tensor2>{Tensor2(du)};
    };
    CHECK(grad_check(p) < 1e-4);
  }
}

TEST_CASE("project: identity decoder follows hand-coded descent and the closed-form angle law") {
  // For G(u) = u the step is orthogonal to u with size beta sin(theta) / |u|,
  // so tan(theta / 2) decays like exp(-beta k / |u|^2).
  ProjectionConfig c;
  c.restarts = 1;
  Rng rng(3);
  for (int rep = 0; rep < 8; ++rep) {
    c.init_seed = static_cast<std::uint64_t>(rep);
    const RowVector z_t = random_tensor(1, 6, rng).row(0);
    const ProjectionTrace t = project(z_t, identity_decoder(6), c);
    CHECK(t.loss.size() == c.max_iters);
    CHECK(t.latents.size() == c.max_iters);
    CHECK(t.n_star >= 1);
    CHECK(t.n_star + 2 <= t.smoothed.size());
    CHECK(t.z_t_star == t.latents[t.n_star]);

    Rng start(derive_seed(c.init_seed, 0));
    RowVector u = standard_normal(1, 6, start).row(0);
    const double nz = z_t.norm();
    const double u0_sq = u.squaredNorm();
    const double theta0 = std::acos(u.dot(z_t) / (u.norm() * nz));
    for (std::size_t k = 0; k < c.max_iters; ++k) {
      CHECK((t.latents[k] - u).cwiseAbs().maxCoeff() <= 1e-9);
      const double nu = u.norm();
      const RowVector g = -(z_t / (nz * nu) - u.dot(z_t) * u / (nz * nu * nu * nu));
      u -= c.beta * g;
    }
    const double decay = std::exp(-c.beta * static_cast<double>(c.max_iters - 1) / u0_sq);
    const double predicted = std::cos(2.0 * std::atan(std::tan(theta0 / 2.0) * decay));
    const double reached = 1.0 - loss_LS(z_t, t.latents.back());
    CHECK(reached == doctest::Approx(predicted).epsilon(0.02));
  }
}

TEST_CASE("project: identity decoder reaches cosine 0.999 from a start within 45 degrees") {
  // |u0|^2 <= 4 gives tan(22.5 deg) exp(-0.01 * 1999 / 4) < 0.003
  ProjectionConfig c;
  c.restarts = 1;
  int used = 0;
  for (std::uint64_t seed = 0; used < 8; ++seed) {
    c.init_seed = seed;
    Rng start(derive_seed(seed, 0));
    const RowVector u0 = standard_normal(1, 2, start).row(0);
    if (u0.squaredNorm() > 4.0) continue;
    ++used;
    RowVector z_t(2);
    const double a = std::numbers::pi / 4.0;
    z_t << std::cos(a) * u0(0) - std::sin(a) * u0(1), std::sin(a) * u0(0) + std::cos(a) * u0(1);
    const ProjectionTrace t = project(z_t, identity_decoder(2), c);
    CHECK(1.0 - loss_LS(z_t, t.latents.back()) >= 0.999);
  }
}

TEST_CASE("project: target equal to the decoded start stays at zero loss") {
  Rng rng(9);
  const Mlp dec = random_mlp({4, 8, 6}, Activation::leaky_relu(0.2), Activation::identity(), rng);
  ProjectionConfig c;
  c.restarts = 1;
  c.max_iters = 200;
  c.init_seed = 17;
  Rng start(derive_seed(c.init_seed, 0));
  const Tensor2 u0 = standard_normal(1, 4, start);
  const RowVector z_t = dec.forward(u0).row(0);
  const ProjectionTrace t = project(z_t, dec, c);
  CHECK(t.latents[0] == u0.row(0));
  for (double l : t.loss) CHECK(std::abs(l) <= 1e-12);
}

TEST_CASE("project: restarts keep the lowest loss at n*; strided storage recovers u*") {
  Rng rng(4);
  const Mlp dec = random_mlp({3, 8, 5}, Activation::leaky_relu(0.2), Activation::identity(), rng);
  const RowVector z_t = random_tensor(1, 5, rng).row(0);
  ProjectionConfig c;
  c.max_iters = 300;
  c.restarts = 4;
  const ProjectionTrace best = project(z_t, dec, c);
  ProjectionConfig one = c;
  one.restarts = 1;
  const ProjectionTrace first = project(z_t, dec, one);
  CHECK(first.restart == 0);
  CHECK(best.loss_at_n_star() <= first.loss_at_n_star());
  ProjectionConfig strided = c;
  strided.store_stride = 7;
  const ProjectionTrace s = project(z_t, dec, strided);
  CHECK(s.n_star == best.n_star);
  CHECK(s.restart == best.restart);
  CHECK((s.u_star - best.u_star).cwiseAbs().maxCoeff() == 0.0);
  CHECK(s.loss == best.loss);
  c.window = 4;
  CHECK_THROWS_AS(project(z_t, dec, c), ShapeError);
}

TEST_CASE("infer: models are untouched, parallel equals serial, 1-NN dispatches to retrieval") {
  Rng rng(2);
  const Sampler vae = vae_with_decoder(random_mlp({3, 8, 4}, Activation::leaky_relu(0.2), Activation::identity(), rng));
  const ClassifierModel cls = sign_classifier(4);
  const Tensor2 z = random_tensor(12, 4, rng);
  ProjectionConfig c;
  c.max_iters = 150;
  c.restarts = 2;
  const auto dec_sum = generator_net(vae).checksum();
  const auto cls_sum = cls.net.checksum();
  const auto serial = infer_features(z, vae, cls, c, 1);
  const auto parallel = infer_features(z, vae, cls, c, 4);
  CHECK(generator_net(vae).checksum() == dec_sum);
  CHECK(cls.net.checksum() == cls_sum);
  REQUIRE(serial.size() == parallel.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].label == parallel[i].label);
    CHECK(serial[i].trace.loss == parallel[i].trace.loss);
    CHECK(serial[i].trace.z_t_star == parallel[i].trace.z_t_star);
  }

  KnnSampler knn;
  knn.bank.num_classes = 2;
  knn.bank.features = Tensor2(2, 4);
  knn.bank.features << 1, 0, 0, 0, -1, 0.5, 0, 0;
  knn.bank.labels = {0, 1};
  knn.bank.domains = {0, 0};
  const InferResult r = infer_feature(vec({-0.9, 0.4, 0.1, 0}), Sampler{knn}, cls, c);
  CHECK(r.knn_index == 1);
  CHECK(r.label == 1);
  CHECK(r.trace.z_t_star == knn.bank.features.row(1));
}

TEST_CASE("sweep_epsilon: zero offset reproduces inference, offsets clamp to the trace") {
  Rng rng(6);
  const Sampler vae = vae_with_decoder(random_mlp({3, 8, 4}, Activation::leaky_relu(0.2), Activation::identity(), rng));
  const ClassifierModel cls = sign_classifier(4);
  const Tensor2 z = random_tensor(20, 4, rng);
  ProjectionConfig c;
  c.max_iters = 100;
  c.restarts = 1;
  const auto results = infer_features(z, vae, cls, c, 1);
  std::vector<ProjectionTrace> traces;
  std::vector<int> truth, predicted;
  for (std::size_t i = 0; i < results.size(); ++i) {
    traces.push_back(results[i].trace);
    predicted.push_back(results[i].label);
    truth.push_back(z(static_cast<Eigen::Index>(i), 0) >= 0 ? 0 : 1);
  }
  const auto acc = sweep_epsilon(traces, {0, 1e6, -1e6}, vae, cls, truth, c);
  CHECK(acc[0] == accuracy(predicted, truth));

  std::vector<int> last, first;
  for (const auto& t : traces) {
    const RowVector zl = decode(vae, t.latent(t.loss.size() - 1));
    const RowVector zf = decode(vae, t.latent(0));
    last.push_back(argmax_logits(cls.net.forward(normalize_rows(Tensor2(zl))).row(0)));
    first.push_back(argmax_logits(cls.net.forward(normalize_rows(Tensor2(zf))).row(0)));
  }
  CHECK(acc[1] == accuracy(last, truth));
  CHECK(acc[2] == accuracy(first, truth));
  const auto frac = sweep_epsilon(traces, {0.0}, vae, cls, truth, c, EpsilonMode::kFractionOfNStar);
  CHECK(frac[0] == acc[0]);
}

TEST_CASE("summary and trace csv headers") {
  ProjectionTrace t;
  t.loss = {0.5, 0.25};
  t.smoothed = {0.375, 0.375};
  CHECK(trace_csv(t).rfind("iter,loss,smoothed_loss\n", 0) == 0);
  InferResult r;
  r.trace = t;
  const std::vector<int> truth{1};
  CHECK(summary_csv({r}, truth).rfind("target_index,n_star,initial_loss,final_loss,pred,true\n", 0) == 0);
}
