#include "tarpro/generative.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tarpro {

namespace {

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 gather_rows(const Tensor2& src, std::span<const std::size_t> idx) {
  Tensor2 out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

std::vector<std::size_t> chain_dims(std::size_t in, const std::vector<std::size_t>& hidden,
                                    std::size_t out) {
  std::vector<std::size_t> dims{in};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out);
  return dims;
}

}  // namespace

Tensor2 standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor2 out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = n(rng);
  return out;
}

Tensor2 reparameterize(const Tensor2& mu, const Tensor2& logvar, const Tensor2& noise) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols() || mu.rows() != noise.rows() ||
      mu.cols() != noise.cols()) {
    throw ShapeError("reparameterize: shapes of mu, logvar and noise differ");
  }
  return (mu.array() + (0.5 * logvar.array()).exp() * noise.array()).matrix();
}

double gaussian_kl(const Tensor2& mu, const Tensor2& logvar) {
  if (mu.rows() == 0) return 0.0;
  const double sum =
      0.5 * (mu.array().square() + logvar.array().exp() - logvar.array() - 1.0).sum();
  return sum / static_cast<double>(mu.rows());
}

VaeLoss vae_loss(const VaeModel& model, const Tensor2& batch, const Tensor2& noise,
                 double kl_weight, VaeGrads* grads) {
  const auto b = batch.rows();
  const auto L = static_cast<Eigen::Index>(model.latent_dim);
  if (b == 0) throw ShapeError("vae_loss on an empty batch");
  if (noise.rows() != b || noise.cols() != L) {
    throw ShapeError("vae_loss: noise must be batch x latent_dim");
  }
  const auto enc = model.encoder.forward_cached(batch);
  const Tensor2 mu = enc.output.leftCols(L);
  const Tensor2 logvar = enc.output.rightCols(L);
  const Tensor2 u = reparameterize(mu, logvar, noise);
  const auto dec = model.decoder.forward_cached(u);
  const Tensor2 diff = batch - dec.output;
  const double elems = static_cast<double>(diff.size());

  VaeLoss out;
  out.recon = (diff.array().abs() + diff.array().square()).sum() / elems;
  out.kl = gaussian_kl(mu, logvar);
  out.total = out.recon + kl_weight * out.kl;

  if (grads != nullptr) {
    // d recon / d x_hat = -(sign(diff) + 2 diff) / elems
    const Tensor2 dxhat =
        (-(diff.array().sign() + 2.0 * diff.array()) / elems).matrix();
    Tensor2 du;
    grads->decoder = model.decoder.backward(dec, dxhat, &du);
    const double inv_b = 1.0 / static_cast<double>(b);
    const Tensor2 half_std = (0.5 * logvar.array()).exp().matrix();
    Tensor2 denc(b, 2 * L);
    denc.leftCols(L) = du + kl_weight * inv_b * mu;
    denc.rightCols(L) =
        (du.array() * noise.array() * 0.5 * half_std.array() +
         kl_weight * inv_b * 0.5 * (logvar.array().exp() - 1.0))
            .matrix();
    grads->encoder = model.encoder.backward(enc, denc);
  }
  return out;
}

VaeModel init_vae(std::size_t feature_dim, const VaeConfig& config) {
  if (config.latent_dim == 0) throw ShapeError("latent_dim must be positive");
  Rng rng = make_rng(config.seed, kStreamVae);
  VaeModel m;
  m.latent_dim = config.latent_dim;
  m.encoder = Mlp::init(chain_dims(feature_dim, config.hidden, 2 * config.latent_dim),
                        Activation::leaky_relu(0.2), Activation::identity(), rng);
  m.decoder = Mlp::init(chain_dims(config.latent_dim, config.hidden, feature_dim),
                        Activation::leaky_relu(0.2), Activation::identity(), rng);
  return m;
}

void fit_vae(VaeModel& model, const Tensor2& features, const VaeConfig& config,
             TrainingLog* log) {
  if (features.rows() == 0) throw ShapeError("train_vae: empty bank");
  if (config.batch_size == 0) throw ShapeError("train_vae: batch_size must be positive");
  Rng rng = make_rng(config.seed, kStreamVae + 100);
  Optimizer enc_opt(SgdConfig{config.lr, config.momentum});
  Optimizer dec_opt(SgdConfig{config.lr, config.momentum});
  const auto n = static_cast<std::size_t>(features.rows());
  const auto L = static_cast<Eigen::Index>(model.latent_dim);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  // Evaluation noise is fixed so the logged curve is comparable across epochs.
  Rng eval_rng = make_rng(config.seed, kStreamVae + 200);
  const Tensor2 eval_noise = standard_normal(features.rows(), L, eval_rng);
  auto evaluate = [&] { return vae_loss(model, features, eval_noise, config.kl_weight).total; };

  if (log != nullptr) log->loss.push_back(evaluate());
  VaeGrads grads;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      const Tensor2 xb = gather_rows(features, std::span(order.data() + start, len));
      const Tensor2 noise = standard_normal(static_cast<Eigen::Index>(len), L, rng);
      vae_loss(model, xb, noise, config.kl_weight, &grads);
      enc_opt.step(model.encoder, grads.encoder);
      dec_opt.step(model.decoder, grads.decoder);
    }
    if (log != nullptr) log->loss.push_back(evaluate());
  }
}

VaeModel train_vae(const FeatureBank& bank, const VaeConfig& config, TrainingLog* log) {
  VaeModel model = init_vae(bank.dim(), config);
  fit_vae(model, bank.features, config, log);
  return model;
}

GanLoss gan_losses(const GanModel& model, const Tensor2& real, const Tensor2& noise,
                   GanGrads* grads) {
  const auto b_real = real.rows();
  const auto b_fake = noise.rows();
  if (b_real == 0 || b_fake == 0) throw ShapeError("gan_losses on an empty batch");
  if (static_cast<std::size_t>(noise.cols()) != model.latent_dim) {
    throw ShapeError("gan_losses: noise must have latent_dim columns");
  }
  const auto gen = model.generator.forward_cached(noise);
  const auto d_real = model.discriminator.forward_cached(real);
  const auto d_fake = model.discriminator.forward_cached(gen.output);

  GanLoss out;
  Tensor2 g_real(b_real, 1);
  Tensor2 g_fake_d(b_fake, 1);
  Tensor2 g_fake_g(b_fake, 1);
  const double inv_r = 1.0 / static_cast<double>(b_real);
  const double inv_f = 1.0 / static_cast<double>(b_fake);
  for (Eigen::Index i = 0; i < b_real; ++i) {
    const double l = d_real.output(i, 0);
    out.discriminator += softplus(-l) * inv_r;
    g_real(i, 0) = -sigmoid(-l) * inv_r;
  }
  for (Eigen::Index i = 0; i < b_fake; ++i) {
    const double l = d_fake.output(i, 0);
    out.discriminator += softplus(l) * inv_f;
    out.generator += softplus(-l) * inv_f;
    g_fake_d(i, 0) = sigmoid(l) * inv_f;
    g_fake_g(i, 0) = -sigmoid(-l) * inv_f;
  }
  if (grads != nullptr) {
    grads->discriminator = model.discriminator.backward(d_real, g_real);
    grads->discriminator.add(model.discriminator.backward(d_fake, g_fake_d));
    const Tensor2 dz = model.discriminator.input_gradient(d_fake, g_fake_g);
    grads->generator = model.generator.backward(gen, dz);
  }
  return out;
}

double discriminator_accuracy(const GanModel& model, const Tensor2& real, const Tensor2& noise) {
  const Tensor2 lr = model.discriminator.forward(real);
  const Tensor2 lf = model.discriminator.forward(model.generator.forward(noise));
  const double real_ok = (lr.array() > 0.0).cast<double>().mean();
  const double fake_ok = (lf.array() < 0.0).cast<double>().mean();
  return 0.5 * (real_ok + fake_ok);
}

GanModel init_gan(std::size_t feature_dim, const GanConfig& config) {
  if (config.latent_dim == 0) throw ShapeError("latent_dim must be positive");
  Rng rng = make_rng(config.seed, kStreamGan);
  GanModel m;
  m.latent_dim = config.latent_dim;
  m.generator = Mlp::init(chain_dims(config.latent_dim, config.hidden, feature_dim),
                          Activation::leaky_relu(0.2), Activation::identity(), rng);
  m.discriminator = Mlp::init(chain_dims(feature_dim, config.hidden, 1),
                              Activation::leaky_relu(0.2), Activation::identity(), rng);
  return m;
}

GanModel train_gan(const FeatureBank& bank, const GanConfig& config, TrainingLog* log) {
  if (bank.size() == 0) throw ShapeError("train_gan: empty bank");
  GanModel model = init_gan(bank.dim(), config);
  fit_gan(model, bank.features, config, log);
  return model;
}

void fit_gan(GanModel& model, const Tensor2& features, const GanConfig& config,
             TrainingLog* log) {
  if (features.rows() == 0) throw ShapeError("train_gan: empty bank");
  if (config.batch_size == 0) throw ShapeError("train_gan: batch_size must be positive");
  Rng rng = make_rng(config.seed, kStreamGan + 100);
  Optimizer d_opt(AdamConfig{config.lr, config.beta1, 0.999, 1e-8});
  Optimizer g_opt(AdamConfig{config.lr, config.beta1, 0.999, 1e-8});
  const auto n = static_cast<std::size_t>(features.rows());
  const auto L = static_cast<Eigen::Index>(model.latent_dim);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  Rng eval_rng = make_rng(config.seed, kStreamGan + 200);
  const Tensor2 eval_noise = standard_normal(features.rows(), L, eval_rng);
  auto record = [&] {
    if (log == nullptr) return;
    log->loss.push_back(gan_losses(model, features, eval_noise).generator);
    log->accuracy.push_back(discriminator_accuracy(model, features, eval_noise));
  };

  record();
  GanGrads grads;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, n - start);
      const Tensor2 real = gather_rows(features, std::span(order.data() + start, len));
      // One discriminator step, then one generator step on fresh noise.
      Tensor2 noise = standard_normal(static_cast<Eigen::Index>(len), L, rng);
      gan_losses(model, real, noise, &grads);
      d_opt.step(model.discriminator, grads.discriminator);
      noise = standard_normal(static_cast<Eigen::Index>(len), L, rng);
      gan_losses(model, real, noise, &grads);
      g_opt.step(model.generator, grads.generator);
    }
    record();
  }
}

const Mlp& generator_net(const Sampler& sampler) {
  if (const auto* v = std::get_if<VaeModel>(&sampler)) return v->decoder;
  if (const auto* g = std::get_if<GanModel>(&sampler)) return g->generator;
  throw ShapeError("the 1-NN sampler has no decoder; use knn_project");
}

std::size_t latent_dim(const Sampler& sampler) {
  if (const auto* v = std::get_if<VaeModel>(&sampler)) return v->latent_dim;
  if (const auto* g = std::get_if<GanModel>(&sampler)) return g->latent_dim;
  return 0;
}

Tensor2 decode(const Sampler& sampler, const Tensor2& u) {
  if (!u.allFinite()) throw NumericError("decode: latent is not finite");
  const Mlp& net = generator_net(sampler);
  if (static_cast<std::size_t>(u.cols()) != net.in_dim()) {
    throw ShapeError("decode: latent dim " + std::to_string(u.cols()) + ", decoder expects " +
                     std::to_string(net.in_dim()));
  }
  return net.forward(u);
}

RowVector decode(const Sampler& sampler, const RowVector& u) {
  Tensor2 in = u;
  return decode(sampler, in).row(0);
}

std::pair<RowVector, std::size_t> knn_project(const KnnSampler& sampler, const RowVector& z_t) {
  const auto& bank = sampler.bank;
  if (bank.size() == 0) throw ShapeError("knn_project: empty bank");
  if (static_cast<std::size_t>(z_t.size()) != bank.dim()) {
    throw ShapeError("knn_project: query dim does not match bank");
  }
  std::size_t best = 0;
  double best_sim = -2.0;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double s = cosine_sim(z_t, bank.row(i));
    if (s > best_sim) {
      best_sim = s;
      best = i;
    }
  }
  return {bank.row(best), best};
}

double nearest_bank_cosine(const FeatureBank& bank, const Tensor2& samples) {
  if (bank.size() == 0 || samples.rows() == 0) throw ShapeError("nearest_bank_cosine: empty input");
  const Tensor2 a = normalize_rows(samples);
  const Tensor2 b = normalize_rows(bank.features);
  const Tensor2 sims = a * b.transpose();
  return sims.rowwise().maxCoeff().mean();
}

}  // namespace tarpro
