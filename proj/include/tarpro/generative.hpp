#pragma once

// Samplers of the source feature manifold: VAE (default), GAN, and 1-NN
// retrieval. VAE and GAN expose their decoder as a differentiable G(u).

#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "tarpro/metric.hpp"
#include "tarpro/numerics.hpp"

namespace tarpro {

struct VaeConfig {
  std::vector<std::size_t> hidden{32, 32};
  std::size_t latent_dim = 8;
  double kl_weight = 0.05;
  double lr = 0.005;
  double momentum = 0.9;
  std::size_t epochs = 350;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct VaeModel {
  Mlp encoder;  // feature -> [mu | logvar]
  Mlp decoder;  // latent -> feature
  std::size_t latent_dim = 0;

  bool operator==(const VaeModel&) const = default;
};

struct GanConfig {
  std::vector<std::size_t> hidden{32, 32};
  std::size_t latent_dim = 8;
  double lr = 0.0002;
  double beta1 = 0.5;
  std::size_t epochs = 450;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct GanModel {
  Mlp generator;      // latent -> feature
  Mlp discriminator;  // feature -> 1 logit
  std::size_t latent_dim = 0;

  bool operator==(const GanModel&) const = default;
};

struct KnnSampler {
  FeatureBank bank;
};

using Sampler = std::variant<VaeModel, GanModel, KnnSampler>;

struct VaeLoss {
  double total = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct VaeGrads {
  MlpGrads encoder;
  MlpGrads decoder;
};

/// mu + exp(logvar / 2) * noise, elementwise.
Tensor2 reparameterize(const Tensor2& mu, const Tensor2& logvar, const Tensor2& noise);

/// recon = mean over elements of |x - x_hat| + (x - x_hat)^2;
/// kl = per-example mean of KL(N(mu, sigma^2) || N(0, I));
/// total = recon + kl_weight * kl.
VaeLoss vae_loss(const VaeModel& model, const Tensor2& batch, const Tensor2& noise,
                 double kl_weight, VaeGrads* grads = nullptr);

/// Closed-form KL term alone, per-example mean.
double gaussian_kl(const Tensor2& mu, const Tensor2& logvar);

VaeModel init_vae(std::size_t feature_dim, const VaeConfig& config);
VaeModel train_vae(const FeatureBank& bank, const VaeConfig& config, TrainingLog* log = nullptr);
void fit_vae(VaeModel& model, const Tensor2& features, const VaeConfig& config,
             TrainingLog* log = nullptr);

struct GanLoss {
  double discriminator = 0.0;  // BCE(D(real), 1) + BCE(D(fake), 0)
  double generator = 0.0;      // non-saturating: -log sigmoid(D(fake))
};

struct GanGrads {
  MlpGrads discriminator;  // of GanLoss::discriminator
  MlpGrads generator;      // of GanLoss::generator
};

GanLoss gan_losses(const GanModel& model, const Tensor2& real, const Tensor2& noise,
                   GanGrads* grads = nullptr);

/// Fraction of real rows scored > 0.5 plus fake rows scored < 0.5, halved.
double discriminator_accuracy(const GanModel& model, const Tensor2& real, const Tensor2& noise);

GanModel init_gan(std::size_t feature_dim, const GanConfig& config);
/// log->accuracy holds discriminator accuracy (index 0 = before training).
GanModel train_gan(const FeatureBank& bank, const GanConfig& config, TrainingLog* log = nullptr);
void fit_gan(GanModel& model, const Tensor2& features, const GanConfig& config,
             TrainingLog* log = nullptr);

/// Decoder network of a VAE or GAN sampler; throws for 1-NN.
const Mlp& generator_net(const Sampler& sampler);
std::size_t latent_dim(const Sampler& sampler);

RowVector decode(const Sampler& sampler, const RowVector& u);
Tensor2 decode(const Sampler& sampler, const Tensor2& u);

/// Bank row with the highest cosine similarity to z_t; lowest index on ties.
std::pair<RowVector, std::size_t> knn_project(const KnnSampler& sampler, const RowVector& z_t);

/// Mean over rows of `samples` of the best cosine similarity to any bank row.
double nearest_bank_cosine(const FeatureBank& bank, const Tensor2& samples);

/// Standard normal matrix from `rng`.
Tensor2 standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

}  // namespace tarpro
