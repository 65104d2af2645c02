#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "vstab/pmu.hpp"
#include "vstab/random.hpp"

namespace vstab {

enum class Activation { relu, softplus, identity, sigmoid };

struct MlpLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;     // out
  Activation activation = Activation::identity;
};

Eigen::VectorXd forward_layer(const MlpLayer& layer, const Eigen::VectorXd& x);

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& pre);
// Elementwise derivative with respect to the pre-activation.
Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& pre);

// Per-channel affine map taking training data into [0.05, 0.95]:
// normalized = (x - offset) / scale.
struct NormStats {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;
};

NormStats fit_norm_stats(const std::vector<PhasorVector>& dataset);
Eigen::VectorXd normalize(const NormStats& stats, const Eigen::VectorXd& x);
Eigen::VectorXd denormalize(const NormStats& stats, const Eigen::VectorXd& x_norm);

enum class ReconLikelihood { gaussian, bernoulli };

struct LatentDistribution {
  Eigen::VectorXd mu;
  Eigen::VectorXd var;  // strictly positive
};

struct VaeModel {
  std::vector<MlpLayer> encoder_layers;  // hidden stack, relu
  MlpLayer mean_head;                    // identity
  MlpLayer var_head;                     // softplus, floored in encode()
  std::vector<MlpLayer> decoder_layers;  // hidden relu, output identity or sigmoid
  int latent_dim = 2;
  NormStats norm_stats;
  ReconLikelihood recon_likelihood = ReconLikelihood::gaussian;

  int input_dim() const;
};

struct VaeArchitecture {
  int input_dim = 0;
  std::vector<int> encoder_hidden;
  int latent_dim = 2;
  std::vector<int> decoder_hidden;
};

enum class InitScheme { paper_std_normal, scaled };

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int max_steps = 10000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  InitScheme init_scheme = InitScheme::scaled;
  // Stop when the windowed mean loss improves by less than this fraction
  // across stop_window consecutive windows of log_every steps each.
  double stop_rel_improvement = 1e-4;
  int stop_window = 50;
  int log_every = 50;
};

VaeModel make_vae(const VaeArchitecture& arch, ReconLikelihood likelihood, InitScheme scheme,
                  RandomStream& rng);

LatentDistribution encode(const VaeModel& model, const Eigen::VectorXd& x_norm);
Eigen::VectorXd decode(const VaeModel& model, const Eigen::VectorXd& z);

Eigen::VectorXd reparameterize(const LatentDistribution& dist, const Eigen::VectorXd& eps);
Eigen::VectorXd reparameterize(const LatentDistribution& dist, RandomStream& rng);

double kl_gauss(const LatentDistribution& dist);
double recon_loss(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x,
                  ReconLikelihood likelihood);

struct LayerGrads {
  Eigen::MatrixXd weights;
  Eigen::VectorXd bias;
};

struct VaeGradients {
  std::vector<LayerGrads> encoder_layers;
  LayerGrads mean_head;
  LayerGrads var_head;
  std::vector<LayerGrads> decoder_layers;
};

struct ElboResult {
  double loss = 0.0;   // recon + kl, averaged over the batch
  double recon = 0.0;
  double kl = 0.0;
  VaeGradients grads;
};

/// Loss and exact parameter gradients for one normalized sample with the
/// standard-normal draw supplied explicitly (finite-difference checks fix it).
ElboResult elbo_loss(const VaeModel& model, const Eigen::VectorXd& x_norm,
                     const Eigen::VectorXd& eps);
ElboResult elbo_loss(const VaeModel& model, const Eigen::VectorXd& x_norm, RandomStream& rng);

/// Batched variant: columns of x and eps are samples; gradients are averaged.
ElboResult elbo_loss_batch(const VaeModel& model, const Eigen::MatrixXd& x_norm,
                           const Eigen::MatrixXd& eps);

struct AdamMoments {
  Eigen::MatrixXd m_w, v_w;
  Eigen::VectorXd m_b, v_b;
};

struct AdamState {
  std::vector<AdamMoments> encoder_layers;
  AdamMoments mean_head;
  AdamMoments var_head;
  std::vector<AdamMoments> decoder_layers;
  int step_count = 0;
};

AdamState make_adam_state(const VaeModel& model);
void adam_step(VaeModel& model, const VaeGradients& grads, AdamState& state,
               const TrainConfig& config);
void adam_update_layer(MlpLayer& layer, const LayerGrads& grads, AdamMoments& mom,
                       const TrainConfig& c, int t);

struct TrainLog {
  std::vector<double> step_loss;
  int steps_run = 0;
  bool stopped_early = false;
};

VaeModel train(const std::vector<PhasorVector>& dataset, const VaeArchitecture& arch,
               const TrainConfig& config, ReconLikelihood likelihood = ReconLikelihood::gaussian,
               TrainLog* log = nullptr);

// Deterministic-autoencoder baseline: same stacks, identity bottleneck,
// plain reconstruction loss.
struct AeModel {
  std::vector<MlpLayer> encoder_layers;
  MlpLayer latent_head;  // identity
  std::vector<MlpLayer> decoder_layers;
  int latent_dim = 2;
  NormStats norm_stats;
};

Eigen::VectorXd ae_encode(const AeModel& model, const Eigen::VectorXd& x_norm);
Eigen::VectorXd ae_decode(const AeModel& model, const Eigen::VectorXd& z);

AeModel train_plain_ae(const std::vector<PhasorVector>& dataset, const VaeArchitecture& arch,
                       const TrainConfig& config, TrainLog* log = nullptr);

}  // namespace vstab
