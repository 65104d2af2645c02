#include <cmath>
#include <string>
#include <vector>

#include "vstab/errors.hpp"
#include "vstab/vae.hpp"

namespace vstab {

namespace {

void check_arch(const VaeArchitecture& arch) {
  if (arch.input_dim < 1) throw ValidationError("architecture needs input_dim >= 1");
  if (arch.latent_dim < 1) throw ValidationError("architecture needs latent_dim >= 1");
  for (int h : arch.encoder_hidden) {
    if (h < 1) throw ValidationError("encoder hidden sizes must be >= 1");
  }
  for (int h : arch.decoder_hidden) {
    if (h < 1) throw ValidationError("decoder hidden sizes must be >= 1");
  }
}

void check_config(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (config.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (config.max_steps < 1) throw ValidationError("max_steps must be >= 1");
  if (config.log_every < 1 || config.stop_window < 1) {
    throw ValidationError("log_every and stop_window must be >= 1");
  }
}

// Weights drawn column-major, then the bias, so a fixed seed fixes the model.
MlpLayer init_layer(int out, int in, Activation act, InitScheme scheme, RandomStream& rng) {
  MlpLayer layer;
  layer.weights.resize(out, in);
  layer.bias.resize(out);
  layer.activation = act;
  const double w_scale = scheme == InitScheme::paper_std_normal
                             ? 1.0
                             : 1.0 / std::sqrt(static_cast<double>(in));
  for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      layer.weights(r, c) = w_scale * rng.gaussian();
    }
  }
  for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
    layer.bias[r] = scheme == InitScheme::paper_std_normal ? rng.gaussian() : 0.0;
  }
  return layer;
}

Eigen::MatrixXd dataset_matrix(const std::vector<PhasorVector>& dataset, const NormStats& stats,
                               int input_dim) {
  const auto n = static_cast<Eigen::Index>(dataset.size());
  Eigen::MatrixXd data(input_dim, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    const auto& v = dataset[static_cast<std::size_t>(c)].values;
    if (v.size() != input_dim) {
      throw DimensionMismatch("dataset vector length " + std::to_string(v.size()) +
                              " does not match input_dim " + std::to_string(input_dim));
    }
    data.col(c) = normalize(stats, v);
  }
  return data;
}

// Early stop when the windowed mean loss has stopped improving relative to
// the window stop_window positions back.
class StopRule {
 public:
  StopRule(const TrainConfig& config) : config_(config) {}

  bool update(double step_loss) {
    window_sum_ += step_loss;
    if (++window_fill_ < config_.log_every) return false;
    means_.push_back(window_sum_ / config_.log_every);
    window_sum_ = 0.0;
    window_fill_ = 0;
    const auto k = means_.size();
    if (k <= static_cast<std::size_t>(config_.stop_window)) return false;
    const double base = means_[k - 1 - static_cast<std::size_t>(config_.stop_window)];
    const double improvement = (base - means_.back()) / std::max(std::abs(base), 1e-12);
    return improvement < config_.stop_rel_improvement;
  }

 private:
  const TrainConfig& config_;
  double window_sum_ = 0.0;
  int window_fill_ = 0;
  std::vector<double> means_;
};

struct Batch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd eps;
};

// Index draws come before the noise draws, so the sampling order is part of
// the reproducibility contract.
Batch draw_batch(const Eigen::MatrixXd& data, int batch_size, int latent_dim, bool with_eps,
                 RandomStream& rng) {
  Batch batch;
  batch.x.resize(data.rows(), batch_size);
  for (int c = 0; c < batch_size; ++c) {
    batch.x.col(c) = data.col(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.cols()))));
  }
  if (with_eps) {
    batch.eps.resize(latent_dim, batch_size);
    for (Eigen::Index c = 0; c < batch.eps.cols(); ++c) {
      for (Eigen::Index r = 0; r < batch.eps.rows(); ++r) batch.eps(r, c) = rng.gaussian();
    }
  }
  return batch;
}

}  // namespace

VaeModel make_vae(const VaeArchitecture& arch, ReconLikelihood likelihood, InitScheme scheme,
                  RandomStream& rng) {
  check_arch(arch);
  VaeModel model;
  model.latent_dim = arch.latent_dim;
  model.recon_likelihood = likelihood;
  int width = arch.input_dim;
  for (int h : arch.encoder_hidden) {
    model.encoder_layers.push_back(init_layer(h, width, Activation::relu, scheme, rng));
    width = h;
  }
  model.mean_head = init_layer(arch.latent_dim, width, Activation::identity, scheme, rng);
  model.var_head = init_layer(arch.latent_dim, width, Activation::softplus, scheme, rng);
  width = arch.latent_dim;
  for (int h : arch.decoder_hidden) {
    model.decoder_layers.push_back(init_layer(h, width, Activation::relu, scheme, rng));
    width = h;
  }
  const Activation out_act =
      likelihood == ReconLikelihood::bernoulli ? Activation::sigmoid : Activation::identity;
  model.decoder_layers.push_back(init_layer(arch.input_dim, width, out_act, scheme, rng));
  // Identity normalization until train() freezes real statistics.
  model.norm_stats.offset = Eigen::VectorXd::Zero(arch.input_dim);
  model.norm_stats.scale = Eigen::VectorXd::Ones(arch.input_dim);
  return model;
}

VaeModel train(const std::vector<PhasorVector>& dataset, const VaeArchitecture& arch,
               const TrainConfig& config, ReconLikelihood likelihood, TrainLog* log) {
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  check_arch(arch);
  check_config(config);

  RandomStream rng(config.seed);
  VaeModel model = make_vae(arch, likelihood, config.init_scheme, rng);
  model.norm_stats = fit_norm_stats(dataset);
  const Eigen::MatrixXd data = dataset_matrix(dataset, model.norm_stats, arch.input_dim);

  AdamState state = make_adam_state(model);
  StopRule stop(config);
  if (log) {
    log->step_loss.clear();
    log->steps_run = 0;
    log->stopped_early = false;
  }

  for (int step = 0; step < config.max_steps; ++step) {
    const Batch batch = draw_batch(data, config.batch_size, arch.latent_dim, true, rng);
    const ElboResult res = elbo_loss_batch(model, batch.x, batch.eps);
    adam_step(model, res.grads, state, config);
    if (log) {
      log->step_loss.push_back(res.loss);
      log->steps_run = step + 1;
    }
    if (stop.update(res.loss)) {
      if (log) log->stopped_early = true;
      break;
    }
  }
  return model;
}

Eigen::VectorXd ae_encode(const AeModel& model, const Eigen::VectorXd& x_norm) {
  Eigen::VectorXd h = x_norm;
  for (const auto& layer : model.encoder_layers) h = forward_layer(layer, h);
  return forward_layer(model.latent_head, h);
}

Eigen::VectorXd ae_decode(const AeModel& model, const Eigen::VectorXd& z) {
  Eigen::VectorXd h = z;
  for (const auto& layer : model.decoder_layers) h = forward_layer(layer, h);
  return h;
}

AeModel train_plain_ae(const std::vector<PhasorVector>& dataset, const VaeArchitecture& arch,
                       const TrainConfig& config, TrainLog* log) {
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  check_arch(arch);
  check_config(config);

  RandomStream rng(config.seed);
  // Flat layer stack: encoder hidden, identity bottleneck, decoder hidden,
  // identity output.
  std::vector<MlpLayer> layers;
  int width = arch.input_dim;
  for (int h : arch.encoder_hidden) {
    layers.push_back(init_layer(h, width, Activation::relu, config.init_scheme, rng));
    width = h;
  }
  layers.push_back(init_layer(arch.latent_dim, width, Activation::identity, config.init_scheme, rng));
  width = arch.latent_dim;
  for (int h : arch.decoder_hidden) {
    layers.push_back(init_layer(h, width, Activation::relu, config.init_scheme, rng));
    width = h;
  }
  layers.push_back(init_layer(arch.input_dim, width, Activation::identity, config.init_scheme, rng));

  const NormStats stats = fit_norm_stats(dataset);
  const Eigen::MatrixXd data = dataset_matrix(dataset, stats, arch.input_dim);

  std::vector<AdamMoments> moments;
  for (const auto& layer : layers) {
    AdamMoments m;
    m.m_w = Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols());
    m.v_w = m.m_w;
    m.m_b = Eigen::VectorXd::Zero(layer.bias.size());
    m.v_b = m.m_b;
    moments.push_back(std::move(m));
  }

  StopRule stop(config);
  if (log) {
    log->step_loss.clear();
    log->steps_run = 0;
    log->stopped_early = false;
  }

  int adam_t = 0;
  for (int step = 0; step < config.max_steps; ++step) {
    const Batch batch = draw_batch(data, config.batch_size, arch.latent_dim, false, rng);
    const double inv_b = 1.0 / static_cast<double>(config.batch_size);

    std::vector<Eigen::MatrixXd> pre, act;
    act.push_back(batch.x);
    for (const auto& layer : layers) {
      pre.push_back((layer.weights * act.back()).colwise() + layer.bias);
      act.push_back(apply_activation(layer.activation, pre.back()));
    }
    const double loss = (batch.x - act.back()).squaredNorm() * inv_b;
    if (!std::isfinite(loss)) throw NumericalError("autoencoder loss is not finite");

    Eigen::MatrixXd d_act = 2.0 * inv_b * (act.back() - batch.x);
    std::vector<LayerGrads> grads(layers.size());
    for (std::size_t l = layers.size(); l-- > 0;) {
      const Eigen::MatrixXd d_pre =
          d_act.cwiseProduct(activation_grad(layers[l].activation, pre[l]));
      grads[l].weights = d_pre * act[l].transpose();
      grads[l].bias = d_pre.rowwise().sum();
      if (l > 0) d_act = layers[l].weights.transpose() * d_pre;
    }
    ++adam_t;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      adam_update_layer(layers[l], grads[l], moments[l], config, adam_t);
    }
    if (log) {
      log->step_loss.push_back(loss);
      log->steps_run = step + 1;
    }
    if (stop.update(loss)) {
      if (log) log->stopped_early = true;
      break;
    }
  }

  AeModel model;
  model.latent_dim = arch.latent_dim;
  model.norm_stats = stats;
  const std::size_t enc = arch.encoder_hidden.size();
  model.encoder_layers.assign(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(enc));
  model.latent_head = layers[enc];
  model.decoder_layers.assign(layers.begin() + static_cast<std::ptrdiff_t>(enc) + 1, layers.end());
  return model;
}

}  // namespace vstab
