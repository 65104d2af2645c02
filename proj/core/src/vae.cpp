#include "vstab/vae.hpp"

#include <cmath>

#include "vstab/errors.hpp"

namespace vstab {

namespace {

constexpr double kVarFloor = 1e-8;

double softplus(double a) { return a > 30.0 ? a : std::log1p(std::exp(a)); }

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

}  // namespace

Eigen::MatrixXd apply_activation(Activation act, const Eigen::MatrixXd& pre) {
  switch (act) {
    case Activation::relu: return pre.cwiseMax(0.0);
    case Activation::softplus: return pre.unaryExpr([](double a) { return softplus(a); });
    case Activation::identity: return pre;
    case Activation::sigmoid: return pre.unaryExpr([](double a) { return sigmoid(a); });
  }
  return pre;
}

// Derivative with respect to the pre-activation, elementwise.
Eigen::MatrixXd activation_grad(Activation act, const Eigen::MatrixXd& pre) {
  switch (act) {
    case Activation::relu:
      return (pre.array() > 0.0).cast<double>().matrix();
    case Activation::softplus:
      return pre.unaryExpr([](double a) { return sigmoid(a); });
    case Activation::identity:
      return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
    case Activation::sigmoid:
      return pre.unaryExpr([](double a) {
        const double s = sigmoid(a);
        return s * (1.0 - s);
      });
  }
  return Eigen::MatrixXd::Ones(pre.rows(), pre.cols());
}

namespace {

Eigen::MatrixXd layer_pre(const MlpLayer& layer, const Eigen::MatrixXd& x) {
  if (layer.weights.cols() != x.rows()) {
    throw DimensionMismatch("layer expects input of size " + std::to_string(layer.weights.cols()) +
                            ", got " + std::to_string(x.rows()));
  }
  return (layer.weights * x).colwise() + layer.bias;
}

}  // namespace

Eigen::VectorXd forward_layer(const MlpLayer& layer, const Eigen::VectorXd& x) {
  return apply_activation(layer.activation, layer_pre(layer, x));
}

NormStats fit_norm_stats(const std::vector<PhasorVector>& dataset) {
  if (dataset.empty()) throw ValidationError("cannot fit normalization on an empty dataset");
  const Eigen::Index d = dataset.front().values.size();
  Eigen::VectorXd lo = dataset.front().values;
  Eigen::VectorXd hi = dataset.front().values;
  for (const auto& v : dataset) {
    if (v.values.size() != d) throw DimensionMismatch("dataset vectors differ in length");
    lo = lo.cwiseMin(v.values);
    hi = hi.cwiseMax(v.values);
  }
  NormStats stats;
  stats.offset.resize(d);
  stats.scale.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const double span = hi[i] - lo[i];
    if (span > 0.0) {
      stats.scale[i] = span / 0.9;
      stats.offset[i] = lo[i] - 0.05 * stats.scale[i];
    } else {
      // Constant channel: park it at mid-range.
      stats.scale[i] = 1.0;
      stats.offset[i] = lo[i] - 0.5;
    }
  }
  return stats;
}

Eigen::VectorXd normalize(const NormStats& stats, const Eigen::VectorXd& x) {
  if (x.size() != stats.offset.size()) throw DimensionMismatch("normalization dimension mismatch");
  return (x - stats.offset).cwiseQuotient(stats.scale);
}

Eigen::VectorXd denormalize(const NormStats& stats, const Eigen::VectorXd& x_norm) {
  if (x_norm.size() != stats.offset.size()) {
    throw DimensionMismatch("normalization dimension mismatch");
  }
  return x_norm.cwiseProduct(stats.scale) + stats.offset;
}

int VaeModel::input_dim() const {
  return encoder_layers.empty() ? static_cast<int>(mean_head.weights.cols())
                                : static_cast<int>(encoder_layers.front().weights.cols());
}

LatentDistribution encode(const VaeModel& model, const Eigen::VectorXd& x_norm) {
  Eigen::VectorXd h = x_norm;
  for (const auto& layer : model.encoder_layers) h = forward_layer(layer, h);
  LatentDistribution dist;
  dist.mu = forward_layer(model.mean_head, h);
  dist.var = (forward_layer(model.var_head, h).array() + kVarFloor).matrix();
  return dist;
}

Eigen::VectorXd decode(const VaeModel& model, const Eigen::VectorXd& z) {
  Eigen::VectorXd h = z;
  for (const auto& layer : model.decoder_layers) h = forward_layer(layer, h);
  return h;
}

Eigen::VectorXd reparameterize(const LatentDistribution& dist, const Eigen::VectorXd& eps) {
  if (eps.size() != dist.mu.size()) throw DimensionMismatch("eps does not match latent size");
  return dist.mu + dist.var.cwiseSqrt().cwiseProduct(eps);
}

Eigen::VectorXd reparameterize(const LatentDistribution& dist, RandomStream& rng) {
  Eigen::VectorXd eps(dist.mu.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
  return reparameterize(dist, eps);
}

double kl_gauss(const LatentDistribution& dist) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < dist.mu.size(); ++i) {
    const double v = dist.var[i];
    const double m = dist.mu[i];
    kl += 0.5 * (-std::log(v) + v + m * m - 1.0);
  }
  return kl;
}

double recon_loss(const Eigen::VectorXd& x_hat, const Eigen::VectorXd& x,
                  ReconLikelihood likelihood) {
  if (x_hat.size() != x.size()) throw DimensionMismatch("reconstruction size mismatch");
  if (likelihood == ReconLikelihood::gaussian) {
    return (x - x_hat).squaredNorm();
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] < 0.0 || x[i] > 1.0 || x_hat[i] < 0.0 || x_hat[i] > 1.0) {
      throw DomainError("bernoulli reconstruction needs values in [0, 1]");
    }
    const double p = std::min(std::max(x_hat[i], 1e-12), 1.0 - 1e-12);
    loss -= x[i] * std::log(p) + (1.0 - x[i]) * std::log(1.0 - p);
  }
  return loss;
}

ElboResult elbo_loss_batch(const VaeModel& model, const Eigen::MatrixXd& x_norm,
                           const Eigen::MatrixXd& eps) {
  const Eigen::Index batch = x_norm.cols();
  if (batch == 0) throw ValidationError("elbo batch is empty");
  if (model.decoder_layers.empty()) throw ValidationError("model needs a decoder layer");
  if (eps.rows() != model.latent_dim || eps.cols() != batch) {
    throw DimensionMismatch("eps must be latent_dim x batch");
  }
  const double inv_b = 1.0 / static_cast<double>(batch);

  // Forward with cached pre-activations.
  std::vector<Eigen::MatrixXd> enc_pre, enc_act;
  enc_act.push_back(x_norm);
  for (const auto& layer : model.encoder_layers) {
    enc_pre.push_back(layer_pre(layer, enc_act.back()));
    enc_act.push_back(apply_activation(layer.activation, enc_pre.back()));
  }
  const Eigen::MatrixXd mu = layer_pre(model.mean_head, enc_act.back());
  const Eigen::MatrixXd var_pre = layer_pre(model.var_head, enc_act.back());
  const Eigen::MatrixXd var =
      (apply_activation(Activation::softplus, var_pre).array() + kVarFloor).matrix();
  const Eigen::MatrixXd std_dev = var.cwiseSqrt();
  const Eigen::MatrixXd z = mu + std_dev.cwiseProduct(eps);

  std::vector<Eigen::MatrixXd> dec_pre, dec_act;
  dec_act.push_back(z);
  for (const auto& layer : model.decoder_layers) {
    dec_pre.push_back(layer_pre(layer, dec_act.back()));
    dec_act.push_back(apply_activation(layer.activation, dec_pre.back()));
  }
  const Eigen::MatrixXd& x_hat = dec_act.back();

  ElboResult result;
  if (model.recon_likelihood == ReconLikelihood::gaussian) {
    result.recon = (x_norm - x_hat).squaredNorm() * inv_b;
  } else {
    double total = 0.0;
    for (Eigen::Index c = 0; c < batch; ++c) {
      total += recon_loss(x_hat.col(c), x_norm.col(c), ReconLikelihood::bernoulli);
    }
    result.recon = total * inv_b;
  }
  result.kl =
      (0.5 * (-var.array().log() + var.array() + mu.array().square() - 1.0)).sum() * inv_b;
  result.loss = result.recon + result.kl;
  if (!std::isfinite(result.loss)) throw NumericalError("elbo loss is not finite");

  // Backward pass. All gradient seeds carry the 1/batch factor.
  Eigen::MatrixXd d_out_pre;
  if (model.recon_likelihood == ReconLikelihood::gaussian) {
    d_out_pre = 2.0 * inv_b * (x_hat - x_norm);
    if (model.decoder_layers.back().activation != Activation::identity) {
      d_out_pre = d_out_pre.cwiseProduct(
          activation_grad(model.decoder_layers.back().activation, dec_pre.back()));
    }
  } else {
    // Sigmoid output and cross-entropy cancel into this linear form.
    d_out_pre = inv_b * (x_hat - x_norm);
  }

  result.grads.decoder_layers.resize(model.decoder_layers.size());
  Eigen::MatrixXd d_pre = d_out_pre;
  for (std::size_t l = model.decoder_layers.size(); l-- > 0;) {
    const auto& layer = model.decoder_layers[l];
    if (l + 1 < model.decoder_layers.size()) {
      const Eigen::MatrixXd d_act = model.decoder_layers[l + 1].weights.transpose() * d_pre;
      d_pre = d_act.cwiseProduct(activation_grad(layer.activation, dec_pre[l]));
    }
    result.grads.decoder_layers[l].weights = d_pre * dec_act[l].transpose();
    result.grads.decoder_layers[l].bias = d_pre.rowwise().sum();
    if (l == 0) d_pre = layer.weights.transpose() * d_pre;  // gradient w.r.t. z
  }
  const Eigen::MatrixXd& d_z = d_pre;

  // Reparameterization and KL paths into the two heads.
  const Eigen::MatrixXd d_mu = d_z + inv_b * mu;
  const Eigen::MatrixXd d_var =
      0.5 * (d_z.cwiseProduct(eps).cwiseQuotient(std_dev) +
             inv_b * (1.0 - var.array().inverse()).matrix());
  const Eigen::MatrixXd d_var_pre = d_var.cwiseProduct(activation_grad(Activation::softplus, var_pre));

  result.grads.mean_head.weights = d_mu * enc_act.back().transpose();
  result.grads.mean_head.bias = d_mu.rowwise().sum();
  result.grads.var_head.weights = d_var_pre * enc_act.back().transpose();
  result.grads.var_head.bias = d_var_pre.rowwise().sum();

  Eigen::MatrixXd d_h = model.mean_head.weights.transpose() * d_mu +
                        model.var_head.weights.transpose() * d_var_pre;
  result.grads.encoder_layers.resize(model.encoder_layers.size());
  for (std::size_t l = model.encoder_layers.size(); l-- > 0;) {
    const auto& layer = model.encoder_layers[l];
    const Eigen::MatrixXd d_pre_l = d_h.cwiseProduct(activation_grad(layer.activation, enc_pre[l]));
    result.grads.encoder_layers[l].weights = d_pre_l * enc_act[l].transpose();
    result.grads.encoder_layers[l].bias = d_pre_l.rowwise().sum();
    if (l > 0) d_h = layer.weights.transpose() * d_pre_l;
  }
  return result;
}

ElboResult elbo_loss(const VaeModel& model, const Eigen::VectorXd& x_norm,
                     const Eigen::VectorXd& eps) {
  return elbo_loss_batch(model, x_norm, eps);
}

ElboResult elbo_loss(const VaeModel& model, const Eigen::VectorXd& x_norm, RandomStream& rng) {
  Eigen::VectorXd eps(model.latent_dim);
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.gaussian();
  return elbo_loss_batch(model, x_norm, eps);
}

AdamState make_adam_state(const VaeModel& model) {
  auto zeros = [](const MlpLayer& layer) {
    AdamMoments m;
    m.m_w = Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols());
    m.v_w = m.m_w;
    m.m_b = Eigen::VectorXd::Zero(layer.bias.size());
    m.v_b = m.m_b;
    return m;
  };
  AdamState state;
  for (const auto& l : model.encoder_layers) state.encoder_layers.push_back(zeros(l));
  state.mean_head = zeros(model.mean_head);
  state.var_head = zeros(model.var_head);
  for (const auto& l : model.decoder_layers) state.decoder_layers.push_back(zeros(l));
  return state;
}

namespace {

template <typename T>
void adam_update(T& param, const T& grad, T& m, T& v, const TrainConfig& c, int t) {
  m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * grad;
  v = (c.adam_beta2 * v.array() + (1.0 - c.adam_beta2) * grad.array().square()).matrix();
  const double bc1 = 1.0 - std::pow(c.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(c.adam_beta2, t);
  param -= (c.learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps))
               .matrix();
}

}  // namespace

void adam_update_layer(MlpLayer& layer, const LayerGrads& grads, AdamMoments& mom,
                       const TrainConfig& c, int t) {
  adam_update(layer.weights, grads.weights, mom.m_w, mom.v_w, c, t);
  adam_update(layer.bias, grads.bias, mom.m_b, mom.v_b, c, t);
}

void adam_step(VaeModel& model, const VaeGradients& grads, AdamState& state,
               const TrainConfig& config) {
  if (grads.encoder_layers.size() != model.encoder_layers.size() ||
      grads.decoder_layers.size() != model.decoder_layers.size()) {
    throw DimensionMismatch("gradient structure does not match the model");
  }
  const int t = ++state.step_count;
  for (std::size_t l = 0; l < model.encoder_layers.size(); ++l) {
    adam_update_layer(model.encoder_layers[l], grads.encoder_layers[l], state.encoder_layers[l],
                      config, t);
  }
  adam_update_layer(model.mean_head, grads.mean_head, state.mean_head, config, t);
  adam_update_layer(model.var_head, grads.var_head, state.var_head, config, t);
  for (std::size_t l = 0; l < model.decoder_layers.size(); ++l) {
    adam_update_layer(model.decoder_layers[l], grads.decoder_layers[l], state.decoder_layers[l],
                      config, t);
  }
}

}  // namespace vstab
