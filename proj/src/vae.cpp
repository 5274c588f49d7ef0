#include "asvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace asvae {

namespace {

const std::vector<std::string>& names() {
  static const std::vector<std::string> n = {
      "encoder.hidden.weight", "encoder.hidden.bias",  "encoder.mean.weight",
      "encoder.mean.bias",     "encoder.logvar.weight", "encoder.logvar.bias",
      "decoder.hidden.weight", "decoder.hidden.bias",  "decoder.logvar.weight",
      "decoder.logvar.bias"};
  return n;
}

void require_shape(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
                   std::string_view what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw std::invalid_argument(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                                std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()));
  }
}

Eigen::MatrixXd floored(const Eigen::MatrixXd& power) {
  return power.cwiseMax(kPowerFloor);
}

// Forward pass of the whole ELBO, kept for the backward pass.
struct Forward {
  Eigen::MatrixXd x;    // floored power, F x B
  Eigen::MatrixXd e;    // encoder hidden activations, H x B
  Eigen::MatrixXd mu;   // L x B
  Eigen::MatrixXd lv;   // L x B
  Eigen::MatrixXd sd;   // exp(lv / 2)
  Eigen::MatrixXd h;    // L x B
  Eigen::MatrixXd d;    // decoder hidden activations, H x B
  Eigen::MatrixXd y;    // log speech variance, F x B
  double value = 0.0;
};

Forward forward(const VaeParams& p, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise) {
  if (batch.cols() == 0) throw std::invalid_argument("elbo: empty batch");
  require_shape(batch, p.dims.freq_bins, batch.cols(), "elbo batch");
  require_shape(noise, p.dims.latent_dim, batch.cols(), "elbo noise");
  if ((batch.array() < 0.0).any()) throw std::invalid_argument("elbo: negative power");

  Forward fw;
  fw.x = floored(batch);
  fw.e = ((p.enc_w1 * fw.x).colwise() + p.enc_b1).array().tanh().matrix();
  fw.mu = (p.enc_w_mu * fw.e).colwise() + p.enc_b_mu;
  fw.lv = (p.enc_w_logvar * fw.e).colwise() + p.enc_b_logvar;
  fw.sd = (0.5 * fw.lv.array()).exp().matrix();
  fw.h = fw.mu + fw.sd.cwiseProduct(noise);
  fw.d = ((p.dec_w1 * fw.h).colwise() + p.dec_b1).array().tanh().matrix();
  fw.y = (p.dec_w_logvar * fw.d).colwise() + p.dec_b_logvar;

  const auto ratio = fw.x.array() * (-fw.y.array()).exp();
  const double recon = -(ratio - fw.x.array().log() + fw.y.array() - 1.0).sum();
  const double kl = 0.5 * (fw.lv.array() - fw.mu.array().square() - fw.lv.array().exp()).sum();
  fw.value = recon + kl;
  return fw;
}

}  // namespace

std::vector<std::string> tensor_names() { return names(); }

VaeParams VaeParams::zeros(VaeDims dims) {
  if (dims.freq_bins <= 0 || dims.latent_dim <= 0 || dims.hidden_dim <= 0) {
    throw std::invalid_argument("VaeDims: all dimensions must be positive");
  }
  const auto f = dims.freq_bins;
  const auto l = dims.latent_dim;
  const auto h = dims.hidden_dim;
  VaeParams p;
  p.dims = dims;
  p.enc_w1 = Eigen::MatrixXd::Zero(h, f);
  p.enc_b1 = Eigen::VectorXd::Zero(h);
  p.enc_w_mu = Eigen::MatrixXd::Zero(l, h);
  p.enc_b_mu = Eigen::VectorXd::Zero(l);
  p.enc_w_logvar = Eigen::MatrixXd::Zero(l, h);
  p.enc_b_logvar = Eigen::VectorXd::Zero(l);
  p.dec_w1 = Eigen::MatrixXd::Zero(h, l);
  p.dec_b1 = Eigen::VectorXd::Zero(h);
  p.dec_w_logvar = Eigen::MatrixXd::Zero(f, h);
  p.dec_b_logvar = Eigen::VectorXd::Zero(f);
  return p;
}

VaeParams VaeParams::glorot_uniform(VaeDims dims, RngStream& rng) {
  VaeParams p = zeros(dims);
  for (const TensorRef& t : p.tensors()) {
    if (t.cols == 1) continue;  // biases start at zero
    const double limit = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    auto m = t.map();
    for (Eigen::Index r = 0; r < t.rows; ++r) {
      for (Eigen::Index c = 0; c < t.cols; ++c) m(r, c) = limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

std::vector<TensorRef> VaeParams::tensors() {
  const auto& n = names();
  auto ref = [](std::string_view name, auto& m) {
    return TensorRef{name, m.data(), m.rows(), m.cols()};
  };
  return {ref(n[0], enc_w1),   ref(n[1], enc_b1),       ref(n[2], enc_w_mu),
          ref(n[3], enc_b_mu), ref(n[4], enc_w_logvar), ref(n[5], enc_b_logvar),
          ref(n[6], dec_w1),   ref(n[7], dec_b1),       ref(n[8], dec_w_logvar),
          ref(n[9], dec_b_logvar)};
}

void VaeParams::validate() const {
  const auto f = dims.freq_bins;
  const auto l = dims.latent_dim;
  const auto h = dims.hidden_dim;
  if (f <= 0 || l <= 0 || h <= 0) throw std::invalid_argument("VaeParams: non-positive dimension");
  if (l >= f) {
    throw std::invalid_argument("VaeParams: latent_dim " + std::to_string(l) +
                                " must be smaller than freq_bins " + std::to_string(f));
  }
  require_shape(enc_w1, h, f, "encoder.hidden.weight");
  require_shape(enc_b1, h, 1, "encoder.hidden.bias");
  require_shape(enc_w_mu, l, h, "encoder.mean.weight");
  require_shape(enc_b_mu, l, 1, "encoder.mean.bias");
  require_shape(enc_w_logvar, l, h, "encoder.logvar.weight");
  require_shape(enc_b_logvar, l, 1, "encoder.logvar.bias");
  require_shape(dec_w1, h, l, "decoder.hidden.weight");
  require_shape(dec_b1, h, 1, "decoder.hidden.bias");
  require_shape(dec_w_logvar, f, h, "decoder.logvar.weight");
  require_shape(dec_b_logvar, f, 1, "decoder.logvar.bias");
  for (const TensorRef& t : tensors()) {
    if (!t.map().allFinite()) {
      throw std::invalid_argument("VaeParams: non-finite entry in " + std::string(t.name));
    }
  }
}

bool operator==(const VaeParams& a, const VaeParams& b) {
  if (!(a.dims == b.dims)) return false;
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].rows != tb[i].rows || ta[i].cols != tb[i].cols) return false;
    if (ta[i].map() != tb[i].map()) return false;
  }
  return true;
}

EncoderBatch encode_batch(const VaeParams& p, const Eigen::MatrixXd& power) {
  require_shape(power, p.dims.freq_bins, power.cols(), "encode input");
  if ((power.array() < 0.0).any()) throw std::invalid_argument("encode: negative power");
  const Eigen::MatrixXd hidden =
      ((p.enc_w1 * floored(power)).colwise() + p.enc_b1).array().tanh().matrix();
  EncoderBatch out;
  out.mu = (p.enc_w_mu * hidden).colwise() + p.enc_b_mu;
  out.log_var = (p.enc_w_logvar * hidden).colwise() + p.enc_b_logvar;
  return out;
}

EncoderOutput encode(const VaeParams& p, const Eigen::VectorXd& power_spectrum) {
  EncoderBatch b = encode_batch(p, power_spectrum);
  return {b.mu.col(0), b.log_var.col(0)};
}

Eigen::MatrixXd decode_batch(const VaeParams& p, const Eigen::MatrixXd& h) {
  require_shape(h, p.dims.latent_dim, h.cols(), "decode input");
  const Eigen::MatrixXd hidden = ((p.dec_w1 * h).colwise() + p.dec_b1).array().tanh().matrix();
  return ((p.dec_w_logvar * hidden).colwise() + p.dec_b_logvar).array().exp().matrix();
}

Eigen::VectorXd decode(const VaeParams& p, const Eigen::VectorXd& h) {
  return decode_batch(p, h).col(0);
}

Eigen::VectorXd reparam_sample(const EncoderOutput& enc, RngStream& rng) {
  if (enc.mu.size() != enc.log_var.size()) {
    throw std::invalid_argument("reparam_sample: mu and log_var sizes differ");
  }
  Eigen::VectorXd h(enc.mu.size());
  for (Eigen::Index l = 0; l < h.size(); ++l) {
    h(l) = enc.mu(l) + std::exp(0.5 * enc.log_var(l)) * rng.normal();
  }
  return h;
}

double itakura_saito(double x, double y) {
  const double r = x / y;
  return r - std::log(r) - 1.0;
}

double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var) {
  return -0.5 * (log_var.array() - mu.array().square() - log_var.array().exp() + 1.0).sum();
}

Eigen::MatrixXd draw_reparam_noise(Eigen::Index latent_dim, Eigen::Index batch, RngStream& rng) {
  Eigen::MatrixXd noise(latent_dim, batch);
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (Eigen::Index l = 0; l < latent_dim; ++l) noise(l, n) = rng.normal();
  }
  return noise;
}

double elbo(const VaeParams& p, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise) {
  return forward(p, batch, noise).value;
}

double elbo(const VaeParams& p, const Eigen::MatrixXd& batch, RngStream& rng) {
  return elbo(p, batch, draw_reparam_noise(p.dims.latent_dim, batch.cols(), rng));
}

ElboGradient elbo_grad(const VaeParams& p, const Eigen::MatrixXd& batch,
                       const Eigen::MatrixXd& noise) {
  const Forward fw = forward(p, batch, noise);
  ElboGradient out;
  out.value = fw.value;
  VaeParams& g = out.grad;
  g.dims = p.dims;

  // Reconstruction term: d/dy [-(x e^-y + y)] = x e^-y - 1.
  const Eigen::MatrixXd gy = (fw.x.array() * (-fw.y.array()).exp() - 1.0).matrix();
  g.dec_b_logvar = gy.rowwise().sum();
  g.dec_w_logvar = gy * fw.d.transpose();
  const Eigen::MatrixXd ga2 =
      ((p.dec_w_logvar.transpose() * gy).array() * (1.0 - fw.d.array().square())).matrix();
  g.dec_b1 = ga2.rowwise().sum();
  g.dec_w1 = ga2 * fw.h.transpose();
  const Eigen::MatrixXd gh = p.dec_w1.transpose() * ga2;

  // Through h = mu + exp(lv/2) eps, plus the closed-form KL part.
  const Eigen::MatrixXd gmu = gh - fw.mu;
  const Eigen::MatrixXd glv =
      (0.5 * gh.array() * noise.array() * fw.sd.array() + 0.5 * (1.0 - fw.lv.array().exp()))
          .matrix();
  g.enc_b_mu = gmu.rowwise().sum();
  g.enc_w_mu = gmu * fw.e.transpose();
  g.enc_b_logvar = glv.rowwise().sum();
  g.enc_w_logvar = glv * fw.e.transpose();
  const Eigen::MatrixXd ga1 =
      ((p.enc_w_mu.transpose() * gmu + p.enc_w_logvar.transpose() * glv).array() *
       (1.0 - fw.e.array().square()))
          .matrix();
  g.enc_b1 = ga1.rowwise().sum();
  g.enc_w1 = ga1 * fw.x.transpose();
  return out;
}

ElboGradient elbo_grad(const VaeParams& p, const Eigen::MatrixXd& batch, RngStream& rng) {
  return elbo_grad(p, batch, draw_reparam_noise(p.dims.latent_dim, batch.cols(), rng));
}

void apply_freeze_mask(VaeParams& grad, const std::set<std::string>& frozen) {
  const auto known = names();
  for (const auto& name : frozen) {
    if (std::find(known.begin(), known.end(), name) == known.end()) {
      throw std::invalid_argument("unknown tensor name in freeze mask: " + name);
    }
  }
  for (const TensorRef& t : grad.tensors()) {
    if (frozen.count(std::string(t.name)) != 0) t.map().setZero();
  }
}

}  // namespace asvae
