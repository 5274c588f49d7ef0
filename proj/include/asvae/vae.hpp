#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "asvae/rng.hpp"

namespace asvae {

// Floor applied to power spectra before encoding and inside d_IS.
inline constexpr double kPowerFloor = 1e-10;

struct VaeDims {
  int freq_bins = 513;
  int latent_dim = 64;
  int hidden_dim = 128;

  friend bool operator==(const VaeDims&, const VaeDims&) = default;
};

// Mutable view of one parameter tensor (column-major storage).
struct TensorRef {
  std::string_view name;
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;

  Eigen::Map<Eigen::MatrixXd> map() const { return {data, rows, cols}; }
  Eigen::Index size() const { return rows * cols; }
};

// Weights of the recognition network (power spectrum -> q(h | s)) and of the
// generative network (h -> log speech variance). One tanh hidden layer each,
// identity output layers.
struct VaeParams {
  VaeDims dims;

  Eigen::MatrixXd enc_w1;        // H x F
  Eigen::VectorXd enc_b1;        // H
  Eigen::MatrixXd enc_w_mu;      // L x H
  Eigen::VectorXd enc_b_mu;      // L
  Eigen::MatrixXd enc_w_logvar;  // L x H
  Eigen::VectorXd enc_b_logvar;  // L

  Eigen::MatrixXd dec_w1;        // H x L
  Eigen::VectorXd dec_b1;        // H
  Eigen::MatrixXd dec_w_logvar;  // F x H
  Eigen::VectorXd dec_b_logvar;  // F

  static VaeParams zeros(VaeDims dims);
  // Glorot/Xavier uniform weights, zero biases.
  static VaeParams glorot_uniform(VaeDims dims, RngStream& rng);

  // Fixed order: encoder tensors first, then decoder tensors.
  std::vector<TensorRef> tensors();
  std::vector<TensorRef> tensors() const {
    return const_cast<VaeParams*>(this)->tensors();
  }

  // Throws std::invalid_argument on inconsistent shapes, L >= F or
  // non-finite entries.
  void validate() const;

  friend bool operator==(const VaeParams& a, const VaeParams& b);
};

std::vector<std::string> tensor_names();

struct EncoderOutput {
  Eigen::VectorXd mu;
  Eigen::VectorXd log_var;
};

struct EncoderBatch {
  Eigen::MatrixXd mu;       // L x B
  Eigen::MatrixXd log_var;  // L x B
};

EncoderOutput encode(const VaeParams& p, const Eigen::VectorXd& power_spectrum);
EncoderBatch encode_batch(const VaeParams& p, const Eigen::MatrixXd& power);

// Speech variance sigma_s^2(h) = exp(log-variance network output), length F.
Eigen::VectorXd decode(const VaeParams& p, const Eigen::VectorXd& h);
// Column-wise decode of an L x B latent matrix into F x B variances.
Eigen::MatrixXd decode_batch(const VaeParams& p, const Eigen::MatrixXd& h);

// h = mu + exp(log_var / 2) * eps, eps ~ N(0, I).
Eigen::VectorXd reparam_sample(const EncoderOutput& enc, RngStream& rng);

// d_IS(x; y) = x/y - ln(x/y) - 1.
double itakura_saito(double x, double y);

// KL(N(mu, diag(exp(log_var))) || N(0, I)) = -1/2 sum[log_var - mu^2 - exp(log_var) + 1].
double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& log_var);

// Single-sample ELBO of a batch of power spectra (F x B, one frame per
// column), constants dropped:
//   -sum_{f,n} d_IS(|s_fn|^2; sigma_f^2(h_n)) + 1/2 sum_{l,n}[ln s~2 - mu~2 - s~2].
// `noise` holds the L x B standard-normal draws of the reparametrization.
double elbo(const VaeParams& p, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise);
// Same, drawing the noise from `rng` (L x B normals, column by column).
double elbo(const VaeParams& p, const Eigen::MatrixXd& batch, RngStream& rng);

struct ElboGradient {
  double value = 0.0;
  VaeParams grad;  // same shapes as the parameters
};

// Exact gradient of the single-sample ELBO with respect to every tensor.
ElboGradient elbo_grad(const VaeParams& p, const Eigen::MatrixXd& batch,
                       const Eigen::MatrixXd& noise);
ElboGradient elbo_grad(const VaeParams& p, const Eigen::MatrixXd& batch, RngStream& rng);

Eigen::MatrixXd draw_reparam_noise(Eigen::Index latent_dim, Eigen::Index batch, RngStream& rng);

// Zeroes the gradient of every tensor whose name is in `frozen`.
void apply_freeze_mask(VaeParams& grad, const std::set<std::string>& frozen);

struct TrainConfig {
  int latent_dim = 64;
  int hidden_dim = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-7;
  int batch_size = 128;
  int max_epochs = 500;
  int patience = 10;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  std::set<std::string> frozen;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;               // 1-based
  double train_elbo = 0.0;     // mean per frame over the epoch's batches
  double validation_elbo = 0.0;  // mean per frame, fixed validation noise
  double best_validation_elbo = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  bool stopped_early = false;
};

struct TrainResult {
  VaeParams params;  // parameters at the best validation epoch
  TrainLog log;
};

// Adam ascent on the ELBO with early stopping on a held-out split. The
// dataset is F x M power spectra; the last validation_fraction of a seeded
// shuffle is held out. Throws std::invalid_argument when M < 10 * batch_size
// and NumericalError when the objective turns non-finite.
TrainResult train(const Eigen::MatrixXd& dataset, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

// Weight container: 8-byte magic "ASVAEW01", little-endian u64 header
// length, JSON header (format_version, F, L, H, tensors[name, shape,
// offset, nbytes]), then raw little-endian float64 tensors in row-major
// order. Offsets are relative to the start of the payload.
void save_weights(const VaeParams& p, const std::filesystem::path& path);
VaeParams load_weights(const std::filesystem::path& path);

}  // namespace asvae
