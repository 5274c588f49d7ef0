#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "asvae/errors.hpp"
#include "asvae/vae.hpp"

namespace asvae {

namespace {

// Stream ids under TrainConfig::seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kValidationStream = 3;

void shuffle(std::vector<Eigen::Index>& idx, RngStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& data, const std::vector<Eigen::Index>& idx,
                       std::size_t begin, std::size_t end) {
  Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(end - begin));
  for (std::size_t i = begin; i < end; ++i) out.col(static_cast<Eigen::Index>(i - begin)) = data.col(idx[i]);
  return out;
}

class Adam {
 public:
  Adam(const TrainConfig& cfg, VaeDims dims)
      : cfg_(cfg), m_(VaeParams::zeros(dims)), v_(VaeParams::zeros(dims)) {}

  // Ascent step: params += lr * m_hat / (sqrt(v_hat) + eps).
  void step(VaeParams& params, const VaeParams& grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    auto p = params.tensors();
    auto g = grad.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
      auto gm = g[i].map().array();
      auto mm = m[i].map().array();
      auto vm = v[i].map().array();
      mm = cfg_.beta1 * mm + (1.0 - cfg_.beta1) * gm;
      vm = cfg_.beta2 * vm + (1.0 - cfg_.beta2) * gm.square();
      p[i].map().array() += cfg_.learning_rate * (mm / c1) / ((vm / c2).sqrt() + cfg_.adam_eps);
    }
  }

 private:
  const TrainConfig& cfg_;
  VaeParams m_;
  VaeParams v_;
  int t_ = 0;
};

}  // namespace

void TrainConfig::validate() const {
  if (latent_dim <= 0 || hidden_dim <= 0) throw std::invalid_argument("train: dimensions must be positive");
  if (!(learning_rate > 0.0) || !(adam_eps > 0.0)) {
    throw std::invalid_argument("train: learning_rate and adam_eps must be positive");
  }
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train: Adam decay rates must lie in (0, 1)");
  }
  if (batch_size <= 0 || max_epochs <= 0 || patience <= 0) {
    throw std::invalid_argument("train: batch_size, max_epochs and patience must be positive");
  }
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("train: validation_fraction must lie in (0, 1)");
  }
}

TrainResult train(const Eigen::MatrixXd& dataset, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  const Eigen::Index total = dataset.cols();
  if (total < 10 * static_cast<Eigen::Index>(cfg.batch_size)) {
    throw std::invalid_argument("train: dataset has " + std::to_string(total) +
                                " frames, need at least 10 * batch_size = " +
                                std::to_string(10 * cfg.batch_size));
  }
  if ((dataset.array() < 0.0).any() || !dataset.allFinite()) {
    throw std::invalid_argument("train: dataset must hold finite non-negative power spectra");
  }

  const VaeDims dims{static_cast<int>(dataset.rows()), cfg.latent_dim, cfg.hidden_dim};
  RngStream init_rng(cfg.seed, kInitStream);
  RngStream shuffle_rng(cfg.seed, kShuffleStream);
  RngStream noise_rng(cfg.seed, kNoiseStream);

  VaeParams params = VaeParams::glorot_uniform(dims, init_rng);
  params.validate();

  std::vector<Eigen::Index> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  shuffle(order, shuffle_rng);
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(total))));
  const std::size_t n_train = order.size() - n_val;
  std::vector<Eigen::Index> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  const Eigen::MatrixXd validation = gather(dataset, order, n_train, order.size());

  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  auto validation_elbo = [&](const VaeParams& p) {
    RngStream rng(cfg.seed, kValidationStream);
    double sum = 0.0;
    for (Eigen::Index start = 0; start < validation.cols(); start += cfg.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(cfg.batch_size, validation.cols() - start);
      sum += elbo(p, validation.middleCols(start, len), rng);
    }
    return sum / static_cast<double>(validation.cols());
  };

  Adam adam(cfg, dims);
  TrainResult result{params, {}};
  double best = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(train_idx, shuffle_rng);
    double train_sum = 0.0;
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t end = std::min(n_train, start + batch);
      const Eigen::MatrixXd x = gather(dataset, train_idx, start, end);
      ElboGradient eg = elbo_grad(params, x, noise_rng);
      if (!std::isfinite(eg.value)) {
        throw NumericalError("train: non-finite ELBO at epoch " + std::to_string(epoch));
      }
      train_sum += eg.value;
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (const TensorRef& t : eg.grad.tensors()) t.map() *= inv_b;
      apply_freeze_mask(eg.grad, cfg.frozen);
      adam.step(params, eg.grad);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_elbo = train_sum / static_cast<double>(n_train);
    rec.validation_elbo = validation_elbo(params);
    if (!std::isfinite(rec.validation_elbo)) {
      throw NumericalError("train: non-finite validation ELBO at epoch " + std::to_string(epoch));
    }
    if (rec.validation_elbo > best) {
      best = rec.validation_elbo;
      result.params = params;
      result.log.best_epoch = epoch;
    }
    rec.best_validation_elbo = best;
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (epoch - result.log.best_epoch >= cfg.patience) {
      result.log.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace asvae
