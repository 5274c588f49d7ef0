#include "asvae/mcem.hpp"

#include <cmath>
#include <exception>
#include <stdexcept>
#include <string>

#include "asvae/errors.hpp"

namespace asvae {

namespace {

// Frames decoded per batch. Fixed so the arithmetic does not depend on the
// number of worker threads.
constexpr Eigen::Index kDecodeChunk = 32;

// Collects the first exception thrown per frame inside a parallel loop and
// rethrows the lowest-index one afterwards.
class FrameErrors {
 public:
  explicit FrameErrors(Eigen::Index n) : errors_(static_cast<std::size_t>(n)) {}
  template <class Fn>
  void run(Eigen::Index n, Fn&& fn) {
    try {
      fn();
    } catch (...) {
      errors_[static_cast<std::size_t>(n)] = std::current_exception();
    }
  }
  void rethrow() const {
    for (const auto& e : errors_) {
      if (e) std::rethrow_exception(e);
    }
  }

 private:
  std::vector<std::exception_ptr> errors_;
};

Eigen::MatrixXd decode_chunked(const SpeechModel& model, const Eigen::MatrixXd& h) {
  const Eigen::Index n = h.cols();
  Eigen::MatrixXd out(model.freq_bins(), n);
  const Eigen::Index chunks = (n + kDecodeChunk - 1) / kDecodeChunk;
  FrameErrors errors(chunks);
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    errors.run(c, [&] {
      const Eigen::Index start = c * kDecodeChunk;
      const Eigen::Index len = std::min(kDecodeChunk, n - start);
      out.middleCols(start, len) = model.variance(h.middleCols(start, len));
    });
  }
  errors.rethrow();
  return out;
}

void check_dims(const Eigen::MatrixXcd& x, const SpeechModel& model, const SamplerState& state) {
  if (x.rows() != model.freq_bins()) {
    throw std::invalid_argument("mixture has F = " + std::to_string(x.rows()) +
                                " but the speech model has F = " +
                                std::to_string(model.freq_bins()));
  }
  if (state.h.rows() != model.latent_dim() || state.h.cols() != x.cols() ||
      state.phi.rows() != x.rows() || state.phi.cols() != x.cols() ||
      state.speech_var.rows() != x.rows() || state.speech_var.cols() != x.cols() ||
      static_cast<Eigen::Index>(state.frame_rngs.size()) != x.cols()) {
    throw std::invalid_argument("sampler state dimensions do not match the mixture");
  }
}

inline double neg_log_lik(double abs2_x, double v) { return std::log(v) + abs2_x / v; }

[[noreturn]] void throw_degenerate(Eigen::Index f, Eigen::Index n) {
  throw DegenerateModelError("mixture variance vanished at bin (f=" + std::to_string(f) +
                             ", n=" + std::to_string(n) + ")");
}

}  // namespace

VaeSpeechModel::VaeSpeechModel(VaeParams params) : params_(std::move(params)) {
  params_.validate();
}

Eigen::MatrixXd VaeSpeechModel::variance(const Eigen::MatrixXd& h) const {
  return decode_batch(params_, h);
}

Eigen::MatrixXd VaeSpeechModel::initial_latent(const Eigen::MatrixXd& power) const {
  return encode_batch(params_, power).mu;
}

ConstantSpeechModel::ConstantSpeechModel(Eigen::VectorXd variance, int latent_dim)
    : variance_(std::move(variance)), latent_dim_(latent_dim) {
  if (variance_.size() == 0 || latent_dim_ <= 0) {
    throw std::invalid_argument("ConstantSpeechModel: empty variance or latent_dim");
  }
  if ((variance_.array() < 0.0).any()) {
    throw std::invalid_argument("ConstantSpeechModel: negative variance");
  }
}

Eigen::MatrixXd ConstantSpeechModel::variance(const Eigen::MatrixXd& h) const {
  return variance_.replicate(1, h.cols());
}

Eigen::MatrixXd ConstantSpeechModel::initial_latent(const Eigen::MatrixXd& power) const {
  return Eigen::MatrixXd::Zero(latent_dim_, power.cols());
}

void UnsupervisedParams::validate(Eigen::Index freq_bins, Eigen::Index frames) const {
  if (noise.sigma_b2.size() != freq_bins || gain.size() != frames) {
    throw std::invalid_argument("unsupervised parameters: expected " + std::to_string(freq_bins) +
                                " noise scales and " + std::to_string(frames) + " gains");
  }
  if ((noise.sigma_b2.array() < 0.0).any() || (gain.array() < 0.0).any()) {
    throw std::invalid_argument("unsupervised parameters must be non-negative");
  }
}

bool operator==(const SamplerState& a, const SamplerState& b) {
  auto same = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    return p.rows() == q.rows() && p.cols() == q.cols() && p == q;
  };
  return same(a.h, b.h) && same(a.phi, b.phi) && same(a.speech_var, b.speech_var) &&
         a.eps2 == b.eps2 && a.frame_rngs == b.frame_rngs;
}

SamplerState init_sampler_state(const Eigen::MatrixXcd& x, const SpeechModel& model,
                                AlphaParam alpha, double eps2, std::uint64_t seed) {
  if (!(eps2 > 0.0)) throw std::invalid_argument("eps2 must be positive");
  if (x.rows() != model.freq_bins()) {
    throw std::invalid_argument("mixture has F = " + std::to_string(x.rows()) +
                                " but the speech model has F = " +
                                std::to_string(model.freq_bins()));
  }
  SamplerState s;
  s.eps2 = eps2;
  s.h = model.initial_latent(x.cwiseAbs2());
  s.speech_var = decode_chunked(model, s.h);
  s.phi.resize(x.rows(), x.cols());
  s.frame_rngs.reserve(static_cast<std::size_t>(x.cols()));
  const PositiveStableSampler prior = impulse_sampler(alpha);
  for (Eigen::Index n = 0; n < x.cols(); ++n) {
    s.frame_rngs.emplace_back(seed, static_cast<std::uint64_t>(n));
    RngStream& rng = s.frame_rngs.back();
    for (Eigen::Index f = 0; f < x.rows(); ++f) s.phi(f, n) = prior(rng);
  }
  return s;
}

double mixture_likelihood_var(double gain, double speech_var, double phi, double sigma_b2) {
  if (gain < 0.0 || speech_var < 0.0 || phi < 0.0 || sigma_b2 < 0.0) {
    throw std::invalid_argument("mixture_likelihood_var: negative input");
  }
  const double v = gain * speech_var + phi * sigma_b2;
  if (!(v > 0.0)) throw DegenerateModelError("mixture variance is zero (speech and noise both vanished)");
  return v;
}

double h_log_acceptance_ratio(const Eigen::VectorXd& h_new, const Eigen::VectorXd& h_prev,
                              const Eigen::VectorXcd& x_col, const Eigen::VectorXd& v_new,
                              const Eigen::VectorXd& v_prev) {
  double log_r = 0.5 * (h_prev.squaredNorm() - h_new.squaredNorm());
  for (Eigen::Index f = 0; f < x_col.size(); ++f) {
    const double a2 = std::norm(x_col(f));
    log_r += neg_log_lik(a2, v_prev(f)) - neg_log_lik(a2, v_new(f));
  }
  return log_r;
}

double accept_prob_h(const Eigen::VectorXd& h_new, const Eigen::VectorXd& h_prev,
                     const Eigen::VectorXd& phi_col, const Eigen::VectorXcd& x_col,
                     const SpeechModel& model, const UnsupervisedParams& params,
                     Eigen::Index frame) {
  if (h_new.size() != model.latent_dim() || h_prev.size() != model.latent_dim() ||
      phi_col.size() != model.freq_bins() || x_col.size() != model.freq_bins()) {
    throw std::invalid_argument("accept_prob_h: dimension mismatch");
  }
  Eigen::MatrixXd both(h_new.size(), 2);
  both.col(0) = h_new;
  both.col(1) = h_prev;
  const Eigen::MatrixXd s2 = model.variance(both);
  const double g = params.gain(frame);
  Eigen::VectorXd v_new(x_col.size());
  Eigen::VectorXd v_prev(x_col.size());
  for (Eigen::Index f = 0; f < x_col.size(); ++f) {
    const double b2 = params.noise.sigma_b2(f);
    v_new(f) = mixture_likelihood_var(g, s2(f, 0), phi_col(f), b2);
    v_prev(f) = mixture_likelihood_var(g, s2(f, 1), phi_col(f), b2);
  }
  const double log_r = h_log_acceptance_ratio(h_new, h_prev, x_col, v_new, v_prev);
  if (std::isnan(log_r)) {
    throw NumericalError("accept_prob_h: non-finite log ratio at frame " + std::to_string(frame));
  }
  return log_r >= 0.0 ? 1.0 : std::exp(log_r);
}

double phi_log_acceptance_ratio(double abs2_x, double v_new, double v_prev) {
  return neg_log_lik(abs2_x, v_prev) - neg_log_lik(abs2_x, v_new);
}

double accept_prob_phi(double phi_new, double phi_prev, std::complex<double> x, double speech_var,
                       double gain, double sigma_b2) {
  const double v_new = mixture_likelihood_var(gain, speech_var, phi_new, sigma_b2);
  const double v_prev = mixture_likelihood_var(gain, speech_var, phi_prev, sigma_b2);
  const double log_r = phi_log_acceptance_ratio(std::norm(x), v_new, v_prev);
  if (std::isnan(log_r)) throw NumericalError("accept_prob_phi: non-finite log ratio");
  return log_r >= 0.0 ? 1.0 : std::exp(log_r);
}

SweepStats gibbs_sweep(SamplerState& state, const Eigen::MatrixXcd& x, const SpeechModel& model,
                       const UnsupervisedParams& params, const ProposalHooks& hooks) {
  check_dims(x, model, state);
  params.validate(x.rows(), x.cols());
  const Eigen::Index n_bins = x.rows();
  const Eigen::Index n_frames = x.cols();
  const Eigen::Index latent = state.h.rows();
  const double step = std::sqrt(state.eps2);
  const PositiveStableSampler prior = impulse_sampler(params.noise.alpha);
  const Eigen::VectorXd& b2 = params.noise.sigma_b2;

  // Random-walk proposals, drawn per frame from the frame's own stream.
  Eigen::MatrixXd h_prop = state.h;
  if (!hooks.freeze_h) {
    for (Eigen::Index n = 0; n < n_frames; ++n) {
      RngStream& rng = state.frame_rngs[static_cast<std::size_t>(n)];
      for (Eigen::Index l = 0; l < latent; ++l) h_prop(l, n) += step * rng.normal();
    }
  }
  const Eigen::MatrixXd s2_prop = decode_chunked(model, h_prop);

  std::vector<char> h_taken(static_cast<std::size_t>(n_frames), 0);
  std::vector<Eigen::Index> phi_taken(static_cast<std::size_t>(n_frames), 0);
  FrameErrors errors(n_frames);

#pragma omp parallel for schedule(static)
  for (Eigen::Index n = 0; n < n_frames; ++n) {
    errors.run(n, [&] {
      RngStream& rng = state.frame_rngs[static_cast<std::size_t>(n)];
      const double g = params.gain(n);

      double log_r = 0.5 * (state.h.col(n).squaredNorm() - h_prop.col(n).squaredNorm());
      for (Eigen::Index f = 0; f < n_bins; ++f) {
        const double a2 = std::norm(x(f, n));
        const double noise = state.phi(f, n) * b2(f);
        const double v_new = g * s2_prop(f, n) + noise;
        const double v_old = g * state.speech_var(f, n) + noise;
        if (!(v_new > 0.0) || !(v_old > 0.0)) throw_degenerate(f, n);
        log_r += neg_log_lik(a2, v_old) - neg_log_lik(a2, v_new);
      }
      if (std::isnan(log_r)) {
        throw NumericalError("gibbs_sweep: non-finite h log acceptance ratio at frame " +
                             std::to_string(n));
      }
      const double accept_h = log_r >= 0.0 ? 1.0 : std::exp(log_r);
      if (accept_h > rng.uniform()) {
        state.h.col(n) = h_prop.col(n);
        state.speech_var.col(n) = s2_prop.col(n);
        h_taken[static_cast<std::size_t>(n)] = 1;
      }

      Eigen::Index taken = 0;
      for (Eigen::Index f = 0; f < n_bins; ++f) {
        const double phi_old = state.phi(f, n);
        const double phi_new = hooks.freeze_phi ? phi_old : prior(rng);
        const double a2 = std::norm(x(f, n));
        const double speech = g * state.speech_var(f, n);
        const double v_new = speech + phi_new * b2(f);
        const double v_old = speech + phi_old * b2(f);
        if (!(v_new > 0.0) || !(v_old > 0.0)) throw_degenerate(f, n);
        const double lr = neg_log_lik(a2, v_old) - neg_log_lik(a2, v_new);
        if (std::isnan(lr)) {
          throw NumericalError("gibbs_sweep: non-finite phi log acceptance ratio at bin (f=" +
                               std::to_string(f) + ", n=" + std::to_string(n) + ")");
        }
        const double accept_phi = lr >= 0.0 ? 1.0 : std::exp(lr);
        if (accept_phi > rng.uniform()) {
          state.phi(f, n) = phi_new;
          ++taken;
        }
      }
      phi_taken[static_cast<std::size_t>(n)] = taken;
    });
  }
  errors.rethrow();

  SweepStats stats;
  double h_count = 0.0;
  double phi_count = 0.0;
  for (Eigen::Index n = 0; n < n_frames; ++n) {
    h_count += h_taken[static_cast<std::size_t>(n)];
    phi_count += static_cast<double>(phi_taken[static_cast<std::size_t>(n)]);
  }
  if (n_frames > 0) {
    stats.h_acceptance = h_count / static_cast<double>(n_frames);
    stats.phi_acceptance = phi_count / static_cast<double>(n_frames * n_bins);
  }
  return stats;
}

EStepResult run_e_step(const Eigen::MatrixXcd& x, const SpeechModel& model,
                       const UnsupervisedParams& params, SamplerState& state, int gibbs_iters,
                       int burn_in, const ProposalHooks& hooks) {
  if (gibbs_iters <= 0 || burn_in < 0 || burn_in >= gibbs_iters) {
    throw std::invalid_argument("run_e_step: need 0 <= burn_in < gibbs_iters, got burn_in " +
                                std::to_string(burn_in) + ", gibbs_iters " +
                                std::to_string(gibbs_iters));
  }
  EStepResult out;
  out.samples.draws.reserve(static_cast<std::size_t>(gibbs_iters - burn_in));
  for (int m = 1; m <= gibbs_iters; ++m) {
    const SweepStats s = gibbs_sweep(state, x, model, params, hooks);
    out.mean_stats.h_acceptance += s.h_acceptance / gibbs_iters;
    out.mean_stats.phi_acceptance += s.phi_acceptance / gibbs_iters;
    if (m > burn_in) out.samples.draws.push_back({state.h, state.phi, state.speech_var});
  }
  return out;
}

double q_tilde(const UnsupervisedParams& params, const PosteriorSamples& samples,
               const Eigen::MatrixXcd& x) {
  if (samples.size() == 0) throw std::invalid_argument("q_tilde: no posterior samples");
  params.validate(x.rows(), x.cols());
  double total = 0.0;
  for (const PosteriorDraw& d : samples.draws) {
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      const double g = params.gain(n);
      for (Eigen::Index f = 0; f < x.rows(); ++f) {
        const double v = g * d.speech_var(f, n) + d.phi(f, n) * params.noise.sigma_b2(f);
        if (!(v > 0.0)) throw_degenerate(f, n);
        total += neg_log_lik(std::norm(x(f, n)), v);
      }
    }
  }
  return -total / static_cast<double>(samples.size());
}

MStepResult m_step(const UnsupervisedParams& params, const PosteriorSamples& samples,
                   const Eigen::MatrixXcd& x, int inner_iters) {
  if (samples.size() == 0) throw std::invalid_argument("m_step: no posterior samples");
  if (inner_iters < 0) throw std::invalid_argument("m_step: negative inner_iters");
  params.validate(x.rows(), x.cols());
  const Eigen::Index n_bins = x.rows();
  const Eigen::Index n_frames = x.cols();
  const Eigen::MatrixXd power = x.cwiseAbs2();

  MStepResult out{params, 0};
  Eigen::VectorXd& b2 = out.params.noise.sigma_b2;
  Eigen::VectorXd& g = out.params.gain;
  Eigen::VectorXd num;
  Eigen::VectorXd den;

  for (int it = 0; it < inner_iters; ++it) {
    // Noise scales.
    num.setZero(n_bins);
    den.setZero(n_bins);
    for (const PosteriorDraw& d : samples.draws) {
      for (Eigen::Index n = 0; n < n_frames; ++n) {
        for (Eigen::Index f = 0; f < n_bins; ++f) {
          const double phi = d.phi(f, n);
          const double v = g(n) * d.speech_var(f, n) + phi * b2(f);
          if (!(v > 0.0)) throw_degenerate(f, n);
          const double inv_v = 1.0 / v;
          num(f) += power(f, n) * phi * inv_v * inv_v;
          den(f) += phi * inv_v;
        }
      }
    }
    for (Eigen::Index f = 0; f < n_bins; ++f) {
      if (den(f) > 0.0 && std::isfinite(den(f))) {
        b2(f) *= std::sqrt(num(f) / den(f));
      } else {
        ++out.skipped_updates;
      }
    }

    // Gains, with v recomputed from the new noise scales.
    num.setZero(n_frames);
    den.setZero(n_frames);
    for (const PosteriorDraw& d : samples.draws) {
      for (Eigen::Index n = 0; n < n_frames; ++n) {
        for (Eigen::Index f = 0; f < n_bins; ++f) {
          const double s2 = d.speech_var(f, n);
          const double v = g(n) * s2 + d.phi(f, n) * b2(f);
          if (!(v > 0.0)) throw_degenerate(f, n);
          const double inv_v = 1.0 / v;
          num(n) += power(f, n) * s2 * inv_v * inv_v;
          den(n) += s2 * inv_v;
        }
      }
    }
    for (Eigen::Index n = 0; n < n_frames; ++n) {
      if (den(n) > 0.0 && std::isfinite(den(n))) {
        g(n) *= std::sqrt(num(n) / den(n));
      } else {
        ++out.skipped_updates;
      }
    }
  }
  return out;
}

void McemConfig::validate() const {
  (void)AlphaParam(alpha);
  if (n_iters < 0) throw std::invalid_argument("mcem: n_iters must be non-negative");
  if (gibbs_iters <= 0 || burn_in < 0 || burn_in >= gibbs_iters) {
    throw std::invalid_argument("mcem: need 0 <= burn_in < gibbs_iters");
  }
  if (recon_iters <= 0 || recon_burn_in < 0 || recon_burn_in >= recon_iters) {
    throw std::invalid_argument("mcem: need 0 <= recon_burn_in < recon_iters");
  }
  if (!(eps2 > 0.0)) throw std::invalid_argument("mcem: eps2 must be positive");
  if (mstep_inner_iters < 1) throw std::invalid_argument("mcem: mstep_inner_iters must be >= 1");
}

McemResult mcem_run(const Eigen::MatrixXcd& x, const SpeechModel& model, const McemConfig& cfg,
                    const McemObserver& observer) {
  cfg.validate();
  if (x.size() == 0 || x.cwiseAbs2().maxCoeff() == 0.0) {
    throw std::invalid_argument("mcem_run: mixture is empty or all zero");
  }
  const AlphaParam alpha(cfg.alpha);
  McemResult out;
  out.params.noise.alpha = alpha;
  out.params.noise.sigma_b2 = Eigen::VectorXd::Constant(x.rows(), cfg.zero_noise ? 0.0 : 1.0);
  out.params.gain = Eigen::VectorXd::Ones(x.cols());
  out.state = init_sampler_state(x, model, alpha, cfg.eps2, cfg.seed);

  for (int it = 1; it <= cfg.n_iters; ++it) {
    if (observer) observer(McemEvent::EStepBegin, it, out.state);
    const EStepResult e = run_e_step(x, model, out.params, out.state, cfg.gibbs_iters, cfg.burn_in);
    MStepResult m = m_step(out.params, e.samples, x, cfg.mstep_inner_iters);
    if (!m.params.noise.sigma_b2.allFinite() || !m.params.gain.allFinite()) {
      throw NumericalError("mcem: non-finite parameter at iteration " + std::to_string(it));
    }
    out.params = std::move(m.params);

    IterationLog rec;
    rec.iteration = it;
    rec.neg_q = -q_tilde(out.params, e.samples, x);
    rec.h_acceptance = e.mean_stats.h_acceptance;
    rec.phi_acceptance = e.mean_stats.phi_acceptance;
    rec.sigma_b2_norm = out.params.noise.sigma_b2.norm();
    rec.gain_norm = out.params.gain.norm();
    rec.skipped_updates = m.skipped_updates;
    out.log.push_back(rec);
    if (observer) observer(McemEvent::IterationEnd, it, out.state);
  }
  return out;
}

Eigen::MatrixXcd reconstruct(const Eigen::MatrixXcd& x, const SpeechModel& model,
                             const UnsupervisedParams& params, SamplerState& state,
                             int recon_iters, int recon_burn_in, const ProposalHooks& hooks) {
  if (recon_iters <= 0 || recon_burn_in < 0 || recon_burn_in >= recon_iters) {
    throw std::invalid_argument("reconstruct: need 0 <= recon_burn_in < recon_iters");
  }
  check_dims(x, model, state);
  const Eigen::VectorXd& b2 = params.noise.sigma_b2;
  Eigen::MatrixXd gain_sum = Eigen::MatrixXd::Zero(x.rows(), x.cols());
  for (int m = 1; m <= recon_iters; ++m) {
    gibbs_sweep(state, x, model, params, hooks);
    if (m <= recon_burn_in) continue;
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      const double g = params.gain(n);
      for (Eigen::Index f = 0; f < x.rows(); ++f) {
        const double speech = g * state.speech_var(f, n);
        const double v = speech + state.phi(f, n) * b2(f);
        if (!(v > 0.0)) throw_degenerate(f, n);
        gain_sum(f, n) += speech / v;
      }
    }
  }
  const double inv_r = 1.0 / static_cast<double>(recon_iters - recon_burn_in);
  return (gain_sum * inv_r).cast<std::complex<double>>().cwiseProduct(x);
}

EnhanceResult enhance(const Waveform& noisy, const SpeechModel& model, const McemConfig& cfg,
                      int win_length) {
  const int win = win_length > 0 ? win_length : default_win_length(noisy.sample_rate);
  ComplexSpectrogram spec = stft(noisy, win);
  if (spec.freq_bins() != model.freq_bins()) {
    throw std::invalid_argument("weights have F = " + std::to_string(model.freq_bins()) +
                                " but the input STFT has F = " +
                                std::to_string(spec.freq_bins()));
  }
  EnhanceResult out;
  out.mcem = mcem_run(spec.values, model, cfg);
  spec.values = reconstruct(spec.values, model, out.mcem.params, out.mcem.state, cfg.recon_iters,
                            cfg.recon_burn_in);
  out.enhanced = istft(spec);
  return out;
}

}  // namespace asvae
