#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "asvae/rng.hpp"
#include "asvae/stable.hpp"
#include "asvae/stft.hpp"
#include "asvae/vae.hpp"

namespace asvae {

// Speech variance model seen by the inference engine.
class SpeechModel {
 public:
  virtual ~SpeechModel() = default;
  virtual int freq_bins() const = 0;
  virtual int latent_dim() const = 0;
  // sigma_s^2(h) for every column of an L x B latent matrix (F x B result).
  virtual Eigen::MatrixXd variance(const Eigen::MatrixXd& h) const = 0;
  // Starting latent vectors for the sampler, from F x N power spectra.
  virtual Eigen::MatrixXd initial_latent(const Eigen::MatrixXd& power) const = 0;
};

// The trained generative network; chains start at the encoder mean.
class VaeSpeechModel final : public SpeechModel {
 public:
  explicit VaeSpeechModel(VaeParams params);
  int freq_bins() const override { return params_.dims.freq_bins; }
  int latent_dim() const override { return params_.dims.latent_dim; }
  Eigen::MatrixXd variance(const Eigen::MatrixXd& h) const override;
  Eigen::MatrixXd initial_latent(const Eigen::MatrixXd& power) const override;
  const VaeParams& params() const { return params_; }

 private:
  VaeParams params_;
};

// h-independent speech variance. Used to check the sampler against a target
// whose h-posterior is the N(0, I) prior.
class ConstantSpeechModel final : public SpeechModel {
 public:
  ConstantSpeechModel(Eigen::VectorXd variance, int latent_dim);
  int freq_bins() const override { return static_cast<int>(variance_.size()); }
  int latent_dim() const override { return latent_dim_; }
  Eigen::MatrixXd variance(const Eigen::MatrixXd& h) const override;
  Eigen::MatrixXd initial_latent(const Eigen::MatrixXd& power) const override;

 private:
  Eigen::VectorXd variance_;
  int latent_dim_;
};

struct NoiseParams {
  AlphaParam alpha{1.8};
  Eigen::VectorXd sigma_b2;  // per-frequency noise scale^2, F
};

// Parameters estimated at test time: noise scales and per-frame gains.
struct UnsupervisedParams {
  NoiseParams noise;
  Eigen::VectorXd gain;  // g_n, N

  void validate(Eigen::Index freq_bins, Eigen::Index frames) const;
};

// Current state of the Metropolis-within-Gibbs chains. Each frame owns an RNG
// stream keyed by (seed, frame index), so frames can be swept in any order
// or in parallel with identical results.
struct SamplerState {
  Eigen::MatrixXd h;           // L x N
  Eigen::MatrixXd phi;         // F x N, impulse variables
  Eigen::MatrixXd speech_var;  // F x N, sigma_s^2(h) for the current h
  double eps2 = 0.01;          // random-walk proposal variance for h
  std::vector<RngStream> frame_rngs;

  // Exact equality of every chain value and RNG state.
  friend bool operator==(const SamplerState& a, const SamplerState& b);
};

// h from the model's initial_latent of |x|^2, phi from one prior draw per bin.
SamplerState init_sampler_state(const Eigen::MatrixXcd& x, const SpeechModel& model,
                                AlphaParam alpha, double eps2, std::uint64_t seed);

struct PosteriorDraw {
  Eigen::MatrixXd h;
  Eigen::MatrixXd phi;
  Eigen::MatrixXd speech_var;
};

struct PosteriorSamples {
  std::vector<PosteriorDraw> draws;
  std::size_t size() const { return draws.size(); }
};

struct SweepStats {
  double h_acceptance = 0.0;    // fraction of frames whose h proposal was taken
  double phi_acceptance = 0.0;  // fraction of bins whose phi proposal was taken
};

// Test hooks: replace a proposal by the current value.
struct ProposalHooks {
  bool freeze_h = false;
  bool freeze_phi = false;
};

// v = g sigma_s^2 + phi sigma_b^2. Throws DegenerateModelError when v == 0.
double mixture_likelihood_var(double gain, double speech_var, double phi, double sigma_b2);

// Log of the h acceptance ratio for one frame, given the mixture variances
// under the proposed and current latent vectors.
double h_log_acceptance_ratio(const Eigen::VectorXd& h_new, const Eigen::VectorXd& h_prev,
                              const Eigen::VectorXcd& x_col, const Eigen::VectorXd& v_new,
                              const Eigen::VectorXd& v_prev);

// min(1, p(h~) prod_f p(x_fn | h~, phi) / (p(h) prod_f p(x_fn | h, phi))).
double accept_prob_h(const Eigen::VectorXd& h_new, const Eigen::VectorXd& h_prev,
                     const Eigen::VectorXd& phi_col, const Eigen::VectorXcd& x_col,
                     const SpeechModel& model, const UnsupervisedParams& params,
                     Eigen::Index frame);

// Log of p(x | h, phi~) / p(x | h, phi) for one bin.
double phi_log_acceptance_ratio(double abs2_x, double v_new, double v_prev);

// The phi proposal is the prior, so only the likelihood ratio remains.
double accept_prob_phi(double phi_new, double phi_prev, std::complex<double> x, double speech_var,
                       double gain, double sigma_b2);

// One Metropolis-within-Gibbs iteration over every frame: a Gaussian random
// walk step on h_n, then an independence step per bin on phi_fn.
SweepStats gibbs_sweep(SamplerState& state, const Eigen::MatrixXcd& x, const SpeechModel& model,
                       const UnsupervisedParams& params, const ProposalHooks& hooks = {});

struct EStepResult {
  PosteriorSamples samples;  // states burn_in+1 .. gibbs_iters, in order
  SweepStats mean_stats;     // averaged over all sweeps
};

EStepResult run_e_step(const Eigen::MatrixXcd& x, const SpeechModel& model,
                       const UnsupervisedParams& params, SamplerState& state, int gibbs_iters,
                       int burn_in, const ProposalHooks& hooks = {});

// Empirical Q-function, constants dropped:
//   -(1/R) sum_r sum_{f,n} [ln v_fn^(r) + |x_fn|^2 / v_fn^(r)].
double q_tilde(const UnsupervisedParams& params, const PosteriorSamples& samples,
               const Eigen::MatrixXcd& x);

struct MStepResult {
  UnsupervisedParams params;
  int skipped_updates = 0;  // parameters left unchanged by a zero denominator
};

// `inner_iters` passes of the multiplicative majorization-minimization
// updates: sigma_b^2 first, then g with v recomputed in between.
MStepResult m_step(const UnsupervisedParams& params, const PosteriorSamples& samples,
                   const Eigen::MatrixXcd& x, int inner_iters = 1);

struct McemConfig {
  double alpha = 1.8;
  int n_iters = 200;
  int gibbs_iters = 40;
  int burn_in = 30;
  double eps2 = 0.01;
  int mstep_inner_iters = 1;
  int recon_iters = 100;
  int recon_burn_in = 50;
  std::uint64_t seed = 0;
  // Test hook: pin sigma_b^2 to zero (the updates keep it there).
  bool zero_noise = false;

  void validate() const;
};

struct IterationLog {
  int iteration = 0;  // 1-based
  double neg_q = 0.0;  // -q_tilde after the M-step, on this iteration's samples
  double h_acceptance = 0.0;
  double phi_acceptance = 0.0;
  double sigma_b2_norm = 0.0;
  double gain_norm = 0.0;
  int skipped_updates = 0;
};

struct McemResult {
  UnsupervisedParams params;
  SamplerState state;
  std::vector<IterationLog> log;
};

enum class McemEvent { EStepBegin, IterationEnd };
using McemObserver = std::function<void(McemEvent, int iteration, const SamplerState&)>;

// g_n = 1 and sigma_b^2 = 1 initially, then cfg.n_iters rounds of E-step
// (warm-started from the previous chain state) and M-step.
McemResult mcem_run(const Eigen::MatrixXcd& x, const SpeechModel& model, const McemConfig& cfg,
                    const McemObserver& observer = {});

// Posterior-mean estimate of sqrt(g_n) s_fn: Wiener gains averaged over a
// fresh chain run started from `state`.
Eigen::MatrixXcd reconstruct(const Eigen::MatrixXcd& x, const SpeechModel& model,
                             const UnsupervisedParams& params, SamplerState& state,
                             int recon_iters, int recon_burn_in,
                             const ProposalHooks& hooks = {});

struct EnhanceResult {
  Waveform enhanced;
  McemResult mcem;
};

// stft -> mcem_run -> reconstruct -> istft. Throws std::invalid_argument
// when the model's F differs from the input STFT's.
EnhanceResult enhance(const Waveform& noisy, const SpeechModel& model, const McemConfig& cfg,
                      int win_length = 0);

}  // namespace asvae
