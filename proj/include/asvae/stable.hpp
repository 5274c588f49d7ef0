#pragma once

#include <complex>
#include <span>

#include "asvae/rng.hpp"

namespace asvae {

// Characteristic exponent in (0, 2]. A request of exactly 2 is stored as
// 1.999: the positive stable mixing law of exponent alpha/2 degenerates at 1.
class AlphaParam {
 public:
  static constexpr double kGaussianSubstitute = 1.999;

  explicit AlphaParam(double alpha);
  double value() const { return alpha_; }

 private:
  double alpha_;
};

// Totally right-skewed stable law S_a(scale, 1, 0) in the
// Samorodnitsky-Taqqu parametrization, 0 < a < 1. Its Laplace transform is
//   E exp(-s X) = exp(-scale^a s^a / cos(pi a / 2)).
// Drawn with the Chambers-Mallows-Stuck transform of one uniform angle and
// one unit exponential (two uniforms consumed per draw).
class PositiveStableSampler {
 public:
  PositiveStableSampler(double a, double scale);

  double operator()(RngStream& rng) const;

  double exponent() const { return a_; }
  double scale() const { return scale_; }
  // Closed-form Laplace transform, for validation.
  double laplace_transform(double s) const;

 private:
  double a_;
  double scale_;
  double log_prefactor_;  // ln(scale) - ln(cos(pi a / 2)) / a
  double inv_a_;
  double tail_power_;     // (1 - a) / a
};

double sample_positive_stable(double a, double scale, RngStream& rng);

// 2 cos(pi alpha / 4)^(2 / alpha): scale of the impulse variable's law.
double impulse_scale(AlphaParam alpha);

// Sampler for phi ~ P(alpha/2)S(impulse_scale(alpha)).
PositiveStableSampler impulse_sampler(AlphaParam alpha);

double sample_impulse(AlphaParam alpha, RngStream& rng);

// sqrt(phi) * n with phi an impulse draw and n ~ N_c(0, sigma^2). The impulse
// is drawn first, then the real and imaginary Gaussian parts.
std::complex<double> sample_sas_complex(AlphaParam alpha, double sigma, RngStream& rng);

// (1/M) sum_m exp(i t x_m).
std::complex<double> empirical_cf(std::span<const double> samples, double t);

// Hill estimator of the tail exponent from the largest `top_fraction` of the
// (positive) values. Needs at least two order statistics above the threshold.
double hill_tail_index(std::span<const double> values, double top_fraction);

// Second-order corrected Hill estimate: the generalized jackknife
// 1 / (2 gamma(k) - gamma(2k)) with gamma(.) the Hill estimate of 1/alpha at
// k = top_fraction * M and 2k order statistics. Cancels the leading bias term
// of stable-type tails (second-order parameter rho = -1), which the plain Hill
// estimator carries at alpha close to 2.
double tail_index_estimate(std::span<const double> values, double top_fraction = 0.01);

// Sample excess kurtosis m4 / m2^2 - 3 (0 for a Gaussian).
double excess_kurtosis(std::span<const double> values);

}  // namespace asvae
