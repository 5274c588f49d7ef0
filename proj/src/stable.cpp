#include "asvae/stable.hpp"

#include "asvae/errors.hpp"

#include <algorithm>
#include <utility>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace asvae {

namespace {
constexpr double kPi = std::numbers::pi;
}

AlphaParam::AlphaParam(double alpha) {
  if (!(alpha > 0.0 && alpha <= 2.0)) {
    throw std::invalid_argument("alpha must lie in (0, 2], got " + std::to_string(alpha));
  }
  alpha_ = alpha == 2.0 ? kGaussianSubstitute : alpha;
}

PositiveStableSampler::PositiveStableSampler(double a, double scale) : a_(a), scale_(scale) {
  if (!(a > 0.0 && a < 1.0)) {
    throw std::invalid_argument("positive stable exponent must lie in (0, 1), got " +
                                std::to_string(a));
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("positive stable scale must be positive, got " +
                                std::to_string(scale));
  }
  inv_a_ = 1.0 / a;
  tail_power_ = (1.0 - a) / a;
  // beta = 1: the CMS skew shift a*B equals pi a / 2 and the amplitude
  // factor (1 + tan^2(pi a / 2))^(1 / 2a) equals cos(pi a / 2)^(-1/a).
  log_prefactor_ = std::log(scale) - std::log(std::cos(kPi * a / 2.0)) * inv_a_;
}

double PositiveStableSampler::operator()(RngStream& rng) const {
  const double v = kPi * (rng.uniform() - 0.5);
  const double w = rng.exponential();
  const double shifted = a_ * (v + kPi / 2.0);
  const double log_x = log_prefactor_ + std::log(std::sin(shifted)) -
                       inv_a_ * std::log(std::cos(v)) +
                       tail_power_ * (std::log(std::cos(v - shifted)) - std::log(w));
  constexpr double kLogMin = -708.0;
  constexpr double kLogMax = 709.0;
  return std::exp(std::clamp(log_x, kLogMin, kLogMax));
}

double PositiveStableSampler::laplace_transform(double s) const {
  return std::exp(-std::pow(scale_, a_) * std::pow(s, a_) / std::cos(kPi * a_ / 2.0));
}

double sample_positive_stable(double a, double scale, RngStream& rng) {
  return PositiveStableSampler(a, scale)(rng);
}

double impulse_scale(AlphaParam alpha) {
  const double a = alpha.value();
  return 2.0 * std::pow(std::cos(kPi * a / 4.0), 2.0 / a);
}

PositiveStableSampler impulse_sampler(AlphaParam alpha) {
  return PositiveStableSampler(alpha.value() / 2.0, impulse_scale(alpha));
}

double sample_impulse(AlphaParam alpha, RngStream& rng) { return impulse_sampler(alpha)(rng); }

std::complex<double> sample_sas_complex(AlphaParam alpha, double sigma, RngStream& rng) {
  if (!(sigma > 0.0)) throw std::invalid_argument("sample_sas_complex: sigma must be positive");
  const double phi = sample_impulse(alpha, rng);
  const double sd = sigma * std::sqrt(0.5);
  const double re = rng.normal() * sd;
  const double im = rng.normal() * sd;
  return std::sqrt(phi) * std::complex<double>(re, im);
}

std::complex<double> empirical_cf(std::span<const double> samples, double t) {
  if (samples.empty()) throw std::invalid_argument("empirical_cf: empty sample");
  double re = 0.0;
  double im = 0.0;
  for (double x : samples) {
    re += std::cos(t * x);
    im += std::sin(t * x);
  }
  const double m = static_cast<double>(samples.size());
  return {re / m, im / m};
}

double hill_tail_index(std::span<const double> values, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction < 1.0)) {
    throw std::invalid_argument("hill_tail_index: top_fraction must lie in (0, 1)");
  }
  const auto k = static_cast<std::size_t>(std::floor(top_fraction * static_cast<double>(values.size())));
  if (k < 2) throw std::invalid_argument("hill_tail_index: too few samples for the requested fraction");
  std::vector<double> sorted(values.begin(), values.end());
  // Largest k+1 values, descending.
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k + 1), sorted.end(),
                    std::greater<>());
  const double threshold = sorted[k];
  if (!(threshold > 0.0)) throw std::invalid_argument("hill_tail_index: non-positive order statistic");
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) sum += std::log(sorted[i] / threshold);
  return static_cast<double>(k) / sum;
}

namespace {

// Hill estimates of 1/alpha at k and 2k, from the 2k+1 largest values.
std::pair<double, double> hill_gamma_pair(std::span<const double> values, std::size_t k) {
  std::vector<double> sorted(values.begin(), values.end());
  const std::size_t top = 2 * k + 1;
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(top), sorted.end(),
                    std::greater<>());
  if (!(sorted[2 * k] > 0.0)) throw std::invalid_argument("tail_index_estimate: non-positive order statistic");
  double log_sum_k = 0.0;
  double log_sum_2k = 0.0;
  for (std::size_t i = 0; i < 2 * k; ++i) {
    const double lv = std::log(sorted[i]);
    if (i < k) log_sum_k += lv;
    log_sum_2k += lv;
  }
  const double gamma_k = log_sum_k / static_cast<double>(k) - std::log(sorted[k]);
  const double gamma_2k = log_sum_2k / static_cast<double>(2 * k) - std::log(sorted[2 * k]);
  return {gamma_k, gamma_2k};
}

}  // namespace

double tail_index_estimate(std::span<const double> values, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction < 0.5)) {
    throw std::invalid_argument("tail_index_estimate: top_fraction must lie in (0, 0.5)");
  }
  const auto k = static_cast<std::size_t>(std::floor(top_fraction * static_cast<double>(values.size())));
  if (k < 2) throw std::invalid_argument("tail_index_estimate: too few samples for the requested fraction");
  const auto [gamma_k, gamma_2k] = hill_gamma_pair(values, k);
  const double gamma = 2.0 * gamma_k - gamma_2k;
  if (!(gamma > 0.0)) throw NumericalError("tail_index_estimate: non-positive corrected Hill estimate");
  return 1.0 / gamma;
}

double excess_kurtosis(std::span<const double> values) {
  if (values.size() < 2) throw std::invalid_argument("excess_kurtosis: need at least two samples");
  double mean = 0.0;
  for (double x : values) mean += x;
  mean /= static_cast<double>(values.size());
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : values) {
    const double d2 = (x - mean) * (x - mean);
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= static_cast<double>(values.size());
  m4 /= static_cast<double>(values.size());
  if (!(m2 > 0.0)) return 0.0;
  return m4 / (m2 * m2) - 3.0;
}

}  // namespace asvae
