#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "asvae/rng.hpp"
#include "asvae/stable.hpp"
#include "doctest.h"

using namespace asvae;

namespace {

double ks_statistic(std::vector<double> x, const auto& cdf) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double c = cdf(x[i]);
    d = std::max({d, std::abs(c - i / n), std::abs((i + 1) / n - c)});
  }
  return d;
}

}  // namespace

TEST_CASE("alpha parameter domain") {
  CHECK(AlphaParam(1.5).value() == 1.5);
  CHECK(AlphaParam(2.0).value() == AlphaParam::kGaussianSubstitute);
  CHECK_THROWS_AS(AlphaParam(0.0), std::invalid_argument);
  CHECK_THROWS_AS(AlphaParam(2.01), std::invalid_argument);
  CHECK_THROWS_AS(AlphaParam(std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(PositiveStableSampler(1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(PositiveStableSampler(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("impulse scale") {
  CHECK(impulse_scale(AlphaParam(1.0)) == doctest::Approx(1.0).epsilon(1e-15));
  // 2 cos(3 pi / 8)^(4 / 3)
  CHECK(impulse_scale(AlphaParam(1.5)) == doctest::Approx(0.5565).epsilon(1e-3));
  CHECK(impulse_sampler(AlphaParam(1.5)).exponent() == 0.75);
}

TEST_CASE("exponent one half is the Levy law") {
  RngStream rng(11, 0);
  const PositiveStableSampler s = impulse_sampler(AlphaParam(1.0));
  std::vector<double> x(100000);
  for (double& v : x) v = s(rng);
  // Laplace exp(-sqrt(2 c s)) with c = 1 for the Levy(0, c) law.
  const double c = 1.0;
  const double d = ks_statistic(x, [&](double v) { return std::erfc(std::sqrt(c / (2.0 * v))); });
  CHECK(d < 0.01);
}

TEST_CASE("empirical Laplace transform matches the closed form") {
  for (double a : {0.3, 0.6, 0.75, 0.9, 0.9995}) {
    const PositiveStableSampler s(a, 0.7);
    RngStream rng(5, 1);
    const int m = 200000;
    std::vector<double> x(m);
    for (double& v : x) v = s(rng);
    for (double t : {0.1, 1.0, 4.0}) {
      double mean = 0.0;
      double sq = 0.0;
      for (double v : x) {
        const double e = std::exp(-t * v);
        mean += e;
        sq += e * e;
      }
      mean /= m;
      const double se = std::sqrt((sq / m - mean * mean) / m);
      const double expected = std::exp(-std::pow(0.7 * t, a) / std::cos(std::numbers::pi * a / 2));
      CHECK(s.laplace_transform(t) == doctest::Approx(expected).epsilon(1e-14));
      CHECK(std::abs(mean - expected) < 5.0 * se + 1e-12);
    }
  }
}

TEST_CASE("impulses are positive and finite") {
  RngStream rng(2, 0);
  for (double alpha : {0.5, 1.2, 1.8, 1.999}) {
    for (int i = 0; i < 20000; ++i) {
      const double v = sample_impulse(AlphaParam(alpha), rng);
      REQUIRE(v > 0.0);
      REQUIRE(std::isfinite(v));
    }
  }
}

TEST_CASE("near-Gaussian exponent concentrates the impulse at two") {
  RngStream rng(4, 0);
  const PositiveStableSampler s = impulse_sampler(AlphaParam(2.0));
  double mean = 0.0;
  const int m = 100000;
  for (int i = 0; i < m; ++i) mean += s(rng);
  mean /= m;
  CHECK(mean == doctest::Approx(2.0).epsilon(0.01));
}

TEST_CASE("complex SaS characteristic function and isotropy") {
  const double alpha = 1.5;
  const double sigma = 0.8;
  RngStream rng(7, 0);
  const int m = 200000;
  std::vector<double> re(m);
  std::vector<double> phase(m);
  for (int i = 0; i < m; ++i) {
    const auto z = sample_sas_complex(AlphaParam(alpha), sigma, rng);
    re[i] = z.real();
    phase[i] = std::arg(z);
  }
  for (double t : {0.2, 1.0, 3.0}) {
    // E exp(-phi sigma^2 t^2 / 4) with E exp(-s phi) = exp(-(2 s)^(alpha/2)).
    const double expected = std::exp(-std::pow(sigma * sigma * t * t / 2.0, alpha / 2.0));
    CHECK(std::abs(empirical_cf(re, t) - expected) < 0.01);
  }
  const double d = ks_statistic(phase, [](double p) { return (p + std::numbers::pi) / (2.0 * std::numbers::pi); });
  CHECK(d < 0.01);
}

TEST_CASE("sampling is reproducible per stream") {
  RngStream a(3, 9);
  RngStream b(3, 9);
  RngStream c(3, 10);
  const auto za = sample_sas_complex(AlphaParam(1.2), 1.0, a);
  CHECK(za == sample_sas_complex(AlphaParam(1.2), 1.0, b));
  CHECK(za != sample_sas_complex(AlphaParam(1.2), 1.0, c));
  CHECK(a == b);
}

TEST_CASE("tail index on exact Pareto data") {
  RngStream rng(1, 0);
  const double index = 1.5;
  std::vector<double> x(200000);
  for (double& v : x) v = std::pow(rng.uniform(), -1.0 / index);
  CHECK(hill_tail_index(x, 0.01) == doctest::Approx(index).epsilon(0.05));
  CHECK(tail_index_estimate(x, 0.01) == doctest::Approx(index).epsilon(0.1));
  CHECK_THROWS_AS(hill_tail_index(std::vector<double>{1.0, 2.0}, 0.01), std::invalid_argument);
  CHECK_THROWS_AS(tail_index_estimate(x, 0.7), std::invalid_argument);
}

TEST_CASE("excess kurtosis") {
  RngStream rng(8, 0);
  std::vector<double> g(200000);
  std::vector<double> u(200000);
  for (double& v : g) v = rng.normal();
  for (double& v : u) v = rng.uniform();
  CHECK(std::abs(excess_kurtosis(g)) < 0.05);
  CHECK(excess_kurtosis(u) == doctest::Approx(-1.2).epsilon(0.02));
  CHECK_THROWS_AS(excess_kurtosis(std::vector<double>{1.0}), std::invalid_argument);
}
