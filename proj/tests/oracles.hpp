#pragma once

// Independent long double re-implementations used as test references.

#include <cmath>
#include <vector>

#include "asvae/vae.hpp"

namespace oracle {

using ld = long double;
using Vec = std::vector<ld>;

// Row-major long double copy of one tensor.
struct Tensor {
  std::vector<ld> v;
  long rows = 0;
  long cols = 0;
  ld at(long r, long c) const { return v[static_cast<std::size_t>(r * cols + c)]; }
};

inline std::vector<Tensor> copy(const asvae::VaeParams& p) {
  std::vector<Tensor> out;
  for (const asvae::TensorRef& t : p.tensors()) {
    Tensor c;
    c.rows = t.rows;
    c.cols = t.cols;
    const auto m = t.map();
    for (long r = 0; r < t.rows; ++r) {
      for (long k = 0; k < t.cols; ++k) c.v.push_back(static_cast<ld>(m(r, k)));
    }
    out.push_back(std::move(c));
  }
  return out;
}

// y = W x + b, optionally through tanh.
inline Vec affine(const Tensor& w, const Tensor& b, const Vec& x, bool squash) {
  Vec y(static_cast<std::size_t>(w.rows));
  for (long r = 0; r < w.rows; ++r) {
    ld acc = b.v[static_cast<std::size_t>(r)];
    for (long c = 0; c < w.cols; ++c) acc += w.at(r, c) * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = squash ? std::tanh(acc) : acc;
  }
  return y;
}

struct Enc {
  Vec mu;
  Vec log_var;
};

// Tensor order: enc W1 b1 Wmu bmu Wlv blv, dec V1 c1 Vlv clv.
inline Enc encode_t(const std::vector<Tensor>& t, const Vec& power) {
  Vec x = power;
  for (ld& v : x) v = std::max(v, static_cast<ld>(asvae::kPowerFloor));
  const Vec e = affine(t[0], t[1], x, true);
  return {affine(t[2], t[3], e, false), affine(t[4], t[5], e, false)};
}

inline Vec decode_t(const std::vector<Tensor>& t, const Vec& h) {
  Vec y = affine(t[8], t[9], affine(t[6], t[7], h, true), false);
  for (ld& v : y) v = std::exp(v);
  return y;
}

inline Vec to_vec(const Eigen::VectorXd& x) {
  Vec v(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) v[static_cast<std::size_t>(i)] = x(i);
  return v;
}

inline Enc encode(const asvae::VaeParams& p, const Eigen::VectorXd& power) {
  return encode_t(copy(p), to_vec(power));
}

inline Vec decode(const asvae::VaeParams& p, const Eigen::VectorXd& h) {
  return decode_t(copy(p), to_vec(h));
}

// Single-sample ELBO: -sum d_IS(x; s2) + 1/2 sum (lv - mu^2 - e^lv).
inline ld elbo_t(const std::vector<Tensor>& t, const Eigen::MatrixXd& batch,
                 const Eigen::MatrixXd& noise) {
  ld total = 0.0L;
  for (Eigen::Index n = 0; n < batch.cols(); ++n) {
    const Vec x = to_vec(batch.col(n));
    const Enc e = encode_t(t, x);
    Vec h(e.mu.size());
    for (std::size_t l = 0; l < h.size(); ++l) {
      h[l] = e.mu[l] + std::exp(e.log_var[l] / 2) * static_cast<ld>(noise(static_cast<Eigen::Index>(l), n));
      total += (e.log_var[l] - e.mu[l] * e.mu[l] - std::exp(e.log_var[l])) / 2;
    }
    const Vec s2 = decode_t(t, h);
    for (std::size_t f = 0; f < x.size(); ++f) {
      const ld xf = std::max(x[f], static_cast<ld>(asvae::kPowerFloor));
      const ld r = xf / s2[f];
      total -= r - std::log(r) - 1;
    }
  }
  return total;
}

inline ld elbo(const asvae::VaeParams& p, const Eigen::MatrixXd& batch, const Eigen::MatrixXd& noise) {
  return elbo_t(copy(p), batch, noise);
}

// Central differences in long double, one vector per tensor (row-major).
inline std::vector<Vec> finite_difference_grad(const asvae::VaeParams& p, const Eigen::MatrixXd& batch,
                                               const Eigen::MatrixXd& noise, ld step) {
  std::vector<Tensor> t = copy(p);
  std::vector<Vec> grad;
  for (auto& tensor : t) {
    Vec g(tensor.v.size());
    for (std::size_t i = 0; i < tensor.v.size(); ++i) {
      const ld orig = tensor.v[i];
      tensor.v[i] = orig + step;
      const ld up = elbo_t(t, batch, noise);
      tensor.v[i] = orig - step;
      const ld down = elbo_t(t, batch, noise);
      tensor.v[i] = orig;
      g[i] = (up - down) / (2 * step);
    }
    grad.push_back(std::move(g));
  }
  return grad;
}

// ||analytic - reference|| / ||reference||.
inline double relative_error(const asvae::TensorRef& analytic, const Vec& reference) {
  ld num = 0.0L;
  ld den = 0.0L;
  const auto m = analytic.map();
  std::size_t i = 0;
  for (long r = 0; r < analytic.rows; ++r) {
    for (long c = 0; c < analytic.cols; ++c, ++i) {
      const ld d = static_cast<ld>(m(r, c)) - reference[i];
      num += d * d;
      den += reference[i] * reference[i];
    }
  }
  return static_cast<double>(std::sqrt(num / std::max(den, 1e-300L)));
}

}  // namespace oracle
