// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "asvae/audio_io.hpp"
#include "asvae/cli.hpp"
#include "asvae/mcem.hpp"
#include "asvae/metrics.hpp"
#include "asvae/stable.hpp"
#include "asvae/stft.hpp"
#include "asvae/vae.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace asvae;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

int run_cli(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  if (code != 0) std::cerr << "asvae " << args.front() << " failed (" << code << "): " << err.str();
  return code;
}

std::string run_cli_stdout(const std::vector<std::string>& args) {
  std::ostringstream out;
  std::ostringstream err;
  if (cli::run(args, out, err) != 0) throw std::runtime_error("asvae " + args.front() + ": " + err.str());
  return out.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict stft_reconstruction() {
  Clock clock;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream rng(100, s);
    Waveform w;
    w.samples.resize(16000);
    for (double& v : w.samples) v = rng.normal();
    const Waveform back = istft(stft(w));
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      num += (back.samples[i] - w.samples[i]) * (back.samples[i] - w.samples[i]);
      den += w.samples[i] * w.samples[i];
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  const double t = clock.seconds();
  return {worst < 1e-6 && t < 1.0, "max relative RMS " + fmt("%.3g", worst) + ", " + fmt("%.3f s", t)};
}

Verdict elbo_gradient() {
  Clock clock;
  const VaeDims dims{16, 4, 8};
  RngStream rng(200, 0);
  VaeParams p = VaeParams::glorot_uniform(dims, rng);
  for (const TensorRef& t : p.tensors()) {
    if (t.cols == 1) {
      for (Eigen::Index i = 0; i < t.rows; ++i) t.data[i] = 0.3 * rng.normal();
    }
  }
  Eigen::MatrixXd batch(16, 3);
  for (Eigen::Index i = 0; i < batch.size(); ++i) batch.data()[i] = rng.exponential();
  const Eigen::MatrixXd noise = draw_reparam_noise(4, 3, rng);
  const ElboGradient g = elbo_grad(p, batch, noise);
  const auto fd = oracle::finite_difference_grad(p, batch, noise, 1e-5);
  const auto an = g.grad.tensors();
  double worst = 0.0;
  std::string worst_name;
  for (std::size_t t = 0; t < an.size(); ++t) {
    const double e = oracle::relative_error(an[t], fd[t]);
    if (e >= worst) {
      worst = e;
      worst_name = an[t].name;
    }
  }
  const double secs = clock.seconds();
  return {worst < 1e-4 && secs < 30.0,
          "max relative error " + fmt("%.3g", worst) + " (" + worst_name + "), " + fmt("%.2f s", secs)};
}

Verdict kl_nonnegative() {
  RngStream rng(300, 0);
  double lowest = 1e300;
  for (int i = 0; i < 10000; ++i) {
    // Alternate between network outputs and raw draws over a wide range.
    EncoderOutput enc;
    if (i % 2 == 0) {
      const VaeDims dims{16, 8, 8};
      RngStream net_rng(300, 1 + static_cast<std::uint64_t>(i));
      const VaeParams p = VaeParams::glorot_uniform(dims, net_rng);
      Eigen::VectorXd power(16);
      for (Eigen::Index f = 0; f < 16; ++f) power(f) = std::exp(6.0 * rng.normal());
      enc = encode(p, power);
    } else {
      enc.mu.resize(8);
      enc.log_var.resize(8);
      const double scale = std::exp(2.0 * rng.normal());
      for (Eigen::Index l = 0; l < 8; ++l) {
        enc.mu(l) = scale * rng.normal();
        enc.log_var(l) = scale * rng.normal();
      }
    }
    lowest = std::min(lowest, gaussian_kl(enc.mu, enc.log_var));
  }
  return {lowest >= -1e-12, "min KL " + fmt("%.3g", lowest)};
}

Verdict positive_stable() {
  RngStream rng(400, 0);
  const AlphaParam one(1.0);
  std::vector<double> x(100000);
  for (double& v : x) v = sample_impulse(one, rng);
  std::sort(x.begin(), x.end());
  double ks = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double cdf = std::erfc(std::sqrt(1.0 / (2.0 * x[i])));
    ks = std::max({ks, std::abs(cdf - static_cast<double>(i) / n), std::abs(cdf - static_cast<double>(i + 1) / n)});
  }
  bool pass = ks < 0.01;
  std::string detail = "Levy KS " + fmt("%.4f", ks);
  for (double a : {1.2, 1.5, 1.8}) {
    RngStream r(401, static_cast<std::uint64_t>(a * 10));
    std::vector<double> mag(1000000);
    for (double& m : mag) m = std::abs(sample_sas_complex(AlphaParam(a), 1.0, r));
    const double est = tail_index_estimate(mag);
    pass = pass && std::abs(est - a) <= 0.15;
    detail += "; alpha " + fmt("%.1f", a) + " tail " + fmt("%.3f", est);
  }
  return {pass, detail};
}

Verdict mm_descent() {
  double worst_rise = 0.0;
  double worst_oracle = 0.0;
  bool pass = true;
  for (std::uint64_t inst = 0; inst < 100; ++inst) {
    RngStream rng(500, inst);
    const Eigen::Index f_bins = 8;
    const Eigen::Index frames = 5;
    Eigen::MatrixXcd x(f_bins, frames);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = {rng.normal(), rng.normal()};
    PosteriorSamples s;
    for (int r = 0; r < 3; ++r) {
      PosteriorDraw d{Eigen::MatrixXd::Zero(1, frames), Eigen::MatrixXd(f_bins, frames),
                      Eigen::MatrixXd(f_bins, frames)};
      for (Eigen::Index i = 0; i < d.phi.size(); ++i) {
        d.phi.data()[i] = sample_impulse(AlphaParam(1.5), rng);
        d.speech_var.data()[i] = std::exp(2.0 * rng.normal());
      }
      s.draws.push_back(d);
    }
    UnsupervisedParams p;
    p.noise.alpha = AlphaParam(1.5);
    p.noise.sigma_b2 = (Eigen::ArrayXd::Random(f_bins) + 1.5).matrix();
    p.gain = (Eigen::ArrayXd::Random(frames) + 1.5).matrix();

    auto oracle_q = [&](const UnsupervisedParams& q) {
      long double total = 0.0L;
      for (const PosteriorDraw& d : s.draws) {
        for (Eigen::Index n = 0; n < frames; ++n) {
          for (Eigen::Index f = 0; f < f_bins; ++f) {
            const long double v = static_cast<long double>(q.gain(n)) * d.speech_var(f, n) +
                                  static_cast<long double>(d.phi(f, n)) * q.noise.sigma_b2(f);
            total += std::log(v) + std::norm(x(f, n)) / v;
          }
        }
      }
      return static_cast<double>(-total / 3.0L);
    };

    double prev = -q_tilde(p, s, x);
    for (int it = 0; it < 50; ++it) {
      const double oq = oracle_q(p);
      worst_oracle = std::max(worst_oracle, std::abs(q_tilde(p, s, x) - oq) / std::abs(oq));
      p = m_step(p, s, x).params;
      const double cur = -q_tilde(p, s, x);
      const double rise = (cur - prev) / std::abs(prev);
      worst_rise = std::max(worst_rise, rise);
      pass = pass && cur <= prev + 1e-10 * std::abs(prev);
      prev = cur;
    }
  }
  pass = pass && worst_oracle < 1e-12;
  return {pass, "max relative rise " + fmt("%.3g", worst_rise) + ", max oracle deviation " + fmt("%.3g", worst_oracle)};
}

Verdict mh_sanity() {
  const int latent = 1;
  const ConstantSpeechModel model(Eigen::VectorXd::Constant(4, 2.0), latent);
  RngStream rng(600, 0);
  Eigen::MatrixXcd x(4, 1);
  for (Eigen::Index i = 0; i < 4; ++i) x(i) = {rng.normal(), rng.normal()};
  UnsupervisedParams p;
  p.noise.alpha = AlphaParam(1.8);
  p.noise.sigma_b2 = Eigen::VectorXd::Zero(4);
  p.gain = Eigen::VectorXd::Ones(1);
  // Random-walk step of 2.4 standard deviations, near optimal for a 1-D normal target.
  SamplerState s = init_sampler_state(x, model, AlphaParam(1.8), 5.8, 601);
  const int sweeps = 10000;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(latent);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(latent);
  for (int i = 0; i < sweeps; ++i) {
    gibbs_sweep(s, x, model, p);
    sum += s.h.col(0);
    sq += s.h.col(0).cwiseAbs2();
  }
  const Eigen::VectorXd mean = sum / sweeps;
  const Eigen::VectorXd var = sq / sweeps - mean.cwiseAbs2();
  const double mean_err = mean.cwiseAbs().maxCoeff();
  const double var_err = (var.array() - 1.0).abs().maxCoeff();
  return {mean_err < 0.05 && var_err < 0.1,
          "max |mean| " + fmt("%.4f", mean_err) + ", max |var - 1| " + fmt("%.4f", var_err)};
}

// Trains the model used by the end-to-end criteria.
struct EndToEnd {
  fs::path dir;
  fs::path weights;
  double train_seconds = 0.0;
  bool trained = false;
};

Verdict wiener_contraction(const EndToEnd& e2e) {
  // Library path on a random model.
  RngStream rng(700, 0);
  const VaeDims dims{33, 4, 16};
  const VaeSpeechModel model(VaeParams::glorot_uniform(dims, rng));
  Eigen::MatrixXcd x(33, 40);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double scale = std::exp(2.0 * rng.normal());
    x.data()[i] = {scale * rng.normal(), scale * rng.normal()};
  }
  McemConfig cfg;
  cfg.n_iters = 5;
  cfg.gibbs_iters = 10;
  cfg.burn_in = 5;
  cfg.alpha = 1.5;
  const McemResult r = mcem_run(x, model, cfg);
  SamplerState st = r.state;
  const Eigen::MatrixXcd est = reconstruct(x, model, r.params, st, 20, 10);
  const double excess = (est.cwiseAbs() - x.cwiseAbs()).maxCoeff();

  // Full command-line path with the noise variance pinned to zero.
  if (!e2e.trained) return {false, "model training failed"};
  const fs::path in = e2e.dir / "gauss" / "mix_000.wav";
  const fs::path out = e2e.dir / "zero_noise.wav";
  if (run_cli({"enhance", in.string(), out.string(), "--weights", e2e.weights.string(), "--zero-noise",
               "--mcem-iters", "3", "--gibbs-iters", "4", "--burn-in", "2", "--recon-iters", "4",
               "--recon-burn-in", "2"}) != 0) {
    return {false, "zero-noise enhance failed"};
  }
  const Waveform a = read_wav(in);
  const Waveform b = read_wav(out);
  if (a.size() != b.size()) return {false, "zero-noise output length differs"};
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a.samples[i] - b.samples[i]) * (a.samples[i] - b.samples[i]);
    den += a.samples[i] * a.samples[i];
  }
  const double rel = std::sqrt(num / den);
  return {excess <= 0.0 && rel < 1e-5,
          "max(|s| - |x|) " + fmt("%.3g", excess) + ", zero-noise relative RMS " + fmt("%.3g", rel)};
}

double improvement(const fs::path& set, const fs::path& enhanced) {
  const std::string js = run_cli_stdout({"evaluate", (set / "clean_000.wav").string(),
                                         (set / "mix_000.wav").string(), enhanced.string()});
  return nlohmann::json::parse(js).at("improvement_db").get<double>();
}

bool enhance_e2e(const EndToEnd& e2e, const fs::path& in, const fs::path& out, double alpha, double& secs) {
  Clock clock;
  const int code = run_cli({"enhance", in.string(), out.string(), "--weights", e2e.weights.string(), "--alpha",
                            fmt("%.3f", alpha), "--mcem-iters", "50", "--gibbs-iters", "40", "--burn-in", "30",
                            "--seed", "3"});
  secs = clock.seconds();
  return code == 0;
}

Verdict end_to_end(const EndToEnd& e2e) {
  if (!e2e.trained) return {false, "model training failed"};
  double t_gauss = 0.0;
  double t_sas15 = 0.0;
  double t_sas2 = 0.0;
  const fs::path g = e2e.dir / "gauss";
  const fs::path s = e2e.dir / "sas";
  if (!enhance_e2e(e2e, g / "mix_000.wav", e2e.dir / "gauss_a1999.wav", 1.999, t_gauss) ||
      !enhance_e2e(e2e, s / "mix_000.wav", e2e.dir / "sas_a15.wav", 1.5, t_sas15) ||
      !enhance_e2e(e2e, s / "mix_000.wav", e2e.dir / "sas_a1999.wav", 1.999, t_sas2)) {
    return {false, "enhance failed"};
  }
  const double gain_gauss = improvement(g, e2e.dir / "gauss_a1999.wav");
  const double gain_sas15 = improvement(s, e2e.dir / "sas_a15.wav");
  const double gain_sas2 = improvement(s, e2e.dir / "sas_a1999.wav");
  const double t_max = std::max({t_gauss, t_sas15, t_sas2});
  const bool pass = e2e.train_seconds < 600.0 && t_max < 600.0 && gain_gauss >= 3.0 && gain_sas15 >= gain_sas2;
  return {pass, "train " + fmt("%.0f s", e2e.train_seconds) + "; Gaussian mixture, alpha 1.999: " +
                    fmt("%+.2f dB", gain_gauss) + "; SaS mixture: alpha 1.5 " + fmt("%+.2f dB", gain_sas15) +
                    " vs alpha 1.999 " + fmt("%+.2f dB", gain_sas2) + "; slowest enhance " + fmt("%.0f s", t_max)};
}

Verdict reproducibility(const EndToEnd& e2e) {
  if (!e2e.trained) return {false, "model training failed"};
  double secs = 0.0;
  const fs::path first = e2e.dir / "gauss_a1999.wav";
  const fs::path second = e2e.dir / "gauss_a1999_repeat.wav";
  if (!fs::exists(first) || !enhance_e2e(e2e, e2e.dir / "gauss" / "mix_000.wav", second, 1.999, secs)) {
    return {false, "enhance failed"};
  }
  const std::string a = slurp(first);
  const std::string b = slurp(second);
  return {!a.empty() && a == b, a == b ? "enhanced WAVs byte-identical (" + std::to_string(a.size()) + " bytes)"
                                       : "enhanced WAVs differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"asvae acceptance run"};
  std::string workdir = (fs::temp_directory_path() / "asvae_acceptance").string();
  app.add_option("--workdir", workdir, "scratch directory");
  CLI11_PARSE(app, argc, argv);

  EndToEnd e2e;
  e2e.dir = workdir;
  e2e.weights = e2e.dir / "speech.weights";
  fs::create_directories(e2e.dir);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Verdict()>& fn) {
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << id << ". " << name << ": " << v.detail << std::endl;
  };

  report(1, "STFT perfect reconstruction", stft_reconstruction);
  report(2, "ELBO gradient check", elbo_gradient);
  report(3, "KL non-negativity", kl_nonnegative);
  report(4, "positive-stable sampler", positive_stable);
  report(5, "MM descent", mm_descent);
  report(6, "MH sanity", mh_sanity);

  {
    Clock clock;
    e2e.trained = run_cli({"train", "--synthetic", "--frames", "2000", "--seed", "1", "--out",
                           e2e.weights.string()}) == 0;
    e2e.train_seconds = clock.seconds();
    e2e.trained = e2e.trained &&
                  run_cli({"synth-data", "--frames", "188", "--snr-db", "0", "--seed", "7", "--out",
                           (e2e.dir / "gauss").string()}) == 0 &&
                  run_cli({"synth-data", "--frames", "188", "--snr-db", "0", "--seed", "7", "--noise-kind",
                           "sas_synthetic", "--noise-alpha", "1.5", "--out", (e2e.dir / "sas").string()}) == 0;
  }

  report(7, "Wiener contraction and degenerate cases", [&] { return wiener_contraction(e2e); });
  report(8, "end-to-end enhancement", [&] { return end_to_end(e2e); });
  report(9, "reproducibility", [&] { return reproducibility(e2e); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
