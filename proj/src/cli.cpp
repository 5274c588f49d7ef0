#include "asvae/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "asvae/audio_io.hpp"
#include "asvae/config.hpp"
#include "asvae/errors.hpp"
#include "asvae/mcem.hpp"
#include "asvae/metrics.hpp"
#include "asvae/stable.hpp"
#include "asvae/stft.hpp"
#include "asvae/vae.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace asvae::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Command-line values that override the config only when given.
class Overrides {
 public:
  template <class T>
  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& desc,
                   std::function<void(RunConfig&, const T&)> set) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, desc);
    apply_.push_back([opt, value, set](RunConfig& c) {
      if (opt->count() > 0) set(c, *value);
    });
    return opt;
  }

  CLI::Option* add_flag(CLI::App* app, const std::string& name, const std::string& desc,
                        std::function<void(RunConfig&)> set) {
    CLI::Option* opt = app->add_flag(name, desc);
    apply_.push_back([opt, set](RunConfig& c) {
      if (opt->count() > 0) set(c);
    });
    return opt;
  }

  void apply(RunConfig& c) const {
    for (const auto& fn : apply_) fn(c);
  }

 private:
  std::vector<std::function<void(RunConfig&)>> apply_;
};

void add_seed(Overrides& o, CLI::App* app) {
  o.add<std::uint64_t>(app, "--seed", "random seed", [](RunConfig& c, const std::uint64_t& v) { c.seed = v; });
}

void set_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
#else
  (void)threads;
#endif
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f << text << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

int window_for(const RunConfig& cfg, int sample_rate) {
  return cfg.win_length > 0 ? cfg.win_length : default_win_length(sample_rate);
}

// Float32 round trip, so in-memory values equal what a WAV file holds.
Waveform as_float32(Waveform w) {
  for (double& s : w.samples) s = static_cast<double>(static_cast<float>(s));
  return w;
}

std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (entry.is_regular_file() && ext == ".wav") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("no .wav files in " + dir.string());
  return files;
}

Eigen::MatrixXd power_frames(const std::vector<Waveform>& signals, const RunConfig& cfg) {
  std::vector<Eigen::MatrixXd> parts;
  Eigen::Index total = 0;
  Eigen::Index bins = -1;
  for (const Waveform& w : signals) {
    parts.push_back(stft(w, window_for(cfg, w.sample_rate)).power());
    if (bins >= 0 && parts.back().rows() != bins) {
      throw std::invalid_argument("corpus files give different STFT sizes (sample rates differ)");
    }
    bins = parts.back().rows();
    total += parts.back().cols();
  }
  Eigen::MatrixXd out(bins, total);
  Eigen::Index col = 0;
  for (const auto& p : parts) {
    out.middleCols(col, p.cols()) = p;
    col += p.cols();
  }
  return out;
}

ojson train_log_json(const TrainLog& log) {
  ojson j;
  j["best_epoch"] = log.best_epoch;
  j["stopped_early"] = log.stopped_early;
  ojson epochs = ojson::array();
  for (const EpochRecord& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_elbo", e.train_elbo},
                      {"validation_elbo", e.validation_elbo},
                      {"best_validation_elbo", e.best_validation_elbo}});
  }
  j["epochs"] = std::move(epochs);
  return j;
}

int cmd_train(const RunConfig& cfg, bool synthetic, const fs::path& log_path, std::ostream& out) {
  if (!synthetic && cfg.corpus.empty()) {
    throw std::invalid_argument("train: give --corpus DIR or --synthetic");
  }
  if (cfg.weights.empty()) throw std::invalid_argument("train: --out PATH is required");

  std::vector<Waveform> signals;
  if (synthetic) {
    signals.push_back(synth_speech_like(cfg.train_frames, cfg.seed, cfg.sample_rate));
  } else {
    for (const fs::path& p : wav_files(cfg.corpus)) signals.push_back(read_wav(p));
  }
  const Eigen::MatrixXd data = power_frames(signals, cfg);

  const TrainResult result = train(data, cfg.train);
  ensure_parent(cfg.weights);
  save_weights(result.params, cfg.weights);
  const fs::path log_file = log_path.empty() ? fs::path(cfg.weights.string() + ".log.json") : log_path;
  ojson log = train_log_json(result.log);
  log["frames"] = data.cols();
  log["freq_bins"] = data.rows();
  write_text(log_file, log.dump(2));
  out << "trained on " << data.cols() << " frames, best epoch " << result.log.best_epoch << " of "
      << result.log.epochs.size() << ", weights written to " << cfg.weights.string() << '\n';
  return kExitOk;
}

ojson diagnostics_json(const RunConfig& cfg, const McemResult& r) {
  ojson j;
  j["alpha"] = AlphaParam(cfg.mcem.alpha).value();
  j["seed"] = cfg.seed;
  ojson its = ojson::array();
  for (const IterationLog& it : r.log) {
    its.push_back({{"iteration", it.iteration},
                   {"neg_q", it.neg_q},
                   {"h_acceptance", it.h_acceptance},
                   {"phi_acceptance", it.phi_acceptance},
                   {"sigma_b2_norm", it.sigma_b2_norm},
                   {"gain_norm", it.gain_norm},
                   {"skipped_updates", it.skipped_updates}});
  }
  j["iterations"] = std::move(its);
  j["sigma_b2"] = std::vector<double>(r.params.noise.sigma_b2.data(),
                                      r.params.noise.sigma_b2.data() + r.params.noise.sigma_b2.size());
  j["gain"] = std::vector<double>(r.params.gain.data(), r.params.gain.data() + r.params.gain.size());
  return j;
}

int cmd_enhance(const RunConfig& cfg, const fs::path& in_path, const fs::path& out_path,
                std::ostream& out) {
  if (cfg.weights.empty()) throw std::invalid_argument("enhance: --weights PATH is required");
  const Waveform noisy = read_wav(in_path);
  const VaeSpeechModel model(load_weights(cfg.weights));
  const EnhanceResult r = enhance(noisy, model, cfg.mcem, window_for(cfg, noisy.sample_rate));
  ensure_parent(out_path);
  write_wav(out_path, r.enhanced);
  fs::path diag = cfg.diagnostics;
  if (diag.empty()) diag = fs::path(out_path).replace_extension(".diagnostics.json");
  write_text(diag, diagnostics_json(cfg, r.mcem).dump(2));
  out << "enhanced " << noisy.size() << " samples (" << cfg.mcem.n_iters
      << " MCEM iterations), written to " << out_path.string() << '\n';
  return kExitOk;
}

int cmd_evaluate(const fs::path& clean, const fs::path& mix, const fs::path& enh,
                 std::ostream& out) {
  const EvalReport r = evaluate(read_wav(clean), read_wav(mix), read_wav(enh));
  out << r.to_json() << '\n';
  return kExitOk;
}

std::string indexed(const std::string& stem, int i) {
  std::ostringstream s;
  s << stem << '_' << std::setw(3) << std::setfill('0') << i << ".wav";
  return s.str();
}

int cmd_synth_data(const RunConfig& cfg, std::ostream& out) {
  if (cfg.out.empty()) throw std::invalid_argument("synth-data: --out DIR is required");
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec || !fs::is_directory(cfg.out)) {
    throw IoError("cannot create output directory " + cfg.out.string());
  }
  ojson items = ojson::array();
  for (int i = 0; i < cfg.synth_count; ++i) {
    const std::uint64_t clean_seed = RngStream(cfg.seed, 1000 + static_cast<std::uint64_t>(i)).next_u64();
    const Waveform clean = as_float32(synth_speech_like(cfg.synth_frames, clean_seed, cfg.sample_rate));
    ojson item;
    item["clean"] = indexed("clean", i);
    write_wav(cfg.out / indexed("clean", i), clean);
    if (cfg.synth_mixtures) {
      MixtureSpec spec = cfg.mixture;
      spec.seed = RngStream(cfg.seed, 2000 + static_cast<std::uint64_t>(i)).next_u64();
      const Waveform noise = as_float32(synth_noise(spec, clean.size(), cfg.sample_rate));
      const MixResult mix = mix_at_snr(clean, noise, cfg.mixture.snr_db);
      write_wav(cfg.out / indexed("noise", i), noise);
      write_wav(cfg.out / indexed("mix", i), mix.mixture);
      item["noise"] = indexed("noise", i);
      item["mixture"] = indexed("mix", i);
      item["snr_db"] = cfg.mixture.snr_db;
      item["noise_gain"] = mix.noise_gain;
      item["noise_kind"] = to_string(cfg.mixture.noise_kind);
    }
    items.push_back(std::move(item));
  }
  ojson manifest;
  manifest["sample_rate"] = cfg.sample_rate;
  manifest["seed"] = cfg.seed;
  manifest["items"] = std::move(items);
  write_text(cfg.out / "manifest.json", manifest.dump(2));
  out << "wrote " << cfg.synth_count << " item(s) to " << cfg.out.string() << '\n';
  return kExitOk;
}

// NumPy .npy v1.0 file holding a complex128 vector.
void write_npy_complex(const fs::path& path, const std::vector<std::complex<double>>& v) {
  std::string header = "{'descr': '<c16', 'fortran_order': False, 'shape': (" +
                       std::to_string(v.size()) + ",), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  const auto len = static_cast<std::uint16_t>(header.size());
  f.write("\x93NUMPY\x01\x00", 8);
  const char len_bytes[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  f.write(len_bytes, 2);
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(std::complex<double>)));
  if (!f) throw IoError("write failed: " + path.string());
}

int cmd_sample_noise(const RunConfig& cfg, double alpha_in, std::ostream& out) {
  const AlphaParam alpha(alpha_in);
  RngStream rng(cfg.seed, 0);
  std::vector<std::complex<double>> samples(cfg.noise_count);
  for (auto& s : samples) s = sample_sas_complex(alpha, cfg.noise_sigma, rng);
  if (!cfg.out.empty()) {
    ensure_parent(cfg.out);
    write_npy_complex(cfg.out, samples);
  }
  std::vector<double> re(samples.size());
  std::vector<double> mag(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    re[i] = samples[i].real();
    mag[i] = std::abs(samples[i].real());
  }
  ojson j;
  j["alpha"] = alpha.value();
  j["sigma"] = cfg.noise_sigma;
  j["count"] = samples.size();
  j["seed"] = cfg.seed;
  try {
    j["tail_index"] = tail_index_estimate(mag);
  } catch (const std::exception&) {
    j["tail_index"] = nullptr;
  }
  if (samples.size() >= 2) {
    const double k = excess_kurtosis(re);
    j["excess_kurtosis"] = std::isfinite(k) ? ojson(k) : ojson(nullptr);
  } else {
    j["excess_kurtosis"] = nullptr;
  }
  out << j.dump(2) << '\n';
  return kExitOk;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech enhancement with a VAE speech prior and alpha-stable noise", "asvae"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file with flat dotted keys (default: $" +
                                              std::string(kConfigEnvVar) + ")");
  Overrides o;
  o.add<int>(&app, "--threads", "worker threads (0: all cores)", [](RunConfig& c, const int& v) { c.threads = v; });
  o.add<int>(&app, "--win-length", "STFT window in samples (0: 64 ms)",
             [](RunConfig& c, const int& v) { c.win_length = v; });
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print the effective config as JSON before running");

  CLI::App* train_cmd = app.add_subcommand("train", "train the speech model");
  bool synthetic = false;
  std::string log_path;
  train_cmd->add_flag("--synthetic", synthetic, "train on synthetic harmonic signals");
  train_cmd->add_option("--log", log_path, "per-epoch log (default: <out>.log.json)");
  o.add<std::string>(train_cmd, "--corpus", "directory of mono WAV files",
                     [](RunConfig& c, const std::string& v) { c.corpus = v; });
  o.add<std::size_t>(train_cmd, "--frames", "synthetic training frames",
                     [](RunConfig& c, const std::size_t& v) { c.train_frames = v; });
  o.add<int>(train_cmd, "--latent", "latent dimension", [](RunConfig& c, const int& v) { c.train.latent_dim = v; });
  o.add<int>(train_cmd, "--hidden", "hidden units", [](RunConfig& c, const int& v) { c.train.hidden_dim = v; });
  o.add<double>(train_cmd, "--lr", "Adam step size", [](RunConfig& c, const double& v) { c.train.learning_rate = v; });
  o.add<int>(train_cmd, "--batch-size", "minibatch size", [](RunConfig& c, const int& v) { c.train.batch_size = v; });
  o.add<int>(train_cmd, "--max-epochs", "epoch budget", [](RunConfig& c, const int& v) { c.train.max_epochs = v; });
  o.add<int>(train_cmd, "--patience", "early-stopping patience", [](RunConfig& c, const int& v) { c.train.patience = v; });
  o.add<std::string>(train_cmd, "--out", "weight file to write", [](RunConfig& c, const std::string& v) { c.weights = v; });
  add_seed(o, train_cmd);

  CLI::App* enhance_cmd = app.add_subcommand("enhance", "enhance a noisy mono WAV");
  std::string in_wav;
  std::string out_wav;
  enhance_cmd->add_option("input", in_wav, "noisy WAV")->required();
  enhance_cmd->add_option("output", out_wav, "enhanced WAV (float32)")->required();
  o.add<std::string>(enhance_cmd, "--weights", "trained weight file",
                     [](RunConfig& c, const std::string& v) { c.weights = v; });
  o.add<double>(enhance_cmd, "--alpha", "noise characteristic exponent in (0, 2]",
                [](RunConfig& c, const double& v) { c.mcem.alpha = v; });
  o.add<int>(enhance_cmd, "--mcem-iters", "MCEM iterations", [](RunConfig& c, const int& v) { c.mcem.n_iters = v; });
  o.add<int>(enhance_cmd, "--gibbs-iters", "sweeps per E-step", [](RunConfig& c, const int& v) { c.mcem.gibbs_iters = v; });
  o.add<int>(enhance_cmd, "--burn-in", "discarded sweeps per E-step", [](RunConfig& c, const int& v) { c.mcem.burn_in = v; });
  o.add<double>(enhance_cmd, "--eps2", "latent random-walk variance", [](RunConfig& c, const double& v) { c.mcem.eps2 = v; });
  o.add<int>(enhance_cmd, "--mstep-inner", "MM passes per M-step",
             [](RunConfig& c, const int& v) { c.mcem.mstep_inner_iters = v; });
  o.add<int>(enhance_cmd, "--recon-iters", "reconstruction sweeps", [](RunConfig& c, const int& v) { c.mcem.recon_iters = v; });
  o.add<int>(enhance_cmd, "--recon-burn-in", "discarded reconstruction sweeps",
             [](RunConfig& c, const int& v) { c.mcem.recon_burn_in = v; });
  o.add<std::string>(enhance_cmd, "--diagnostics", "diagnostics JSON (default: <output>.diagnostics.json)",
                     [](RunConfig& c, const std::string& v) { c.diagnostics = v; });
  o.add_flag(enhance_cmd, "--zero-noise", "testing: pin the noise variance to zero",
             [](RunConfig& c) { c.mcem.zero_noise = true; });
  add_seed(o, enhance_cmd);

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "SI-SDR of an enhanced signal");
  std::string clean_wav;
  std::string mix_wav;
  std::string enh_wav;
  eval_cmd->add_option("clean", clean_wav, "clean reference")->required();
  eval_cmd->add_option("mixture", mix_wav, "noisy mixture")->required();
  eval_cmd->add_option("enhanced", enh_wav, "enhanced estimate")->required();

  CLI::App* synth_cmd = app.add_subcommand("synth-data", "write synthetic clean signals and mixtures");
  o.add<std::size_t>(synth_cmd, "--frames", "STFT frames per clean signal",
                     [](RunConfig& c, const std::size_t& v) { c.synth_frames = v; });
  o.add<double>(synth_cmd, "--snr-db", "mixture SNR in dB", [](RunConfig& c, const double& v) { c.mixture.snr_db = v; });
  o.add<std::string>(synth_cmd, "--out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  o.add<int>(synth_cmd, "--count", "number of items", [](RunConfig& c, const int& v) { c.synth_count = v; });
  o.add<std::string>(synth_cmd, "--noise-kind", "gaussian_stationary, sas_synthetic or file",
                     [](RunConfig& c, const std::string& v) { c.mixture.noise_kind = parse_noise_kind(v); });
  o.add<double>(synth_cmd, "--noise-alpha", "exponent of sas_synthetic noise",
                [](RunConfig& c, const double& v) { c.mixture.noise_alpha = v; });
  o.add<std::string>(synth_cmd, "--noise-file", "noise WAV for noise kind 'file'",
                     [](RunConfig& c, const std::string& v) { c.mixture.noise_path = v; });
  o.add_flag(synth_cmd, "--clean-only", "skip the mixtures", [](RunConfig& c) { c.synth_mixtures = false; });
  add_seed(o, synth_cmd);

  CLI::App* noise_cmd = app.add_subcommand("sample-noise", "draw complex SaS samples");
  double noise_alpha = 1.8;
  noise_cmd->add_option("--alpha", noise_alpha, "characteristic exponent in (0, 2]");
  o.add<double>(noise_cmd, "--sigma", "scale", [](RunConfig& c, const double& v) { c.noise_sigma = v; });
  o.add<std::size_t>(noise_cmd, "--count", "number of samples", [](RunConfig& c, const std::size_t& v) { c.noise_count = v; });
  o.add<std::string>(noise_cmd, "--out", "optional .npy dump (complex128)",
                     [](RunConfig& c, const std::string& v) { c.out = v; });
  add_seed(o, noise_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  RunConfig cfg;
  if (config_path.empty()) {
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') config_path = env;
  }
  if (!config_path.empty()) apply_config_file(cfg, config_path);
  o.apply(cfg);
  cfg.propagate_seed();
  cfg.validate();
  if (print_config) err << to_json(cfg).dump(2) << '\n';
  set_threads(cfg.threads);

  if (train_cmd->parsed()) return cmd_train(cfg, synthetic, log_path, out);
  if (enhance_cmd->parsed()) return cmd_enhance(cfg, in_wav, out_wav, out);
  if (eval_cmd->parsed()) return cmd_evaluate(clean_wav, mix_wav, enh_wav, out);
  if (synth_cmd->parsed()) return cmd_synth_data(cfg, out);
  if (noise_cmd->parsed()) return cmd_sample_noise(cfg, noise_alpha, out);
  return kExitUsage;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(argc, argv, out, err);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("asvae");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace asvae::cli
