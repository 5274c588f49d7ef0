#include "asvae/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include "asvae/errors.hpp"

namespace asvae {

namespace {

using Setter = std::function<void(RunConfig&, const nlohmann::json&)>;

template <class T>
T as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw std::invalid_argument("expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw std::invalid_argument("expected a non-negative integer");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw std::invalid_argument("expected a number");
    } else {
      if (!v.is_string()) throw std::invalid_argument("expected a string");
    }
    return v.get<T>();
  } catch (const std::exception& e) {
    throw std::invalid_argument("config key '" + key + "': " + e.what());
  }
}

#define ASVAE_KEY(name, type, field) \
  {name, [](RunConfig& c, const nlohmann::json& v) { c.field = as<type>(v, name); }}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      ASVAE_KEY("seed", std::uint64_t, seed),
      ASVAE_KEY("threads", int, threads),
      ASVAE_KEY("stft.win_length", int, win_length),
      ASVAE_KEY("stft.sample_rate", int, sample_rate),
      ASVAE_KEY("train.latent_dim", int, train.latent_dim),
      ASVAE_KEY("train.hidden_dim", int, train.hidden_dim),
      ASVAE_KEY("train.learning_rate", double, train.learning_rate),
      ASVAE_KEY("train.beta1", double, train.beta1),
      ASVAE_KEY("train.beta2", double, train.beta2),
      ASVAE_KEY("train.adam_eps", double, train.adam_eps),
      ASVAE_KEY("train.batch_size", int, train.batch_size),
      ASVAE_KEY("train.max_epochs", int, train.max_epochs),
      ASVAE_KEY("train.patience", int, train.patience),
      ASVAE_KEY("train.validation_fraction", double, train.validation_fraction),
      ASVAE_KEY("train.frames", std::size_t, train_frames),
      {"train.frozen",
       [](RunConfig& c, const nlohmann::json& v) {
         if (!v.is_array()) throw std::invalid_argument("config key 'train.frozen': expected an array");
         c.train.frozen.clear();
         for (const auto& name : v) c.train.frozen.insert(as<std::string>(name, "train.frozen"));
       }},
      ASVAE_KEY("mcem.alpha", double, mcem.alpha),
      ASVAE_KEY("mcem.n_iters", int, mcem.n_iters),
      ASVAE_KEY("mcem.gibbs_iters", int, mcem.gibbs_iters),
      ASVAE_KEY("mcem.burn_in", int, mcem.burn_in),
      ASVAE_KEY("mcem.eps2", double, mcem.eps2),
      ASVAE_KEY("mcem.mstep_inner_iters", int, mcem.mstep_inner_iters),
      ASVAE_KEY("mcem.recon_iters", int, mcem.recon_iters),
      ASVAE_KEY("mcem.recon_burn_in", int, mcem.recon_burn_in),
      ASVAE_KEY("mixture.snr_db", double, mixture.snr_db),
      {"mixture.noise_kind",
       [](RunConfig& c, const nlohmann::json& v) {
         c.mixture.noise_kind = parse_noise_kind(as<std::string>(v, "mixture.noise_kind"));
       }},
      ASVAE_KEY("mixture.noise_alpha", double, mixture.noise_alpha),
      ASVAE_KEY("mixture.noise_path", std::string, mixture.noise_path),
      ASVAE_KEY("synth.frames", std::size_t, synth_frames),
      ASVAE_KEY("synth.count", int, synth_count),
      ASVAE_KEY("synth.mixtures", bool, synth_mixtures),
      ASVAE_KEY("noise.sigma", double, noise_sigma),
      ASVAE_KEY("noise.count", std::size_t, noise_count),
      ASVAE_KEY("paths.weights", std::string, weights),
      ASVAE_KEY("paths.corpus", std::string, corpus),
      ASVAE_KEY("paths.out", std::string, out),
      ASVAE_KEY("paths.diagnostics", std::string, diagnostics),
  };
  return table;
}

#undef ASVAE_KEY

}  // namespace

void RunConfig::validate() const {
  if (threads < 0) throw std::invalid_argument("threads must be >= 0");
  if (win_length != 0 && (win_length < 4 || win_length % 4 != 0)) {
    throw std::invalid_argument("stft.win_length must be 0 or a positive multiple of 4");
  }
  if (sample_rate <= 0) throw std::invalid_argument("stft.sample_rate must be positive");
  train.validate();
  mcem.validate();
  mixture.validate();
  if (synth_frames < 1) throw std::invalid_argument("synth.frames must be >= 1");
  if (synth_count < 1) throw std::invalid_argument("synth.count must be >= 1");
  if (!(noise_sigma > 0.0)) throw std::invalid_argument("noise.sigma must be positive");
  if (noise_count < 1) throw std::invalid_argument("noise.count must be >= 1");
}

void RunConfig::propagate_seed() {
  train.seed = seed;
  mcem.seed = seed;
  mixture.seed = seed;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["stft.win_length"] = c.win_length;
  j["stft.sample_rate"] = c.sample_rate;
  j["train.latent_dim"] = c.train.latent_dim;
  j["train.hidden_dim"] = c.train.hidden_dim;
  j["train.learning_rate"] = c.train.learning_rate;
  j["train.beta1"] = c.train.beta1;
  j["train.beta2"] = c.train.beta2;
  j["train.adam_eps"] = c.train.adam_eps;
  j["train.batch_size"] = c.train.batch_size;
  j["train.max_epochs"] = c.train.max_epochs;
  j["train.patience"] = c.train.patience;
  j["train.validation_fraction"] = c.train.validation_fraction;
  j["train.frames"] = c.train_frames;
  j["train.frozen"] = std::vector<std::string>(c.train.frozen.begin(), c.train.frozen.end());
  j["mcem.alpha"] = c.mcem.alpha;
  j["mcem.n_iters"] = c.mcem.n_iters;
  j["mcem.gibbs_iters"] = c.mcem.gibbs_iters;
  j["mcem.burn_in"] = c.mcem.burn_in;
  j["mcem.eps2"] = c.mcem.eps2;
  j["mcem.mstep_inner_iters"] = c.mcem.mstep_inner_iters;
  j["mcem.recon_iters"] = c.mcem.recon_iters;
  j["mcem.recon_burn_in"] = c.mcem.recon_burn_in;
  j["mixture.snr_db"] = c.mixture.snr_db;
  j["mixture.noise_kind"] = to_string(c.mixture.noise_kind);
  j["mixture.noise_alpha"] = c.mixture.noise_alpha;
  j["mixture.noise_path"] = c.mixture.noise_path.string();
  j["synth.frames"] = c.synth_frames;
  j["synth.count"] = c.synth_count;
  j["synth.mixtures"] = c.synth_mixtures;
  j["noise.sigma"] = c.noise_sigma;
  j["noise.count"] = c.noise_count;
  j["paths.weights"] = c.weights.string();
  j["paths.corpus"] = c.corpus.string();
  j["paths.out"] = c.out.string();
  j["paths.diagnostics"] = c.diagnostics.string();
  return j;
}

void apply_json(RunConfig& cfg, const nlohmann::json& flat) {
  if (!flat.is_object()) throw std::invalid_argument("config must be a JSON object");
  const auto& table = setters();
  for (const auto& [key, value] : flat.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    it->second(cfg, value);
  }
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config file " + path.string() + ": " + e.what());
  }
  apply_json(cfg, j);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : setters()) keys.push_back(k);
  return keys;
}

}  // namespace asvae
