#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "asvae/audio_io.hpp"
#include "asvae/mcem.hpp"
#include "asvae/vae.hpp"
#include "json.hpp"

namespace asvae {

// Environment variable naming a config file read when no --config is given.
inline constexpr const char* kConfigEnvVar = "ASVAE_CONFIG";

// Every tunable of a run. Serialized as one JSON object with flat dotted
// keys ("mcem.alpha", "train.latent_dim", ...).
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: all available cores

  int win_length = 0;  // 0: 64 ms at the signal's sample rate
  int sample_rate = 16000;

  TrainConfig train;
  std::size_t train_frames = 2000;  // synthetic training set size

  McemConfig mcem;

  MixtureSpec mixture;
  std::size_t synth_frames = 188;  // per synthesized clean file (about 3 s)
  int synth_count = 1;
  bool synth_mixtures = true;

  double noise_sigma = 1.0;
  std::size_t noise_count = 1000000;

  std::filesystem::path weights;
  std::filesystem::path corpus;
  std::filesystem::path out;
  std::filesystem::path diagnostics;

  // Throws std::invalid_argument naming the first bad value.
  void validate() const;

  // Copies `seed` into the per-component configs.
  void propagate_seed();
};

nlohmann::ordered_json to_json(const RunConfig& cfg);

// Applies every key of a flat JSON object. Unknown keys and ill-typed values
// raise std::invalid_argument naming the key.
void apply_json(RunConfig& cfg, const nlohmann::json& flat);

// Reads a JSON file and applies it. Missing file: IoError; malformed JSON:
// FormatError.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

std::vector<std::string> config_keys();

}  // namespace asvae
