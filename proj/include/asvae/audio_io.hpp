#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "asvae/stft.hpp"

namespace asvae {

enum class WavEncoding { Pcm16, Float32 };

// Mono RIFF/WAVE, 16-bit integer or 32-bit float PCM (WAVE_FORMAT_EXTENSIBLE
// accepted). Integer samples are divided by 32768. Throws FormatError naming
// the offending header field, IoError when the file cannot be read.
Waveform read_wav(const std::filesystem::path& path);

// Float32 output round-trips read_wav bit-exactly for float-representable
// samples. Pcm16 rounds x * 32768 and saturates.
void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::Float32);

struct MixResult {
  Waveform mixture;
  Waveform scaled_noise;
  double noise_gain = 0.0;  // scaled_noise = noise_gain * noise
};

// Scales `noise` (truncated to the speech length) so that
// 10 log10(|speech|^2 / |scaled_noise|^2) = snr_db.
MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db);

// Harmonic "speech": 50-250 ms segments, each either silent or voiced with a
// constant fundamental on the semitone grid 80 Hz .. 285 Hz, 1 to 10
// harmonics with a random spectral tilt, breath noise and a sin^4 envelope.
// A faint white floor covers everything. Length n_frames * hop for the
// default window at `sample_rate`; peak amplitude at most 1.
Waveform synth_speech_like(std::size_t n_frames, std::uint64_t seed, int sample_rate = 16000);

enum class NoiseKind { GaussianStationary, SasSynthetic, File };

NoiseKind parse_noise_kind(const std::string& name);
std::string to_string(NoiseKind kind);

struct MixtureSpec {
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  NoiseKind noise_kind = NoiseKind::GaussianStationary;
  double noise_alpha = 1.5;          // SasSynthetic only
  std::filesystem::path noise_path;  // File only

  void validate() const;
};

// Noise of `length` samples. GaussianStationary is white unit-variance;
// SasSynthetic draws an isotropic complex SaS coefficient per STFT bin and
// resynthesizes; File reads noise_path (which must be long enough).
Waveform synth_noise(const MixtureSpec& spec, std::size_t length, int sample_rate = 16000);

}  // namespace asvae
