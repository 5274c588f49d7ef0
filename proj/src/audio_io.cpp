#include "asvae/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "asvae/errors.hpp"
#include "asvae/rng.hpp"
#include "asvae/stable.hpp"

namespace asvae {

static_assert(std::endian::native == std::endian::little, "WAV codec assumes a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <class T>
T load_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <class T>
void store_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

void store_tag(std::vector<std::uint8_t>& out, const char (&tag)[5]) {
  out.insert(out.end(), tag, tag + 4);
}

std::string where(const std::filesystem::path& path) { return path.string() + ": "; }

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(where(path) + "cannot open for reading");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0) {
    throw FormatError(where(path) + "RIFF tag missing");
  }
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where(path) + "WAVE form type missing");
  }

  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::size_t size = load_le<std::uint32_t>(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || size > avail) throw FormatError(where(path) + "fmt chunk truncated");
      format = load_le<std::uint16_t>(chunk + 8);
      channels = load_le<std::uint16_t>(chunk + 10);
      sample_rate = load_le<std::uint32_t>(chunk + 12);
      bits = load_le<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError(where(path) + "extensible fmt chunk truncated");
        format = load_le<std::uint16_t>(chunk + 32);  // first two bytes of the SubFormat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      // Some writers leave the size unset when streaming; take what is there.
      data = chunk + 8;
      data_size = std::min(size, avail);
      break;
    }
    pos = body + size + (size & 1U);
  }
  if (!have_fmt) throw FormatError(where(path) + "fmt chunk missing");
  if (data == nullptr) throw FormatError(where(path) + "data chunk missing");
  if (channels != 1) {
    throw FormatError(where(path) + "unsupported channel count " + std::to_string(channels) +
                      " (mono only)");
  }
  if (sample_rate == 0) throw FormatError(where(path) + "sample rate is zero");

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  if (format == kFormatPcm && bits == 16) {
    const std::size_t n = data_size / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      w.samples[i] = static_cast<double>(load_le<std::int16_t>(data + 2 * i)) / 32768.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    const std::size_t n = data_size / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      w.samples[i] = static_cast<double>(load_le<float>(data + 4 * i));
    }
  } else {
    throw FormatError(where(path) + "unsupported encoding: format tag " + std::to_string(format) +
                      " with bits per sample " + std::to_string(bits));
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w, WavEncoding encoding) {
  w.validate();
  const bool pcm = encoding == WavEncoding::Pcm16;
  const std::uint16_t bytes_per_sample = pcm ? 2 : 4;
  const std::size_t data_size = w.size() * bytes_per_sample;
  if (data_size > 0xFFFFFFFFu - 36) throw std::invalid_argument("write_wav: signal too long");

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  store_tag(out, "RIFF");
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(36 + data_size));
  store_tag(out, "WAVE");
  store_tag(out, "fmt ");
  store_le<std::uint32_t>(out, 16);
  store_le<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
  store_le<std::uint16_t>(out, 1);
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate));
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.sample_rate) * bytes_per_sample);
  store_le<std::uint16_t>(out, bytes_per_sample);
  store_le<std::uint16_t>(out, static_cast<std::uint16_t>(8 * bytes_per_sample));
  store_tag(out, "data");
  store_le<std::uint32_t>(out, static_cast<std::uint32_t>(data_size));
  for (double s : w.samples) {
    if (pcm) {
      const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
      store_le<std::int16_t>(out, static_cast<std::int16_t>(q));
    } else {
      store_le<float>(out, static_cast<float>(s));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(where(path) + "cannot open for writing");
  f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError(where(path) + "write failed");
}

MixResult mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db) {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("mix_at_snr: snr_db must be finite");
  if (speech.sample_rate != noise.sample_rate) {
    throw std::invalid_argument("mix_at_snr: sample rates differ (" +
                                std::to_string(speech.sample_rate) + " vs " +
                                std::to_string(noise.sample_rate) + ")");
  }
  if (noise.size() < speech.size()) {
    throw std::invalid_argument("mix_at_snr: noise shorter than speech");
  }
  double es = 0.0;
  double en = 0.0;
  for (std::size_t i = 0; i < speech.size(); ++i) {
    es += speech.samples[i] * speech.samples[i];
    en += noise.samples[i] * noise.samples[i];
  }
  if (!(es > 0.0)) throw std::invalid_argument("mix_at_snr: speech has zero energy");
  if (!(en > 0.0)) throw std::invalid_argument("mix_at_snr: noise has zero energy");
  const double scale = std::sqrt(es / (en * std::pow(10.0, snr_db / 10.0)));

  MixResult r;
  r.noise_gain = scale;
  r.scaled_noise.sample_rate = speech.sample_rate;
  r.mixture.sample_rate = speech.sample_rate;
  r.scaled_noise.samples.resize(speech.size());
  r.mixture.samples.resize(speech.size());
  for (std::size_t i = 0; i < speech.size(); ++i) {
    r.scaled_noise.samples[i] = scale * noise.samples[i];
    r.mixture.samples[i] = speech.samples[i] + r.scaled_noise.samples[i];
  }
  return r;
}

Waveform synth_speech_like(std::size_t n_frames, std::uint64_t seed, int sample_rate) {
  // Harmonic peak level, aspiration noise relative to it, absolute floor.
  static constexpr double kPeak = 0.2;
  static constexpr double kBreath = 0.1;
  static constexpr double kFloor = 7.5e-4;
  if (n_frames < 1) throw std::invalid_argument("synth_speech_like: n_frames must be >= 1");
  const int hop = default_win_length(sample_rate) / 4;
  const std::size_t length = n_frames * static_cast<std::size_t>(hop);
  const double fs = sample_rate;
  RngStream rng(seed, 0);

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(length, 0.0);

  std::size_t pos = 0;
  while (pos < length) {
    const auto seg = static_cast<std::size_t>((0.05 + 0.2 * rng.uniform()) * fs);
    const std::size_t end = std::min(length, pos + seg);
    const bool voiced = rng.uniform() < 0.7;
    if (voiced) {
      // Fundamentals on a semitone grid from 80 Hz up to 300 Hz.
      const int semitone = static_cast<int>(rng.next_u64() % 23);
      const double f0 = 80.0 * std::exp2(semitone / 12.0);
      const int max_harmonics = static_cast<int>(std::min(10.0, 0.45 * fs / f0));
      const int n_harm = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(max_harmonics));
      const double tilt = 0.5 + 1.5 * rng.uniform();
      const double level = 0.2 + 0.8 * rng.uniform();
      std::vector<double> amp(static_cast<std::size_t>(n_harm));
      std::vector<double> phase(static_cast<std::size_t>(n_harm));
      double amp_sum = 0.0;
      for (int k = 0; k < n_harm; ++k) {
        amp[static_cast<std::size_t>(k)] = std::pow(k + 1.0, -tilt);
        phase[static_cast<std::size_t>(k)] = 2.0 * std::numbers::pi * rng.uniform();
        amp_sum += amp[static_cast<std::size_t>(k)];
      }
      const double n_seg = static_cast<double>(end - pos);
      for (std::size_t i = pos; i < end; ++i) {
        const double t = static_cast<double>(i - pos);
        const double env = std::sin(std::numbers::pi * (t + 0.5) / n_seg);
        double s = 0.0;
        for (int k = 0; k < n_harm; ++k) {
          s += amp[static_cast<std::size_t>(k)] *
               std::sin(2.0 * std::numbers::pi * f0 * (k + 1) * t / fs + phase[static_cast<std::size_t>(k)]);
        }
        // Aspiration noise rides on the same envelope as the harmonics.
        w.samples[i] = kPeak * level * env * env * (s / amp_sum + kBreath * rng.normal());
      }
    }
    pos = end;
  }
  // Background floor so no bin has exactly zero power.
  for (double& s : w.samples) s += kFloor * rng.normal();
  double peak = 0.0;
  for (double s : w.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    for (double& s : w.samples) s /= peak;
  }
  return w;
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gaussian_stationary") return NoiseKind::GaussianStationary;
  if (name == "sas_synthetic") return NoiseKind::SasSynthetic;
  if (name == "file") return NoiseKind::File;
  throw std::invalid_argument("unknown noise kind '" + name +
                              "' (expected gaussian_stationary, sas_synthetic or file)");
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::GaussianStationary: return "gaussian_stationary";
    case NoiseKind::SasSynthetic: return "sas_synthetic";
    case NoiseKind::File: return "file";
  }
  return "unknown";
}

void MixtureSpec::validate() const {
  if (!std::isfinite(snr_db)) throw std::invalid_argument("mixture: snr_db must be finite");
  if (noise_kind == NoiseKind::SasSynthetic) (void)AlphaParam(noise_alpha);
  if (noise_kind == NoiseKind::File && noise_path.empty()) {
    throw std::invalid_argument("mixture: noise_kind file needs a noise path");
  }
}

Waveform synth_noise(const MixtureSpec& spec, std::size_t length, int sample_rate) {
  spec.validate();
  if (length == 0) throw std::invalid_argument("synth_noise: length must be positive");
  Waveform w;
  w.sample_rate = sample_rate;
  switch (spec.noise_kind) {
    case NoiseKind::GaussianStationary: {
      RngStream rng(spec.seed, 1);
      w.samples.resize(length);
      for (double& s : w.samples) s = rng.normal();
      break;
    }
    case NoiseKind::SasSynthetic: {
      RngStream rng(spec.seed, 2);
      const AlphaParam alpha(spec.noise_alpha);
      const int win = default_win_length(sample_rate);
      ComplexSpectrogram grid;
      grid.win_length = win;
      grid.hop = win / 4;
      grid.sample_rate = sample_rate;
      grid.signal_length = length;
      grid.values.resize(win / 2 + 1, stft_frame_count(length, win, win / 4));
      for (Eigen::Index n = 0; n < grid.values.cols(); ++n) {
        for (Eigen::Index f = 0; f < grid.values.rows(); ++f) {
          grid.values(f, n) = sample_sas_complex(alpha, 1.0, rng);
        }
      }
      w = istft(grid);
      break;
    }
    case NoiseKind::File: {
      w = read_wav(spec.noise_path);
      if (w.sample_rate != sample_rate) {
        throw std::invalid_argument("noise file sample rate " + std::to_string(w.sample_rate) +
                                    " differs from " + std::to_string(sample_rate));
      }
      if (w.size() < length) throw std::invalid_argument("noise file shorter than the speech");
      w.samples.resize(length);
      break;
    }
  }
  return w;
}

}  // namespace asvae
