#include "asvae/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace asvae {

namespace {

// FFTW's planner is not reentrant; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t n_bytes) : ptr(fftw_malloc(n_bytes)) {
    if (ptr == nullptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  void* ptr;
};

struct FftwPlan {
  ~FftwPlan() {
    if (plan != nullptr) {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(plan);
    }
  }
  fftw_plan plan = nullptr;
};

void check_hop(int win_length, int hop) {
  if (win_length <= 0 || win_length % 4 != 0) {
    throw std::invalid_argument("stft: win_length must be a positive multiple of 4, got " +
                                std::to_string(win_length));
  }
  if (hop != win_length / 4) {
    throw std::invalid_argument("stft: hop must equal win_length/4 (75% overlap), got hop " +
                                std::to_string(hop) + " for win_length " +
                                std::to_string(win_length));
  }
}

}  // namespace

void Waveform::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("waveform: sample_rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("waveform: non-finite sample");
  }
}

void ComplexSpectrogram::validate() const {
  check_hop(win_length, hop);
  if (values.rows() != win_length / 2 + 1) {
    throw std::invalid_argument("spectrogram: F = " + std::to_string(values.rows()) +
                                " does not match win_length/2+1 = " +
                                std::to_string(win_length / 2 + 1));
  }
  if (sample_rate <= 0) throw std::invalid_argument("spectrogram: sample_rate must be positive");
  if (values.cols() != stft_frame_count(signal_length, win_length, hop)) {
    throw std::invalid_argument("spectrogram: frame count " + std::to_string(values.cols()) +
                                " inconsistent with signal_length " +
                                std::to_string(signal_length));
  }
  if (!values.allFinite()) throw std::invalid_argument("spectrogram: non-finite entry");
}

std::vector<double> sine_window(int len) {
  if (len <= 0 || len % 4 != 0) {
    throw std::invalid_argument("sine_window: length must be a positive multiple of 4, got " +
                                std::to_string(len));
  }
  std::vector<double> w(static_cast<std::size_t>(len));
  for (int k = 0; k < len; ++k) {
    w[static_cast<std::size_t>(k)] = std::sin(std::numbers::pi * (k + 0.5) / len);
  }
  return w;
}

int default_win_length(int sample_rate) {
  if (sample_rate <= 0) throw std::invalid_argument("default_win_length: sample_rate must be positive");
  const double target = std::round(0.064 * sample_rate);
  const int len = static_cast<int>(std::lround(target / 4.0)) * 4;
  return len < 4 ? 4 : len;
}

Eigen::Index stft_frame_count(std::size_t length, int win_length, int hop) {
  const auto pad = static_cast<std::size_t>(win_length - hop);
  if (length == 0) return 0;
  return static_cast<Eigen::Index>((pad + length - 1) / static_cast<std::size_t>(hop) + 1);
}

ComplexSpectrogram stft(const Waveform& w, int win_length, int hop) {
  if (w.samples.empty()) throw std::invalid_argument("stft: empty waveform");
  w.validate();
  check_hop(win_length, hop);

  const auto window = sine_window(win_length);
  const std::size_t pad = static_cast<std::size_t>(win_length - hop);
  const Eigen::Index n_frames = stft_frame_count(w.size(), win_length, hop);
  const Eigen::Index n_bins = win_length / 2 + 1;

  std::vector<double> padded(static_cast<std::size_t>((n_frames - 1) * hop + win_length), 0.0);
  std::copy(w.samples.begin(), w.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));

  ComplexSpectrogram out;
  out.values.resize(n_bins, n_frames);
  out.win_length = win_length;
  out.hop = hop;
  out.sample_rate = w.sample_rate;
  out.signal_length = w.size();

  FftwBuffer in(sizeof(double) * static_cast<std::size_t>(win_length));
  FftwBuffer spec(sizeof(fftw_complex) * static_cast<std::size_t>(n_bins));
  auto* frame = static_cast<double*>(in.ptr);
  auto* bins = static_cast<fftw_complex*>(spec.ptr);
  FftwPlan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.plan = fftw_plan_dft_r2c_1d(win_length, frame, bins, FFTW_ESTIMATE);
  }

  for (Eigen::Index n = 0; n < n_frames; ++n) {
    const double* src = padded.data() + n * hop;
    for (int k = 0; k < win_length; ++k) frame[k] = src[k] * window[static_cast<std::size_t>(k)];
    fftw_execute(plan.plan);
    for (Eigen::Index f = 0; f < n_bins; ++f) out.values(f, n) = {bins[f][0], bins[f][1]};
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s) {
  s.validate();
  const int win_length = s.win_length;
  const int hop = s.hop;
  const Eigen::Index n_frames = s.frames();
  const Eigen::Index n_bins = s.freq_bins();
  const auto window = sine_window(win_length);
  const std::size_t pad = static_cast<std::size_t>(win_length - hop);

  Waveform out;
  out.sample_rate = s.sample_rate;
  if (n_frames == 0) return out;

  std::vector<double> acc(static_cast<std::size_t>((n_frames - 1) * hop + win_length), 0.0);

  FftwBuffer spec(sizeof(fftw_complex) * static_cast<std::size_t>(n_bins));
  FftwBuffer buf(sizeof(double) * static_cast<std::size_t>(win_length));
  auto* bins = static_cast<fftw_complex*>(spec.ptr);
  auto* frame = static_cast<double*>(buf.ptr);
  FftwPlan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan.plan = fftw_plan_dft_c2r_1d(win_length, bins, frame, FFTW_ESTIMATE);
  }

  // Squared sine window summed over the 4 overlapping shifts is exactly 2.
  const double scale = 1.0 / (static_cast<double>(win_length) * 2.0);
  for (Eigen::Index n = 0; n < n_frames; ++n) {
    for (Eigen::Index f = 0; f < n_bins; ++f) {
      bins[f][0] = s.values(f, n).real();
      bins[f][1] = s.values(f, n).imag();
    }
    // c2r destroys its input; the buffer is refilled every frame.
    fftw_execute(plan.plan);
    double* dst = acc.data() + n * hop;
    for (int k = 0; k < win_length; ++k) {
      dst[k] += frame[k] * window[static_cast<std::size_t>(k)] * scale;
    }
  }

  out.samples.assign(acc.begin() + static_cast<std::ptrdiff_t>(pad),
                     acc.begin() + static_cast<std::ptrdiff_t>(pad + s.signal_length));
  return out;
}

}  // namespace asvae
