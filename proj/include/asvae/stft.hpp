#pragma once

#include <Eigen/Dense>
#include <vector>

namespace asvae {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  // Throws std::invalid_argument on a non-positive rate or non-finite sample.
  void validate() const;
};

// F x N grid of STFT coefficients, one column per frame. `signal_length`
// is the length of the waveform the grid was computed from, so synthesis
// can crop the edge padding back off.
struct ComplexSpectrogram {
  Eigen::MatrixXcd values;
  int win_length = 1024;
  int hop = 256;
  int sample_rate = 16000;
  std::size_t signal_length = 0;

  Eigen::Index freq_bins() const { return values.rows(); }
  Eigen::Index frames() const { return values.cols(); }
  Eigen::MatrixXd power() const { return values.cwiseAbs2(); }
  void validate() const;
};

// w[k] = sin(pi (k + 0.5) / len). `len` must be a positive multiple of 4.
std::vector<double> sine_window(int len);

// round(0.064 * sample_rate), rounded to the nearest multiple of 4.
int default_win_length(int sample_rate);

// Frame count for a signal of `length` samples, padded by win - hop zeros
// on both sides.
Eigen::Index stft_frame_count(std::size_t length, int win_length, int hop);

ComplexSpectrogram stft(const Waveform& w, int win_length, int hop);
inline ComplexSpectrogram stft(const Waveform& w, int win_length) {
  return stft(w, win_length, win_length / 4);
}
inline ComplexSpectrogram stft(const Waveform& w) {
  return stft(w, default_win_length(w.sample_rate));
}

Waveform istft(const ComplexSpectrogram& s);

}  // namespace asvae
