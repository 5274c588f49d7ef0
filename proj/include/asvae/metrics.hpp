#pragma once

#include <string>

#include "asvae/stft.hpp"

namespace asvae {

// Upper bound returned when the residual vanishes.
inline constexpr double kSiSdrCapDb = 100.0;

// Scale-invariant SDR in dB: the estimate is projected onto the reference
// with the optimal scalar gain. Throws std::invalid_argument on a length
// mismatch or an all-zero reference.
double si_sdr(const Waveform& reference, const Waveform& estimate);

struct EvalReport {
  double si_sdr_db = 0.0;
  double input_si_sdr_db = 0.0;
  double improvement_db = 0.0;

  std::string to_json() const;
};

EvalReport evaluate(const Waveform& clean, const Waveform& mixture, const Waveform& enhanced);

}  // namespace asvae
