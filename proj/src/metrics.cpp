#include "asvae/metrics.hpp"

#include <cmath>
#include <algorithm>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace asvae {

double si_sdr(const Waveform& reference, const Waveform& estimate) {
  if (reference.size() != estimate.size()) {
    throw std::invalid_argument("si_sdr: length mismatch (" + std::to_string(reference.size()) +
                                " vs " + std::to_string(estimate.size()) + ")");
  }
  double ref_energy = 0.0;
  double cross = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    ref_energy += reference.samples[i] * reference.samples[i];
    cross += reference.samples[i] * estimate.samples[i];
  }
  if (!(ref_energy > 0.0)) throw std::invalid_argument("si_sdr: reference is all zero");
  const double gain = cross / ref_energy;
  double target = 0.0;
  double residual = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double t = gain * reference.samples[i];
    const double r = estimate.samples[i] - t;
    target += t * t;
    residual += r * r;
  }
  if (target == 0.0) return -kSiSdrCapDb;
  if (residual == 0.0) return kSiSdrCapDb;
  return std::min(kSiSdrCapDb, 10.0 * std::log10(target / residual));
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["si_sdr_db"] = si_sdr_db;
  j["input_si_sdr_db"] = input_si_sdr_db;
  j["improvement_db"] = improvement_db;
  return j.dump(2);
}

EvalReport evaluate(const Waveform& clean, const Waveform& mixture, const Waveform& enhanced) {
  EvalReport r;
  r.si_sdr_db = si_sdr(clean, enhanced);
  r.input_si_sdr_db = si_sdr(clean, mixture);
  r.improvement_db = r.si_sdr_db - r.input_si_sdr_db;
  return r;
}

}  // namespace asvae
