#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "asvae/audio_io.hpp"
#include "asvae/cli.hpp"
#include "asvae/errors.hpp"
#include "asvae/mcem.hpp"
#include "asvae/metrics.hpp"
#include "asvae/stable.hpp"
#include "asvae/stft.hpp"
#include "asvae/vae.hpp"

namespace py = pybind11;
using namespace asvae;

namespace {

Waveform to_waveform(const std::vector<double>& samples, int sample_rate) {
  Waveform w;
  w.samples = samples;
  w.sample_rate = sample_rate;
  return w;
}

py::array_t<double> to_array(const Waveform& w) {
  return py::array_t<double>(static_cast<py::ssize_t>(w.size()), w.samples.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "VAE speech prior with alpha-stable noise: STFT, sampling, enhancement";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<DegenerateModelError>(m, "DegenerateModelError", numerical.ptr());

  m.def("default_win_length", &default_win_length, py::arg("sample_rate"));
  m.def("sine_window", &sine_window, py::arg("length"));

  m.def(
      "stft",
      [](const std::vector<double>& x, int sample_rate, int win_length) {
        const Waveform w = to_waveform(x, sample_rate);
        const int win = win_length > 0 ? win_length : default_win_length(sample_rate);
        return stft(w, win).values;
      },
      py::arg("signal"), py::arg("sample_rate") = 16000, py::arg("win_length") = 0,
      "Complex F x N STFT (sine window, 75% overlap).");

  m.def(
      "istft",
      [](const Eigen::MatrixXcd& values, std::size_t length, int sample_rate, int win_length) {
        ComplexSpectrogram s;
        s.values = values;
        s.win_length = win_length > 0 ? win_length : default_win_length(sample_rate);
        s.hop = s.win_length / 4;
        s.sample_rate = sample_rate;
        s.signal_length = length;
        return to_array(istft(s));
      },
      py::arg("values"), py::arg("length"), py::arg("sample_rate") = 16000, py::arg("win_length") = 0);

  m.def(
      "sample_sas",
      [](double alpha, double sigma, std::size_t count, std::uint64_t seed) {
        const AlphaParam a(alpha);
        RngStream rng(seed, 0);
        py::array_t<std::complex<double>> out(static_cast<py::ssize_t>(count));
        auto view = out.mutable_unchecked<1>();
        for (std::size_t i = 0; i < count; ++i) view(static_cast<py::ssize_t>(i)) = sample_sas_complex(a, sigma, rng);
        return out;
      },
      py::arg("alpha"), py::arg("sigma") = 1.0, py::arg("count") = 1, py::arg("seed") = 0,
      "Isotropic complex SaS samples.");

  m.def(
      "sample_impulse",
      [](double alpha, std::size_t count, std::uint64_t seed) {
        const PositiveStableSampler s = impulse_sampler(AlphaParam(alpha));
        RngStream rng(seed, 0);
        std::vector<double> out(count);
        for (double& v : out) v = s(rng);
        return out;
      },
      py::arg("alpha"), py::arg("count") = 1, py::arg("seed") = 0);

  m.def(
      "tail_index",
      [](const std::vector<double>& values, double top_fraction) {
        return tail_index_estimate(values, top_fraction);
      },
      py::arg("values"), py::arg("top_fraction") = 0.01);

  m.def(
      "si_sdr",
      [](const std::vector<double>& ref, const std::vector<double>& est) {
        return si_sdr(to_waveform(ref, 16000), to_waveform(est, 16000));
      },
      py::arg("reference"), py::arg("estimate"));

  m.def(
      "read_wav",
      [](const std::filesystem::path& path) {
        const Waveform w = read_wav(path);
        return py::make_tuple(to_array(w), w.sample_rate);
      },
      py::arg("path"), "Returns (samples, sample_rate).");

  m.def(
      "write_wav",
      [](const std::filesystem::path& path, const std::vector<double>& x, int sample_rate, bool pcm16) {
        write_wav(path, to_waveform(x, sample_rate), pcm16 ? WavEncoding::Pcm16 : WavEncoding::Float32);
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("pcm16") = false);

  m.def(
      "synth_speech_like",
      [](std::size_t n_frames, std::uint64_t seed, int sample_rate) {
        return to_array(synth_speech_like(n_frames, seed, sample_rate));
      },
      py::arg("n_frames"), py::arg("seed") = 0, py::arg("sample_rate") = 16000);

  m.def(
      "enhance",
      [](const std::vector<double>& x, const std::filesystem::path& weights, int sample_rate,
         double alpha, int mcem_iters, int gibbs_iters, int burn_in, std::uint64_t seed) {
        McemConfig cfg;
        cfg.alpha = alpha;
        cfg.n_iters = mcem_iters;
        cfg.gibbs_iters = gibbs_iters;
        cfg.burn_in = burn_in;
        cfg.seed = seed;
        const VaeSpeechModel model(load_weights(weights));
        EnhanceResult r;
        {
          py::gil_scoped_release release;
          r = enhance(to_waveform(x, sample_rate), model, cfg);
        }
        return to_array(r.enhanced);
      },
      py::arg("signal"), py::arg("weights"), py::arg("sample_rate") = 16000, py::arg("alpha") = 1.8,
      py::arg("mcem_iters") = 200, py::arg("gibbs_iters") = 40, py::arg("burn_in") = 30,
      py::arg("seed") = 0);

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out;
        std::ostringstream err;
        const int code = cli::run(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (code, stdout, stderr).");
}
