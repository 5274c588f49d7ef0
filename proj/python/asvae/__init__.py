"""VAE speech prior with alpha-stable noise."""

from ._core import (
    DegenerateModelError,
    FormatError,
    IoError,
    NumericalError,
    default_win_length,
    enhance,
    istft,
    read_wav,
    run_cli,
    sample_impulse,
    sample_sas,
    si_sdr,
    sine_window,
    stft,
    synth_speech_like,
    tail_index,
    write_wav,
)

__all__ = [
    "DegenerateModelError",
    "FormatError",
    "IoError",
    "NumericalError",
    "default_win_length",
    "enhance",
    "istft",
    "read_wav",
    "run_cli",
    "sample_impulse",
    "sample_sas",
    "si_sdr",
    "sine_window",
    "stft",
    "synth_speech_like",
    "tail_index",
    "write_wav",
]
