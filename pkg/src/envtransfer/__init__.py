"""Environment-sound style transfer on spectrograms, with a mixing baseline
and classifier/embedding evaluation.

The submodules are importable on their own; the names below are the ones
most scripts need.
"""
__version__ = "0.1.0"

from .audio_io import Waveform, read_wav, standardize, write_wav
from .config import RunConfig
from .dsp import MagnitudeGrid, StftParams, griffin_lim, istft, log_magnitude, stft
from .mixing import mix
from .transfer import TransferConfig, run_transfer

__all__ = [
    "Waveform", "read_wav", "write_wav", "standardize", "StftParams", "stft", "istft",
    "log_magnitude", "griffin_lim", "MagnitudeGrid", "TransferConfig", "run_transfer", "mix",
    "RunConfig", "__version__",
]
