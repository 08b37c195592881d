"""Multichannel speech enhancement front-end.

Dereverberation (WPE), unsupervised CGMM masks, oracle IRM/PSM masks,
MVDR / PMWF / GEV+BAN beamforming, OMLSA post-filtering and mixture
simulation, on complex STFT data shaped (channels, frames, bins).
"""

from ._backend import BACKEND
from .beamform import (
    BeamformerWeights,
    SteeringVector,
    apply_beamformer,
    ban_postfilter,
    gev_weights,
    mvdr_weights,
    pmwf_weights,
    select_reference,
    steering_vector,
)
from .cgmm import CgmmParams, CgmmResult, cgmm_fit, cgmm_log_likelihood
from .io import Waveform, read_mask, read_wav, write_mask, write_wav
from .masks import CovarianceSet, TFMask, estimate_covariances, irm, mask_mse, psm
from .omlsa import OmlsaConfig, omlsa_denoise
from .simulate import MixSpec, MixtureRecord, energy_vad, mix, rescale_to_level, snr_db
from .stft import MultichannelSpectrogram, StftConfig, istft, log_power_spectrogram, stft
from .wpe import WpeConfig, wpe_dereverb

__version__ = "0.1.0"
