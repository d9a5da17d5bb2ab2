"""Joint dereverberation, denoising and separation with a source-wise
factorized convolutional beamformer."""
from .model import (
    CbfState,
    Mode,
    PipelineConfig,
    PriorSpectra,
    SingularMatrixError,
    VarianceField,
    WpeFilterSet,
    filter_len_at,
    init_state,
)
from .optimizer import RunResult, apply_cbf, log_likelihood, run, run_cascade
from .stft import MultichannelSpectrogram, StftParams, TimeSignal, analyze, synthesize

__version__ = "0.1.0"
