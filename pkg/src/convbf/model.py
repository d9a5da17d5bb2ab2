"""Configuration and parameter containers shared by the estimation modules.

Index conventions (0-based): speech sources are ``0 .. J-1``, the noise
slot is ``J``. WPE filters are stored for slots ``0 .. J``; every noise
output ``j >= J`` reuses slot ``J``.
"""
from collections import Counter
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

PAPER_SCHEDULE = ((800.0, 20), (1500.0, 16), (8000.0, 8))


class SingularMatrixError(np.linalg.LinAlgError):
    """Raised when a linear system cannot be solved even after loading."""

    def __init__(self, what, freq, source=None):
        where = f"f={freq}" if source is None else f"f={freq}, j={source}"
        super().__init__(f"singular {what} at {where}")
        self.freq = freq
        self.source = source


class Mode(str, Enum):
    BLIND_IVE = "blind-ive"
    BLIND_COARSE_FINE = "blind-coarse-fine"
    NN_GUIDED = "nn-guided"


@dataclass
class PipelineConfig:
    num_mics: int
    num_sources: int
    prediction_delay: int = 2
    filter_len_schedule: tuple = PAPER_SCHEDULE
    wpe_iters: int = 10
    ive_iters: int = 100
    mode: Mode = Mode.BLIND_COARSE_FINE
    alpha: float = 1.0
    reference_mic: int = 0
    # None: 1e-8 times the mean observed power, resolved in init_state
    epsilon_var: float = None
    epsilon_reg: float = 1e-6
    track_steps: bool = True

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.filter_len_schedule = tuple(
            (float(hz), int(taps)) for hz, taps in self.filter_len_schedule
        )
        if not 1 <= self.num_sources < self.num_mics:
            raise ValueError(
                f"need 1 <= J < M, got J={self.num_sources}, M={self.num_mics}"
            )
        if self.prediction_delay < 1:
            raise ValueError("prediction delay must be >= 1")
        if not self.filter_len_schedule:
            raise ValueError("empty filter length schedule")
        bounds = [hz for hz, _ in self.filter_len_schedule]
        if bounds != sorted(bounds):
            raise ValueError("schedule bounds must be increasing")
        for _, taps in self.filter_len_schedule:
            if taps <= self.prediction_delay:
                raise ValueError(
                    f"filter length {taps} must exceed delay {self.prediction_delay}"
                )
        if self.wpe_iters < 0 or self.ive_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.reference_mic < self.num_mics:
            raise ValueError("reference_mic out of range")
        if self.epsilon_var is not None and self.epsilon_var <= 0:
            raise ValueError("epsilon_var must be positive")
        if self.epsilon_reg < 0:
            raise ValueError("epsilon_reg must be non-negative")

    def to_dict(self):
        d = asdict(self)
        d["mode"] = self.mode.value
        d["filter_len_schedule"] = [list(b) for b in self.filter_len_schedule]
        return d


def filter_len_at(cfg, f_hz, sample_rate=16000):
    """Prediction filter length for a frequency in Hz."""
    nyquist = sample_rate / 2
    if f_hz < 0 or f_hz > nyquist:
        raise ValueError(f"{f_hz} Hz outside [0, {nyquist}]")
    for upper, taps in cfg.filter_len_schedule:
        if upper >= f_hz:
            return taps
    raise ValueError(f"schedule does not cover {f_hz} Hz")


@dataclass
class Band:
    """Contiguous run of bins sharing one filter length."""

    bins: slice
    filter_len: int

    @property
    def n_bins(self):
        return self.bins.stop - self.bins.start


def frequency_bands(cfg, n_freq, sample_rate, frame_len):
    freqs = np.arange(n_freq) * sample_rate / frame_len
    lens = [filter_len_at(cfg, hz, sample_rate) for hz in freqs]
    bands = []
    start = 0
    for k in range(1, n_freq + 1):
        if k == n_freq or lens[k] != lens[start]:
            bands.append(Band(slice(start, k), lens[start]))
            start = k
    return bands


@dataclass
class WpeFilterSet:
    """Per-band prediction matrices.

    ``filters[b]`` has shape ``(J+1, n_bins, M*(L-D), M)``; only the J+1
    distinct matrices are held, noise outputs alias the last slot.
    """

    bands: list
    filters: list
    num_sources: int

    @classmethod
    def zeros(cls, bands, num_mics, num_sources, delay):
        filters = [
            np.zeros(
                (num_sources + 1, b.n_bins, num_mics * (b.filter_len - delay), num_mics),
                dtype=complex,
            )
            for b in bands
        ]
        return cls(bands, filters, num_sources)

    def slot(self, j):
        return min(j, self.num_sources)

    def matrix(self, f, j):
        for band, g in zip(self.bands, self.filters):
            if band.bins.start <= f < band.bins.stop:
                return g[self.slot(j), f - band.bins.start]
        raise IndexError(f)

    @property
    def n_stored(self):
        return self.num_sources + 1


@dataclass
class VarianceField:
    """Source variances, ``values`` is ``(T, J)`` when coarse or ``(F, T, J)`` when fine."""

    values: np.ndarray
    floor: float

    @property
    def coarse(self):
        return self.values.ndim == 2

    def per_bin(self, n_freq):
        """Variances broadcast to ``(F, T, J)``."""
        if self.coarse:
            return np.broadcast_to(self.values[None], (n_freq,) + self.values.shape)
        return self.values


@dataclass
class PriorSpectra:
    gamma: np.ndarray  # (F, T, J)

    def __post_init__(self):
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.gamma.ndim != 3:
            raise ValueError("prior must be (freq, frames, sources)")
        if np.any(self.gamma < 0) or not np.all(np.isfinite(self.gamma)):
            raise ValueError("prior spectra must be finite and non-negative")


@dataclass
class CbfState:
    """Full parameter set plus cached intermediate signals.

    ``sep`` holds the separation matrices, shape ``(F, M, M)``, with
    column ``j`` the filter of output ``j``. ``z`` holds the J+1
    dereverberated observations ``(J+1, F, T, M)``, ``y`` the outputs
    ``(F, T, M)``.
    """

    wpe: WpeFilterSet
    sep: np.ndarray
    coarse: VarianceField
    fine: VarianceField
    z: np.ndarray
    y: np.ndarray
    counts: Counter = field(default_factory=Counter)


def init_state(spec, cfg):
    x = spec.data
    n_freq, n_frames, n_ch = x.shape
    if n_ch != cfg.num_mics:
        raise ValueError(f"spectrogram has {n_ch} channels, config expects {cfg.num_mics}")
    J = cfg.num_sources
    power = np.abs(x) ** 2
    floor = cfg.epsilon_var
    if floor is None:
        floor = 1e-8 * power.mean()
        if floor <= 0:
            floor = np.finfo(float).tiny
    ref = power[:, :, cfg.reference_mic]
    coarse = np.maximum(np.repeat(ref.mean(axis=0)[:, None], J, axis=1), floor)
    fine = np.maximum(np.repeat(ref[:, :, None], J, axis=2), floor)
    bands = frequency_bands(cfg, n_freq, spec.sample_rate, spec.params.frame_len)
    wpe = WpeFilterSet.zeros(bands, n_ch, J, cfg.prediction_delay)
    sep = np.tile(np.eye(n_ch, dtype=complex), (n_freq, 1, 1))
    z = np.repeat(x[None], J + 1, axis=0)
    return CbfState(
        wpe=wpe,
        sep=sep,
        coarse=VarianceField(coarse, floor),
        fine=VarianceField(fine, floor),
        z=z,
        y=x.copy(),
    )
