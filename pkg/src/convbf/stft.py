"""Short-time Fourier analysis and weighted overlap-add synthesis.

Spectrograms are stored as complex arrays of shape ``(n_freq, n_frames,
n_channels)`` so that per-frequency statistics can be computed with
batched matrix products along the leading axis.
"""
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import check_COLA, get_window


@dataclass(frozen=True)
class StftParams:
    frame_len: int = 512
    shift: int = 128
    window: str = "hann"

    def __post_init__(self):
        if self.frame_len < 1 or self.shift < 1:
            raise ValueError("frame_len and shift must be positive")
        if self.shift > self.frame_len or self.frame_len % self.shift:
            raise ValueError(
                f"shift {self.shift} must divide frame_len {self.frame_len}"
            )
        if not check_COLA(self.window_array(), self.frame_len, self.frame_len - self.shift):
            raise ValueError(
                f"window {self.window!r} is not COLA for shift {self.shift}"
            )

    @property
    def n_freq(self):
        return self.frame_len // 2 + 1

    @property
    def pad(self):
        return self.frame_len - self.shift

    def window_array(self):
        return get_window(self.window, self.frame_len, fftbins=True)


@dataclass
class TimeSignal:
    """Multichannel real signal, ``samples`` is ``(n_channels, n_samples)``."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be (channels, samples)")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_samples(self):
        return self.samples.shape[1]


@dataclass
class MultichannelSpectrogram:
    """Complex STFT tensor ``data[f, t, m]``.

    ``n_samples`` remembers the original signal length so that synthesis
    can trim the boundary padding exactly.
    """

    data: np.ndarray
    params: StftParams
    sample_rate: int
    n_samples: int

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("spectrogram data must be (freq, frames, channels)")
        if self.data.shape[0] != self.params.n_freq:
            raise ValueError(
                f"expected {self.params.n_freq} bins, got {self.data.shape[0]}"
            )

    @property
    def n_freq(self):
        return self.data.shape[0]

    @property
    def n_frames(self):
        return self.data.shape[1]

    @property
    def n_channels(self):
        return self.data.shape[2]

    def bin_frequencies(self):
        return np.arange(self.n_freq) * self.sample_rate / self.params.frame_len

    def with_data(self, data):
        return MultichannelSpectrogram(
            np.asarray(data), self.params, self.sample_rate, self.n_samples
        )


def _n_frames(n_samples, params):
    padded = n_samples + 2 * params.pad
    return -(-(padded - params.frame_len) // params.shift) + 1


def analyze(signal, params=StftParams()):
    """STFT of every channel of ``signal``.

    The signal is zero padded by ``frame_len - shift`` samples on both
    sides (plus whatever is needed to complete the last frame), so every
    original sample is covered by the same number of frames.
    """
    x = signal.samples
    n_samples = x.shape[1]
    if n_samples < params.frame_len:
        raise ValueError(
            f"signal has {n_samples} samples, shorter than one frame "
            f"({params.frame_len})"
        )
    n_frames = _n_frames(n_samples, params)
    total = (n_frames - 1) * params.shift + params.frame_len
    padded = np.zeros((x.shape[0], total))
    padded[:, params.pad : params.pad + n_samples] = x
    frames = sliding_window_view(padded, params.frame_len, axis=1)[:, :: params.shift]
    spec = np.fft.rfft(frames * params.window_array(), axis=-1)
    # (channels, frames, freq) -> (freq, frames, channels)
    data = np.ascontiguousarray(spec.transpose(2, 1, 0))
    return MultichannelSpectrogram(data, params, signal.sample_rate, n_samples)


def synthesize(spec):
    """Weighted overlap-add inverse of :func:`analyze`."""
    params = spec.params
    win = params.window_array()
    frames = np.fft.irfft(spec.data.transpose(2, 1, 0), n=params.frame_len, axis=-1)
    n_ch, n_frames = frames.shape[:2]
    total = (n_frames - 1) * params.shift + params.frame_len
    out = np.zeros((n_ch, total))
    norm = np.zeros(total)
    for i in range(n_frames):
        sl = slice(i * params.shift, i * params.shift + params.frame_len)
        out[:, sl] += frames[:, i] * win
        norm[sl] += win**2
    nz = norm > 1e-10 * norm.max()
    out[:, nz] /= norm[nz]
    out[:, ~nz] = 0.0
    start = params.pad
    return TimeSignal(out[:, start : start + spec.n_samples], spec.sample_rate)


def spectrogram_array(x):
    """Complex ``(F, T, M)`` array from a spectrogram or an array."""
    if isinstance(x, MultichannelSpectrogram):
        return x.data
    return np.asarray(x)
