"""Synthetic convolutive mixtures with speech-like and stationary sources."""
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve, lfilter

from .stft import TimeSignal


@dataclass
class MixingSystem:
    """Time-domain FIR mixing filters, ``taps`` is ``(L_A, M, K)``."""

    taps: np.ndarray

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.taps.ndim != 3 or self.taps.shape[0] < 1:
            raise ValueError("taps must be (L_A, M, K) with L_A >= 1")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("taps must be finite")

    @property
    def length(self):
        return self.taps.shape[0]

    @property
    def n_mics(self):
        return self.taps.shape[1]

    @property
    def n_sources(self):
        return self.taps.shape[2]


def _envelope(n_samples, rng, sample_rate):
    env = np.empty(n_samples)
    pos = 0
    while pos < n_samples:
        seg = int(rng.uniform(0.1, 0.5) * sample_rate)
        gain = 0.0 if rng.random() < 0.3 else 10 ** rng.uniform(-1.0, 0.5)
        env[pos : pos + seg] = gain
        pos += seg
    if not np.any(env > 0):
        # at least one active stretch so the source can be normalized
        env[: min(n_samples, int(0.1 * sample_rate))] = 1.0
    smooth = np.hanning(max(3, int(0.02 * sample_rate)))
    return np.convolve(env, smooth / smooth.sum(), mode="same")


def _colored(n_samples, rng, sample_rate):
    """White noise passed through a random resonator, redrawn every segment."""
    out = np.empty(n_samples)
    pos = 0
    while pos < n_samples:
        seg = min(int(rng.uniform(0.1, 0.4) * sample_rate), n_samples - pos)
        r = rng.uniform(0.7, 0.97)
        theta = rng.uniform(0.02, 0.5) * np.pi
        a = [1.0, -2 * r * np.cos(theta), r * r]
        out[pos : pos + seg] = lfilter([1.0], a, rng.standard_normal(seg))
        pos += seg
    return out / out.std()


def gen_sources(n_samples, num_sources, num_mics, seed, sample_rate=16000):
    """``num_mics`` sources: the first ``num_sources`` are amplitude-modulated
    colored noise with silent stretches, the rest unit-variance white noise.

    Speech-like sources are normalized to unit mean power.
    """
    if not num_sources < num_mics:
        raise ValueError("need num_sources < num_mics")
    rng = np.random.default_rng(seed)
    out = np.empty((num_mics, n_samples))
    for j in range(num_sources):
        s = _colored(n_samples, rng, sample_rate) * _envelope(n_samples, rng, sample_rate)
        out[j] = s / np.sqrt(np.mean(s**2))
    out[num_sources:] = rng.standard_normal((num_mics - num_sources, n_samples))
    return TimeSignal(out, sample_rate)


def tail_gain(sample_rate=16000, ref_decay_ms=300.0, drr_db=0.0):
    """Tail scale giving an expected direct-to-reverberant ratio of
    ``drr_db`` for an untruncated ``ref_decay_ms`` envelope."""
    n60 = ref_decay_ms * sample_rate / 1000.0
    tau = np.arange(1, int(10 * n60) + 2)
    energy = np.sum(np.exp(-2 * tau * 3 * np.log(10) / n60))
    return 10 ** (-drr_db / 20) / np.sqrt(energy)


def gen_reverberant_system(
    num_mics, length, decay_ms, seed, sample_rate=16000, num_sources=None, gain=None
):
    """Random exponentially decaying FIR mixing filters.

    Direct-path gains have magnitudes uniform in [0.5, 1.5] and random
    signs. Later tap amplitudes are i.i.d. Gaussian shaped by an envelope that falls by
    60 dB after ``decay_ms``, times a fixed ``gain`` (default
    :func:`tail_gain`), so longer decays mean more reverberant energy.
    The direct tap ``A_0`` is redrawn until its condition number is at
    most 100.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    K = num_mics if num_sources is None else num_sources
    rng = np.random.default_rng(seed)
    while True:
        # comparable direct-path gains on every microphone, random sign
        a0 = rng.choice([-1.0, 1.0], (num_mics, K)) * rng.uniform(0.5, 1.5, (num_mics, K))
        if np.linalg.cond(a0) <= 100:
            break
    tail = rng.standard_normal((length - 1, num_mics, K))
    n60 = decay_ms * sample_rate / 1000.0
    tau = np.arange(1, length)
    if n60 > 0:
        g = tail_gain(sample_rate) if gain is None else gain
        env = g * np.exp(-tau * 3 * np.log(10) / n60)
    else:
        env = np.zeros(length - 1)
    taps = np.concatenate([a0[None], tail * env[:, None, None]], axis=0)
    return MixingSystem(taps)


def instantaneous_system(A0):
    return MixingSystem(np.asarray(A0, dtype=float)[None])


def source_images(sources, system, max_lag=None):
    """Per-source microphone images, ``(K, M, n_samples)``.

    With ``max_lag`` only taps ``tau < max_lag`` contribute, which gives
    the direct-plus-early part of each image.
    """
    s = getattr(sources, "samples", sources)
    taps = system.taps if max_lag is None else system.taps[:max_lag]
    n = s.shape[1]
    # (K, M, n): convolve source k with filter taps[:, m, k]
    conv = fftconvolve(s[:, None, :], taps.transpose(2, 1, 0), axes=2)[:, :, :n]
    return conv


def mix(sources, system):
    """Exact time-domain convolutive mixture, truncated to the source length."""
    s = getattr(sources, "samples", sources)
    if s.shape[0] != system.n_sources:
        raise ValueError(f"{s.shape[0]} sources for a {system.n_sources}-input system")
    rate = getattr(sources, "sample_rate", 16000)
    return TimeSignal(source_images(s, system).sum(axis=0), rate)


@dataclass
class Scenario:
    """A simulated capture with the ground truth needed for scoring."""

    mixture: TimeSignal
    sources: TimeSignal
    system: MixingSystem
    early: np.ndarray  # (K, M, n) early images
    images: np.ndarray  # (K, M, n) full images
    num_sources: int


def make_scenario(
    num_mics=4,
    num_sources=2,
    duration=5.0,
    length=1,
    decay_ms=300.0,
    snr_db=0.0,
    seed=0,
    sample_rate=16000,
    early_ms=50.0,
    noise=True,
    drr_db=0.0,
):
    """Speech-like sources plus stationary noises through a random system.

    Speech sources have equal power at the input; noise sources are scaled
    so that the total noise power is ``snr_db`` below one speech source.
    With ``noise=False`` only the speech sources are mixed. ``drr_db`` is
    the direct-to-reverberant ratio a 300 ms decay would give; the same
    tail gain is used for every decay.
    """
    n = int(round(duration * sample_rate))
    src = gen_sources(n, num_sources, num_mics, seed, sample_rate).samples.copy()
    n_noise = num_mics - num_sources
    if noise:
        src[num_sources:] *= np.sqrt(10 ** (-snr_db / 10) / n_noise)
    else:
        src = src[:num_sources]
    K = src.shape[0]
    system = gen_reverberant_system(
        num_mics, length, decay_ms, seed + 10_000, sample_rate, K,
        gain=tail_gain(sample_rate, drr_db=drr_db),
    )
    images = source_images(src, system)
    early = source_images(src, system, max(1, int(early_ms * sample_rate / 1000)))
    mixture = TimeSignal(images.sum(axis=0), sample_rate)
    return Scenario(mixture, TimeSignal(src, sample_rate), system, early, images, num_sources)
