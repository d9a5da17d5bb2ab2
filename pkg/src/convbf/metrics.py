"""Objective quality measures for single-channel estimates."""
import numpy as np

from .stft import StftParams, TimeSignal, analyze

SI_SDR_CAP = 60.0
FWSSNR_RANGE = (-10.0, 35.0)
CD_RANGE = (0.0, 10.0)


def _mono(x):
    x = getattr(x, "samples", x)
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[0] != 1:
            raise ValueError("expected a single-channel signal")
        x = x[0]
    return x


def _pair(estimate, reference):
    est, ref = _mono(estimate), _mono(reference)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape[0]} vs {ref.shape[0]}")
    if est.size < 1:
        raise ValueError("empty signal")
    return est, ref


def si_sdr(estimate, reference):
    """Scale-invariant signal-to-distortion ratio in dB, capped at +60."""
    est, ref = _pair(estimate, reference)
    ref_energy = ref @ ref
    if ref_energy == 0:
        raise ValueError("reference is all zeros")
    target = (est @ ref) / ref_energy * ref
    err = target - est
    num, den = target @ target, err @ err
    if den <= num * 10 ** (-SI_SDR_CAP / 10):
        return SI_SDR_CAP
    if num == 0:
        return -np.inf
    return float(min(SI_SDR_CAP, 10 * np.log10(num / den)))


def mel_filterbank(n_bands, n_freq, sample_rate):
    """Triangular filters equally spaced on the mel scale, ``(n_bands, n_freq)``."""

    def mel(hz):
        return 2595.0 * np.log10(1.0 + hz / 700.0)

    def hz(m):
        return 700.0 * (10 ** (m / 2595.0) - 1.0)

    edges = hz(np.linspace(0.0, mel(sample_rate / 2), n_bands + 2))
    freqs = np.linspace(0.0, sample_rate / 2, n_freq)
    fb = np.zeros((n_bands, n_freq))
    for b in range(n_bands):
        lo, mid, hi = edges[b : b + 3]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        fb[b] = np.clip(np.minimum(rise, fall), 0.0, None)
    return fb


def _frames(x, sample_rate, params):
    return np.abs(analyze(TimeSignal(x, sample_rate), params).data[:, :, 0]).T


def _active(ref_mag):
    energy = (ref_mag**2).sum(axis=1)
    return energy > 1e-10 * energy.max() if energy.max() > 0 else np.zeros(len(energy), bool)


def fwssnr(estimate, reference, sample_rate=16000, params=StftParams(), n_bands=23, gamma=0.2):
    """Frequency-weighted segmental SNR in dB.

    The estimate is first scaled by its least-squares gain onto the
    reference. Per frame, mel-band magnitudes ``B`` (reference) and ``B^``
    (estimate) give band SNRs ``10 log10(B^2 / (B - B^)^2)`` that are
    averaged with weights ``B^gamma``; frame scores are clipped to
    [-10, 35] dB and averaged over frames where the reference is active.
    An all-zero estimate scores the floor.
    """
    est, ref = _pair(estimate, reference)
    lo, hi = FWSSNR_RANGE
    if est @ est == 0:
        return lo
    est = est * (est @ ref) / (est @ est)
    fb = mel_filterbank(n_bands, params.n_freq, sample_rate)
    R = _frames(ref, sample_rate, params) @ fb.T
    E = _frames(est, sample_rate, params) @ fb.T
    active = _active(R)
    if not active.any():
        raise ValueError("reference is silent")
    R, E = R[active], E[active]
    with np.errstate(divide="ignore", invalid="ignore"):
        snr = 10 * np.log10(R**2 / (R - E) ** 2)
    snr = np.where(R == E, hi, snr)
    snr = np.clip(snr, lo - 100.0, hi + 100.0)
    w = R**gamma
    wsum = w.sum(axis=1)
    seg = np.where(wsum > 0, (w * snr).sum(axis=1) / np.where(wsum > 0, wsum, 1.0), hi)
    return float(np.clip(seg, lo, hi).mean())


def _cepstra(mag, order):
    floor = 1e-8 * max(mag.max(), np.finfo(float).tiny)
    logmag = np.log(np.maximum(mag, floor))
    cep = np.fft.irfft(logmag, axis=1)
    return cep[:, 1 : order + 1]


def cepstral_distance(estimate, reference, order=16, sample_rate=16000, params=StftParams()):
    """Frame-averaged cepstral distance in dB, excluding the gain term c0.

    Per frame ``(10 / ln 10) * sqrt(2 * sum_{k=1..order} (c_k - c^_k)^2)``
    clipped to [0, 10], averaged over frames where the reference is active.
    """
    est, ref = _pair(estimate, reference)
    R = _frames(ref, sample_rate, params)
    E = _frames(est, sample_rate, params)
    active = _active(R)
    if not active.any():
        raise ValueError("reference is silent")
    diff = _cepstra(R, order)[active] - _cepstra(E, order)[active]
    cd = 10 / np.log(10) * np.sqrt(2 * (diff**2).sum(axis=1))
    return float(np.clip(cd, *CD_RANGE).mean())


METRICS = {
    "si_sdr": lambda est, ref, rate: si_sdr(est, ref),
    "fwssnr": lambda est, ref, rate: fwssnr(est, ref, rate),
    "cd": lambda est, ref, rate: cepstral_distance(est, ref, sample_rate=rate),
}
