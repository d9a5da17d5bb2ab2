"""WAV and prior-spectra file I/O."""
import struct
import wave

import numpy as np
from scipy.io import wavfile

from .model import PriorSpectra
from .stft import TimeSignal

PRIOR_MAGIC = b"CBFP"
PRIOR_VERSION = 1
_PRIOR_HEADER = struct.Struct("<4sIIII")


class WavFormatError(ValueError):
    pass


class PriorFormatError(ValueError):
    pass


def read_wav(path):
    """Read PCM16, PCM24 or float32 WAV into floats in [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except (ValueError, EOFError, struct.error) as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples into int32
        samples = data.astype(float) / 2147483648.0
    elif data.dtype == np.float32 or data.dtype == np.float64:
        samples = data.astype(float)
    else:
        raise WavFormatError(f"{path}: unsupported sample type {data.dtype}")
    samples = samples.reshape(len(samples), -1).T
    return TimeSignal(samples, rate)


def write_wav(path, signal, subtype="float32"):
    """Write a TimeSignal as ``float32``, ``pcm16`` or ``pcm24``."""
    x = signal.samples.T
    if subtype == "float32":
        wavfile.write(path, signal.sample_rate, np.ascontiguousarray(x, dtype=np.float32))
    elif subtype == "pcm16":
        pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
        wavfile.write(path, signal.sample_rate, pcm)
    elif subtype == "pcm24":
        pcm = np.clip(np.round(x * 8388608.0), -8388608, 8388607).astype("<i4")
        raw = pcm.reshape(-1, 1).view(np.uint8)[:, :3].tobytes()
        with wave.open(str(path), "wb") as w:
            w.setnchannels(signal.n_channels)
            w.setsampwidth(3)
            w.setframerate(signal.sample_rate)
            w.writeframes(raw)
    else:
        raise ValueError(f"unknown subtype {subtype!r}")


def write_prior(path, prior):
    """Serialize ``gamma`` ``(F, T, J)`` as a little-endian CBFP file."""
    gamma = getattr(prior, "gamma", prior)
    F, T, J = gamma.shape
    payload = np.ascontiguousarray(gamma.transpose(2, 1, 0), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_PRIOR_HEADER.pack(PRIOR_MAGIC, PRIOR_VERSION, F, T, J))
        fh.write(payload.tobytes())


def read_prior(path, n_freq=None, n_frames=None, num_sources=None):
    """Load a CBFP file, checking dimensions against the expected ones."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _PRIOR_HEADER.size:
        raise PriorFormatError(f"{path}: truncated header")
    magic, version, F, T, J = _PRIOR_HEADER.unpack_from(blob)
    if magic != PRIOR_MAGIC:
        raise PriorFormatError(f"{path}: bad magic {magic!r}")
    if version != PRIOR_VERSION:
        raise PriorFormatError(f"{path}: unsupported version {version}")
    for name, got, want in (("F", F, n_freq), ("T", T, n_frames), ("J", J, num_sources)):
        if want is not None and got != want:
            raise PriorFormatError(f"{path}: {name}={got}, expected {want}")
    payload = np.frombuffer(blob, dtype="<f4", offset=_PRIOR_HEADER.size)
    if payload.size != F * T * J:
        raise PriorFormatError(f"{path}: payload has {payload.size} floats, expected {F * T * J}")
    gamma = payload.reshape(J, T, F).transpose(2, 1, 0).astype(float)
    if np.any(gamma < 0) or not np.all(np.isfinite(gamma)):
        raise PriorFormatError(f"{path}: prior values must be finite and non-negative")
    return PriorSpectra(gamma)
