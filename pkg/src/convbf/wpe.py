"""Source-wise weighted prediction error dereverberation."""
from dataclasses import dataclass

import numpy as np

from .model import SingularMatrixError
from .stft import spectrogram_array


@dataclass
class WpeStats:
    """Weighted statistics of one source for a batch of bins.

    ``R`` is ``(F, K, K)`` with diagonal loading already applied and
    ``P`` is ``(F, K, M)``, where ``K = M*(L-D)``.
    """

    R: np.ndarray
    P: np.ndarray


def build_delayed_stack(x, delay, filter_len):
    """Stack past frames ``[x_{t-D}; ...; x_{t-L+1}]`` for every (f, t).

    Parameters
    ----------
    x : ndarray (F, T, M) or MultichannelSpectrogram
    delay, filter_len : int
        Prediction delay D and filter length L, with ``L > D >= 1``.

    Returns
    -------
    ndarray (F, T, M*(L-D))
        Blocks ordered by increasing delay; frames before t=0 are zero.
    """
    x = spectrogram_array(x)
    if delay < 1:
        raise ValueError("delay must be >= 1")
    if filter_len <= delay:
        raise ValueError(f"filter length {filter_len} must exceed delay {delay}")
    n_freq, n_frames, n_ch = x.shape
    taps = filter_len - delay
    out = np.zeros((n_freq, n_frames, taps * n_ch), dtype=complex)
    for i, lag in enumerate(range(delay, filter_len)):
        if lag < n_frames:
            out[:, lag:, i * n_ch : (i + 1) * n_ch] = x[:, : n_frames - lag]
    return out


def loading(vectors, weights, epsilon_reg):
    """Diagonal load per bin: ``epsilon_reg * min_t(w_t) * trace(sum_t v v^H) / K``.

    Equal to ``epsilon_reg * trace(R) / K`` for constant weights. Scaling
    by the smallest weight instead of using the weighted trace keeps the
    load below the smallest eigenvalue of ``R`` (up to the conditioning of
    the unweighted data) when the weights span many decades.
    """
    K = vectors.shape[-1]
    energy = np.einsum("ftk,ftk->f", vectors.real, vectors.real) + np.einsum(
        "ftk,ftk->f", vectors.imag, vectors.imag
    )
    load = epsilon_reg * weights.min(axis=1) * energy / K
    # all-zero statistics still need an invertible matrix
    return np.maximum(load, np.finfo(float).tiny)


def load_diagonal(R, load):
    """Add ``load`` (one value per matrix) to the diagonals of ``R``."""
    dim = R.shape[-1]
    load = np.asarray(load, dtype=float)
    R = R.copy()
    idx = np.arange(dim)
    R[..., idx, idx] += load[..., None]
    return R


def accumulate_stats(stack, x, lam, epsilon_reg=1e-6):
    """Inverse-variance weighted correlation of the delayed stack.

    ``lam`` is ``(F, T)`` or ``(T,)`` (broadcast over bins). Returns
    ``R = sum_t xbar xbar^H / lam`` (loaded) and ``P = sum_t xbar x^H / lam``.
    """
    x = spectrogram_array(x)
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 1:
        lam = np.broadcast_to(lam[None], stack.shape[:2])
    weighted = stack.transpose(0, 2, 1) / lam[:, None, :]
    R = weighted @ stack.conj()
    R = 0.5 * (R + R.conj().transpose(0, 2, 1))
    P = weighted @ x.conj()
    return WpeStats(load_diagonal(R, loading(stack, 1.0 / lam, epsilon_reg)), P)


def solve_batch(A, B, what="matrix", freq_offset=0, source=None):
    """Batched ``A^{-1} B`` that names the offending bin on failure."""
    try:
        out = np.linalg.solve(A, B)
    except np.linalg.LinAlgError:
        out = None
    if out is None or not np.all(np.isfinite(out)):
        for k in range(A.shape[0]):
            try:
                ok = np.all(np.isfinite(np.linalg.solve(A[k], B[k])))
            except np.linalg.LinAlgError:
                ok = False
            if not ok:
                raise SingularMatrixError(what, freq_offset + k, source)
        raise SingularMatrixError(what, freq_offset, source)
    return out


def weighted_lstsq(A, B, weights, epsilon_reg):
    """Loaded weighted least squares through a QR factorization.

    Returns ``G`` minimizing ``sum_t w_t |b_t - G^H a_t|^2 + load |G|^2``
    with the load of :func:`loading`, i.e. the same ``G`` as solving the
    loaded normal equations ``R G = P`` of :func:`accumulate_stats`. Forming ``R``
    squares the condition number; with variance weights spanning many
    decades that loses all precision, the factorization does not.

    ``A`` is ``(F, T, K)``, ``B`` is ``(F, T, M)``, ``weights`` ``(F, T)``.
    """
    n_freq, _, K = A.shape
    s = np.sqrt(weights)[..., None]
    Aw = A * s
    Bw = B * s
    load = loading(A, weights, epsilon_reg)
    ridge = np.sqrt(load)[:, None, None] * np.eye(K)
    aug = np.concatenate(
        [
            np.concatenate([Aw.conj(), Bw.conj()], axis=2),
            np.concatenate([ridge, np.zeros((n_freq, K, B.shape[-1]))], axis=2),
        ],
        axis=1,
    )
    # triangular factor of [A | B]: G = R11^{-1} R12
    r = np.linalg.qr(aug, mode="r")
    return np.linalg.solve(r[:, :K, :K], r[:, :K, K:])


def dereverberate(x, stack, G):
    """``z_t = x_t - G^H xbar_{t-D}`` for a batch of bins.

    ``G`` is ``(F, K, M)``.
    """
    x = spectrogram_array(x)
    return x - stack @ G.conj()


def update_wpe_filters(state, x, cfg, lam, stacks):
    """Re-estimate the J+1 distinct prediction matrices of every bin.

    Parameters
    ----------
    state : CbfState
        Filters are replaced in place; ``state.counts`` records the solves.
    x : ndarray (F, T, M)
    lam : ndarray (F, T, J)
        Speech variances used as weights; the noise slot uses unit weights.
    stacks : list of ndarray
        Delayed stacks, one per band of ``state.wpe.bands``.
    """
    x = spectrogram_array(x)
    J = cfg.num_sources
    wpe = state.wpe
    for band, stack, g in zip(wpe.bands, stacks, wpe.filters):
        xb = x[band.bins]
        for j in range(J + 1):
            if j < J:
                w = lam[band.bins, :, j]
            else:
                w = np.ones(stack.shape[:2])
            G = weighted_lstsq(stack, xb, 1.0 / w, cfg.epsilon_reg)
            if not np.all(np.isfinite(G)):
                bad = int(np.argwhere(~np.isfinite(G))[0, 0])
                raise SingularMatrixError("WPE correlation", band.bins.start + bad, j)
            g[j] = G
            state.counts["wpe_solve", stack.shape[-1]] += band.n_bins
    return wpe
