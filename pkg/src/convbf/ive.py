"""Separation matrix updates for independent vector extraction.

All functions accept a leading batch axis over frequency bins; a single
``(M, M)`` matrix works as well.
"""
import numpy as np

from .model import SingularMatrixError
from .wpe import load_diagonal, loading


def accumulate_sigma(z, lam, epsilon_reg=1e-6):
    """Weighted covariance ``(1/T) sum_t z z^H / lam`` per bin.

    ``z`` is ``(F, T, M)``; ``lam`` is ``(F, T)``, ``(T,)`` or a scalar.
    """
    n_frames = z.shape[1]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), z.shape[:2])
    weighted = z.transpose(0, 2, 1) / lam[:, None, :]
    sigma = weighted @ z.conj() / n_frames
    sigma = 0.5 * (sigma + sigma.conj().swapaxes(-1, -2))
    return load_diagonal(sigma, loading(z, 1.0 / (lam * n_frames), epsilon_reg))


def _solve(A, b, what, source=None):
    try:
        out = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        out = None
    if out is None or not np.all(np.isfinite(out)):
        A = A.reshape((-1,) + A.shape[-2:])
        for f in range(A.shape[0]):
            if not np.all(np.isfinite(A[f])) or abs(np.linalg.det(A[f])) == 0:
                raise SingularMatrixError(what, f, source)
        raise SingularMatrixError(what, 0, source)
    return out


def update_speech_filter(Q, sigma, j):
    """Iterative projection update of column ``j`` of ``Q``.

    Solves ``(Q^H Sigma) q = e_j`` and rescales so that ``q^H Sigma q = 1``.
    Returns the new column; ``Q`` is not modified.
    """
    Q = np.asarray(Q)
    sigma = np.asarray(sigma)
    M = Q.shape[-1]
    e = np.zeros(Q.shape[:-2] + (M, 1), dtype=complex)
    e[..., j, 0] = 1.0
    A = Q.conj().swapaxes(-1, -2) @ sigma
    q = _solve(A, e, "IP system Q^H Sigma", j)[..., 0]
    quad = np.real(np.einsum("...m,...mn,...n->...", q.conj(), sigma, q))
    return q / np.sqrt(quad)[..., None]


def sigma_factor(z, lam, epsilon_reg=1e-6):
    """Upper-triangular ``C`` with ``C^H C`` equal to the loaded weighted
    covariance of :func:`accumulate_sigma`, from a QR factorization of the
    weighted observations (no squaring of the condition number)."""
    n_freq, n_frames, M = z.shape
    lam = np.broadcast_to(np.asarray(lam, dtype=float), z.shape[:2])
    w = 1.0 / (lam * n_frames)
    zw = z.conj() * np.sqrt(w)[..., None]
    load = loading(z, w, epsilon_reg)
    ridge = np.sqrt(load)[:, None, None] * np.eye(M)
    return np.linalg.qr(np.concatenate([zw, ridge], axis=1), mode="r")


def update_speech_filter_factored(Q, factor, j):
    """:func:`update_speech_filter` with ``Sigma = factor^H factor``.

    Uses ``(Q^H Sigma)^{-1} e_j = Sigma^{-1} Q^{-H} e_j``.
    """
    M = Q.shape[-1]
    e = np.zeros(Q.shape[:-2] + (M, 1), dtype=complex)
    e[..., j, 0] = 1.0
    h = _solve(Q.conj().swapaxes(-1, -2), e, "separation matrix", j)
    u = _solve(factor.conj().swapaxes(-1, -2), h, "IP covariance", j)
    q = _solve(factor, u, "IP covariance", j)[..., 0]
    norm = np.linalg.norm(factor @ q[..., None], axis=(-2, -1))
    return q / norm[..., None]


def update_noise_block(Q, sigma_noise, num_sources):
    """Noise-subspace block ``Q_N`` orthogonal to the speech filters.

    ``Q_N = [-(Q_S^H S E_S)^{-1} (Q_S^H S E_N); I]`` with ``S`` the noise
    slot covariance. One ``J x J`` solve per bin whatever ``M - J`` is.
    """
    Q = np.asarray(Q)
    J = num_sources
    M = Q.shape[-1]
    QS_sigma = Q[..., :, :J].conj().swapaxes(-1, -2) @ sigma_noise
    upper = -_solve(QS_sigma[..., :, :J], QS_sigma[..., :, J:], "noise-block pivot")
    eye = np.broadcast_to(np.eye(M - J, dtype=complex), upper.shape[:-2] + (M - J, M - J))
    return np.concatenate([upper, eye], axis=-2)


def update_separation(state, cfg, lam_speech):
    """One IVE pass over all bins: J IP updates then one noise-block update.

    ``lam_speech`` is ``(F, T, J)``. ``state.sep`` is updated in place.
    """
    J = cfg.num_sources
    Q = state.sep
    for j in range(J):
        factor = sigma_factor(state.z[j], lam_speech[..., j], cfg.epsilon_reg)
        Q[:, :, j] = update_speech_filter_factored(Q, factor, j)
        state.counts["ip_update"] += Q.shape[0]
    sigma_n = accumulate_sigma(state.z[J], 1.0, cfg.epsilon_reg)
    Q[:, :, J:] = update_noise_block(Q, sigma_n, J)
    state.counts["noise_block_solve", J] += Q.shape[0]
    return Q
