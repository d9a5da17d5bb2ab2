"""Scale and permutation ambiguity resolution for separated outputs."""
import numpy as np
from scipy.optimize import linear_sum_assignment

from .model import SingularMatrixError


def projection_coefficients(Q, reference_mic=0):
    """Entries ``(Q^{-H})[r, j]`` per bin, shape ``(F, M)``."""
    try:
        Qinv = np.linalg.inv(Q)
    except np.linalg.LinAlgError:
        for f in range(Q.shape[0]):
            if abs(np.linalg.det(Q[f])) == 0:
                raise SingularMatrixError("separation matrix", f)
        raise
    return Qinv[:, :, reference_mic].conj()


def projection_back(y, Q, reference_mic=0, return_filters=False):
    """Rescale each output to its image at microphone ``reference_mic``.

    Parameters
    ----------
    y : ndarray (F, T, K)
        Outputs of ``Q`` (the first K columns), ``K <= M``.
    Q : ndarray (F, M, M)

    Returns
    -------
    y_scaled : ndarray (F, T, K)
    Q_scaled : ndarray (F, M, M), only if ``return_filters``
        Filters that produce ``y_scaled`` directly; projecting them back
        again is a no-op.
    """
    K = y.shape[-1]
    c = projection_coefficients(Q, reference_mic)[:, :K]
    out = y * c[:, None, :]
    if return_filters:
        Qs = Q.copy()
        Qs[:, :, :K] *= c[:, None, :].conj()
        return out, Qs
    return out


def _envelopes(y):
    p = np.abs(y) ** 2
    p = p - p.mean(axis=1, keepdims=True)
    sd = p.std(axis=1, keepdims=True)
    return np.divide(p, sd, out=np.zeros_like(p), where=sd > 0)


def permutation_realign(y, max_sweeps=10, return_perms=False):
    """Align per-bin source order by power-envelope correlation.

    Each bin's normalized power envelopes are matched to source centroids
    (mean envelope over all bins) with a maximum-correlation assignment.
    The centroids are seeded by a sequential sweep from the highest-energy
    bin, then refined until no bin changes or ``max_sweeps`` is reached.

    Returns the realigned ``(F, T, J)`` tensor and, if requested, the
    ``(F, J)`` permutations applied (``out[f, :, k] = y[f, :, perm[f, k]]``).
    """
    n_freq, n_frames, J = y.shape
    perms = np.tile(np.arange(J), (n_freq, 1))
    if J < 2:
        return (y.copy(), perms) if return_perms else y.copy()
    env = _envelopes(y)

    def best_perm(f, centroid):
        # corr[k, i]: centroid k vs. output i of bin f
        corr = centroid.T @ env[f] / n_frames
        _, cols = linear_sum_assignment(-corr)
        return cols

    anchor = int(np.argmax((np.abs(y) ** 2).sum(axis=(1, 2))))
    order = np.r_[anchor:n_freq, anchor - 1 : -1 : -1] if anchor > 0 else np.arange(n_freq)
    acc = env[anchor].copy()
    for f in order[1:]:
        perms[f] = best_perm(f, acc)
        acc += env[f][:, perms[f]]

    for _ in range(max_sweeps):
        centroid = np.stack([env[f][:, perms[f]] for f in range(n_freq)]).mean(axis=0)
        norm = np.linalg.norm(centroid, axis=0)
        centroid = centroid / np.where(norm > 0, norm, 1.0) * np.sqrt(n_frames)
        changed = False
        for f in range(n_freq):
            p = best_perm(f, centroid)
            if not np.array_equal(p, perms[f]):
                perms[f] = p
                changed = True
        if not changed:
            break

    out = np.take_along_axis(y, perms[:, None, :], axis=2)
    return (out, perms) if return_perms else out
