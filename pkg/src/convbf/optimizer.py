"""Coordinate-ascent driver for the factorized convolutional beamformer."""
import time
from dataclasses import dataclass, replace

import numpy as np

from . import ive, postproc, variance, wpe
from .model import Mode, init_state
from .stft import spectrogram_array


def build_stacks(x, state, cfg):
    x = spectrogram_array(x)
    return [
        wpe.build_delayed_stack(x[b.bins], cfg.prediction_delay, b.filter_len)
        for b in state.wpe.bands
    ]


def apply_cbf(state, x, stacks, cfg, refresh_z=True):
    """Recompute ``state.z`` (unless ``refresh_z`` is False) and ``state.y``
    from the current filters: ``y_j = q_j^H (x - G_j^H xbar)``."""
    x = spectrogram_array(x)
    J = cfg.num_sources
    if refresh_z:
        for band, stack, g in zip(state.wpe.bands, stacks, state.wpe.filters):
            for j in range(J + 1):
                state.z[j, band.bins] = wpe.dereverberate(x[band.bins], stack, g[j])
    Q = state.sep
    y = np.empty_like(state.y)
    for j in range(J):
        y[:, :, j] = np.einsum("fm,ftm->ft", Q[:, :, j].conj(), state.z[j])
    y[:, :, J:] = state.z[J] @ Q[:, :, J:].conj()
    state.y = y
    return y


def monolithic_cbf(x, stacks, bands, G, Q, num_sources):
    """Unfactorized evaluation ``y = W0^H x + Wbar^H xbar`` with
    ``W0 = Q`` and column j of ``Wbar`` equal to ``-G^(j) q_j``.

    ``G`` is a list (per band) of ``(J+1, n_bins, K, M)`` arrays.
    """
    x = spectrogram_array(x)
    M = x.shape[-1]
    y = np.einsum("fmj,ftm->ftj", Q.conj(), x)
    for band, stack, g in zip(bands, stacks, G):
        Qb = Q[band.bins]
        slots = np.minimum(np.arange(M), num_sources)
        # Wbar[f, :, j] = -G[slot(j)][f] @ q_j
        wbar = -np.einsum("jfkm,fmj->fkj", g[slots], Qb)
        y[band.bins] += np.einsum("fkj,ftk->ftj", wbar.conj(), stack)
    return y


def log_likelihood(y, Q, lam, num_sources, noise="covariance"):
    """Log-likelihood of outputs under the extraction source model.

    Parameters
    ----------
    y : ndarray (F, T, M)
    Q : ndarray (F, M, M)
    lam : ndarray or VarianceField
        Speech variances, ``(T, J)`` (coarse, broadcast over bins) or
        ``(F, T, J)`` (fine).
    noise : {"covariance", "unit"}
        ``"unit"`` scores the noise outputs as unit-variance Gaussians,
        ``-sum |y_N|^2``. ``"covariance"`` uses a per-bin noise covariance
        set to its maximum-likelihood value, ``-T sum_f (log det C_f +
        M - J)`` with ``C_f`` the sample covariance of the noise outputs.
        The two agree when the noise outputs are white with unit variance;
        only the latter is invariant to the scaling of the noise block.
    """
    lam = getattr(lam, "values", lam)
    J = num_sources
    n_frames = y.shape[1]
    power = np.abs(y[:, :, :J]) ** 2
    if lam.ndim == 2:
        lam = lam[None]
    speech = np.broadcast_to(np.log(lam), power.shape).sum() + (power / lam).sum()
    yn = y[:, :, J:]
    if noise == "unit":
        noise_term = (np.abs(yn) ** 2).sum()
    elif noise == "covariance":
        if yn.shape[-1]:
            cov = yn.transpose(0, 2, 1) @ yn.conj() / n_frames
            _, logdet_n = np.linalg.slogdet(cov)
            noise_term = n_frames * (logdet_n.sum() + yn.shape[0] * yn.shape[-1])
        else:
            noise_term = 0.0
    else:
        raise ValueError(f"unknown noise model {noise!r}")
    _, logdet = np.linalg.slogdet(Q)
    return float(-(speech + noise_term) + 2 * n_frames * logdet.sum())


def wpe_pass_indices(cfg):
    """Pass indices at which a WPE (G) update runs."""
    n_passes = max(cfg.ive_iters, cfg.wpe_iters)
    if cfg.wpe_iters == 0:
        return set()
    every = max(1, cfg.ive_iters // cfg.wpe_iters)
    return set(range(0, n_passes, every)[: cfg.wpe_iters])


@dataclass
class RunResult:
    outputs: object  # MultichannelSpectrogram with J channels
    diagnostics: dict
    state: object


def run(spec, cfg, prior=None):
    """Blind or prior-guided joint dereverberation and separation.

    Parameters
    ----------
    spec : MultichannelSpectrogram
    cfg : PipelineConfig
    prior : PriorSpectra, optional
        Required for ``Mode.NN_GUIDED``, shape ``(F, T, J)``.

    Returns
    -------
    RunResult
        ``outputs`` holds the J speech estimates after projection back and
        permutation alignment. ``diagnostics["likelihood"]`` has one entry
        before the first pass and one after every pass.
    """
    t0 = time.perf_counter()
    x = spec.data
    J = cfg.num_sources
    if cfg.mode is Mode.NN_GUIDED:
        if prior is None:
            raise ValueError("nn-guided mode requires prior spectra")
        gamma = getattr(prior, "gamma", prior)
        if gamma.shape != (x.shape[0], x.shape[1], J):
            raise ValueError(
                f"prior shape {gamma.shape} != {(x.shape[0], x.shape[1], J)}"
            )

    state = init_state(spec, cfg)
    stacks = build_stacks(x, state, cfg)
    floor = state.coarse.floor
    ref = cfg.reference_mic
    n_freq = x.shape[0]

    def ss_lam():
        return state.fine if cfg.mode is Mode.NN_GUIDED else state.coarse

    def dr_lam():
        return state.coarse if cfg.mode is Mode.BLIND_IVE else state.fine

    def lik(field):
        return log_likelihood(state.y, state.sep, field.values, J)

    steps = []

    def record(k, name, before, after_field):
        if cfg.track_steps:
            steps.append({"pass": k, "step": name, "before": before, "after": lik(after_field)})

    trace = [lik(ss_lam())]
    wpe_at = wpe_pass_indices(cfg)
    n_passes = max(cfg.ive_iters, cfg.wpe_iters)
    for k in range(n_passes):
        # variances
        if cfg.mode is Mode.NN_GUIDED:
            before = lik(state.fine) if cfg.track_steps else None
            y_pb = postproc.projection_back(state.y[:, :, :J], state.sep, ref)
            state.fine = variance.update_map(y_pb, prior, cfg.alpha, floor)
            record(k, "lambda-map", before, state.fine)
        else:
            before = lik(state.coarse) if cfg.track_steps else None
            state.coarse = variance.update_coarse(state.y, J, floor)
            record(k, "lambda-coarse", before, state.coarse)
            if cfg.mode is Mode.BLIND_COARSE_FINE:
                before = lik(state.fine) if cfg.track_steps else None
                state.fine = variance.update_fine(state.y, J, floor)
                record(k, "lambda-fine", before, state.fine)

        if k in wpe_at:
            field = dr_lam()
            before = lik(field) if cfg.track_steps else None
            wpe.update_wpe_filters(state, x, cfg, field.per_bin(n_freq), stacks)
            apply_cbf(state, x, stacks, cfg)
            record(k, "wpe", before, field)

        if k < cfg.ive_iters:
            field = ss_lam()
            before = lik(field) if cfg.track_steps else None
            ive.update_separation(state, cfg, field.per_bin(n_freq))
            apply_cbf(state, x, stacks, cfg, refresh_z=False)
            record(k, "ive", before, field)

        trace.append(lik(ss_lam()))

    speech = postproc.projection_back(state.y[:, :, :J], state.sep, ref)
    speech = postproc.permutation_realign(speech)
    diagnostics = {
        "likelihood": trace,
        "passes": n_passes,
        "wpe_passes": sorted(wpe_at),
        "steps": steps,
        "counts": {_count_key(k): v for k, v in sorted(state.counts.items(), key=str)},
        "wall_ms": int(round(1000 * (time.perf_counter() - t0))),
        "config": cfg.to_dict(),
    }
    return RunResult(spec.with_data(speech), diagnostics, state)


def _count_key(key):
    if isinstance(key, tuple):
        return ":".join(str(k) for k in key)
    return str(key)


def conventional_wpe(spec, cfg):
    """Multichannel WPE with one shared filter and channel-averaged power
    weights, used as the first stage of a cascade baseline."""
    x = spec.data
    state = init_state(spec, cfg)
    stacks = build_stacks(x, state, cfg)
    floor = state.coarse.floor
    z = x.copy()
    for _ in range(cfg.wpe_iters):
        lam = np.maximum((np.abs(z) ** 2).mean(axis=2), floor)
        for band, stack in zip(state.wpe.bands, stacks):
            stats = wpe.accumulate_stats(stack, x[band.bins], lam[band.bins], cfg.epsilon_reg)
            G = wpe.solve_batch(stats.R, stats.P, "WPE correlation", band.bins.start)
            z[band.bins] = wpe.dereverberate(x[band.bins], stack, G)
    return spec.with_data(z)


def run_cascade(spec, cfg, prior=None):
    """WPE followed by separation with frozen (zero) prediction filters."""
    derev = conventional_wpe(spec, cfg)
    return run(derev, replace(cfg, wpe_iters=0), prior)
