import numpy as np
import pytest

from convbf import PipelineConfig, PriorSpectra, analyze, run, run_cascade
from convbf.model import init_state
from convbf.optimizer import apply_cbf, build_stacks, log_likelihood, monolithic_cbf, wpe_pass_indices
from convbf.postproc import permutation_realign
from convbf.simulate import make_scenario
from convbf.stft import MultichannelSpectrogram, StftParams

SMALL = dict(filter_len_schedule=((800, 5), (1500, 4), (8000, 3)))


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def _spec(rng, T=40, M=4):
    return MultichannelSpectrogram(crandn(rng, 257, T, M), StftParams(), 16000, T * 128)


def _random_state(rng, spec, cfg):
    st = init_state(spec, cfg)
    for g in st.wpe.filters:
        g[...] = 0.1 * crandn(rng, *g.shape)
    st.sep[...] = crandn(rng, *st.sep.shape)
    return st


def test_identity_cbf():
    rng = np.random.default_rng(0)
    spec = _spec(rng)
    cfg = PipelineConfig(4, 2, **SMALL)
    st = init_state(spec, cfg)
    y = apply_cbf(st, spec, build_stacks(spec, st, cfg), cfg)
    np.testing.assert_array_equal(y, spec.data)


def test_constructed_inverse_recovers_sources():
    rng = np.random.default_rng(1)
    A0 = rng.standard_normal((4, 4))
    s = crandn(rng, 257, 30, 4)
    spec = MultichannelSpectrogram(s @ A0.T, StftParams(), 16000, 30 * 128)
    cfg = PipelineConfig(4, 2, **SMALL)
    st = init_state(spec, cfg)
    st.sep[...] = np.linalg.inv(A0).conj().T
    y = apply_cbf(st, spec, build_stacks(spec, st, cfg), cfg)
    np.testing.assert_allclose(y, s, atol=1e-10)


@pytest.mark.parametrize("M, J", [(3, 1), (4, 2), (5, 2)])
def test_factorized_equals_monolithic(M, J):
    rng = np.random.default_rng(M + J)
    spec = _spec(rng, M=M)
    cfg = PipelineConfig(M, J, **SMALL)
    st = _random_state(rng, spec, cfg)
    stacks = build_stacks(spec, st, cfg)
    y = apply_cbf(st, spec, stacks, cfg)
    ref = monolithic_cbf(spec, stacks, st.wpe.bands, st.wpe.filters, st.sep, J)
    assert np.abs(y - ref).max() <= 1e-10 * np.abs(ref).max()


def test_likelihood_unit_value():
    T, F, M = 7, 5, 3
    y = np.ones((F, T, M), complex)
    Q = np.tile(np.eye(M, dtype=complex), (F, 1, 1))
    L = log_likelihood(y, Q, np.ones((T, M)), M, noise="unit")
    # every (t, f, j) term is log 1 + 1/1 = 1 and log det I = 0
    assert L == -T * F * M


def test_likelihood_extensive_in_time():
    rng = np.random.default_rng(2)
    y = crandn(rng, 6, 10, 3)
    Q = crandn(rng, 6, 3, 3)
    lam = rng.uniform(0.5, 2, (10, 2))
    for noise in ("unit", "covariance"):
        a = log_likelihood(y, Q, lam, 2, noise)
        b = log_likelihood(np.concatenate([y, y], axis=1), Q, np.concatenate([lam, lam]), 2, noise)
        assert abs(b - 2 * a) <= 1e-10 * abs(a)


def test_likelihood_triple_loop():
    rng = np.random.default_rng(3)
    F, T, M, J = 3, 4, 3, 2
    y = crandn(rng, F, T, M)
    Q = crandn(rng, F, M, M)
    lam = rng.uniform(0.5, 2, (F, T, J))
    total = 0.0
    for f in range(F):
        for t in range(T):
            for j in range(M):
                if j < J:
                    total -= np.log(lam[f, t, j]) + abs(y[f, t, j]) ** 2 / lam[f, t, j]
                else:
                    total -= abs(y[f, t, j]) ** 2
        total += 2 * T * np.log(abs(np.linalg.det(Q[f])))
    L = log_likelihood(y, Q, lam, J, noise="unit")
    assert abs(L - total) <= 1e-9 * abs(total)


def test_noise_profiles_agree_for_white_unit_noise():
    rng = np.random.default_rng(4)
    F, T, M, J = 4, 16, 4, 2
    y = crandn(rng, F, T, M)
    for f in range(F):
        # orthonormal noise columns scaled to unit sample covariance
        q, _ = np.linalg.qr(crandn(rng, T, M - J))
        y[f, :, J:] = q * np.sqrt(T)
    Q = crandn(rng, F, M, M)
    lam = rng.uniform(0.5, 2, (T, J))
    a = log_likelihood(y, Q, lam, J, noise="unit")
    b = log_likelihood(y, Q, lam, J, noise="covariance")
    assert abs(a - b) <= 1e-9 * abs(a)


def test_likelihood_rejects_unknown_noise_model():
    with pytest.raises(ValueError):
        log_likelihood(np.ones((1, 2, 2)), np.eye(2)[None], np.ones((2, 1)), 1, noise="x")


def test_default_schedule():
    cfg = PipelineConfig(4, 2)
    assert sorted(wpe_pass_indices(cfg)) == list(range(0, 100, 10))
    assert wpe_pass_indices(PipelineConfig(4, 2, wpe_iters=0)) == set()
    assert sorted(wpe_pass_indices(PipelineConfig(4, 2, wpe_iters=5, ive_iters=0))) == list(range(5))


@pytest.fixture(scope="module")
def small_scenario():
    sc = make_scenario(num_mics=3, num_sources=1, duration=1.0, length=1, seed=3)
    return sc, analyze(sc.mixture)


def test_zero_iterations_is_identity(small_scenario):
    _, spec = small_scenario
    res = run(spec, PipelineConfig(3, 1, wpe_iters=0, ive_iters=0, **SMALL))
    np.testing.assert_array_equal(res.outputs.data, permutation_realign(spec.data[:, :, :1]))
    assert len(res.diagnostics["likelihood"]) == 1


def test_run_counts_and_monotone(small_scenario):
    _, spec = small_scenario
    cfg = PipelineConfig(3, 1, wpe_iters=2, ive_iters=6, **SMALL)
    res = run(spec, cfg)
    d = res.diagnostics
    assert d["passes"] == 6 and d["wpe_passes"] == [0, 3]
    assert len(d["likelihood"]) == 7
    assert d["counts"]["ip_update"] == 6 * 257
    assert d["counts"]["noise_block_solve:1"] == 6 * 257
    for s in d["steps"]:
        assert s["after"] - s["before"] >= -1e-6 * abs(s["before"]), s
    assert np.all(np.diff(d["likelihood"]) >= -1e-6 * np.abs(d["likelihood"][1:]))


def test_run_deterministic(small_scenario):
    _, spec = small_scenario
    cfg = PipelineConfig(3, 1, wpe_iters=1, ive_iters=3, **SMALL)
    a, b = run(spec, cfg), run(spec, cfg)
    np.testing.assert_array_equal(a.outputs.data, b.outputs.data)
    da = {k: v for k, v in a.diagnostics.items() if k != "wall_ms"}
    db = {k: v for k, v in b.diagnostics.items() if k != "wall_ms"}
    assert da == db


def test_nn_mode_requires_matching_prior(small_scenario):
    _, spec = small_scenario
    cfg = PipelineConfig(3, 1, mode="nn-guided", wpe_iters=0, ive_iters=1, **SMALL)
    with pytest.raises(ValueError):
        run(spec, cfg)
    with pytest.raises(ValueError):
        run(spec, cfg, PriorSpectra(np.ones((257, spec.n_frames + 1, 1))))
    res = run(spec, cfg, PriorSpectra(np.ones((257, spec.n_frames, 1))))
    assert res.outputs.data.shape == (257, spec.n_frames, 1)


def test_cascade_runs(small_scenario):
    _, spec = small_scenario
    res = run_cascade(spec, PipelineConfig(3, 1, wpe_iters=1, ive_iters=2, **SMALL))
    assert res.diagnostics["wpe_passes"] == []
    assert np.all(np.isfinite(res.outputs.data))
