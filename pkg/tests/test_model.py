import numpy as np
import pytest

from convbf.model import (
    PAPER_SCHEDULE,
    Mode,
    PipelineConfig,
    PriorSpectra,
    VarianceField,
    WpeFilterSet,
    filter_len_at,
    frequency_bands,
    init_state,
)
from convbf.stft import TimeSignal, analyze


def test_defaults_match_reported_setup():
    cfg = PipelineConfig(8, 2)
    assert cfg.prediction_delay == 2
    assert (cfg.wpe_iters, cfg.ive_iters) == (10, 100)
    assert cfg.mode is Mode.BLIND_COARSE_FINE
    assert cfg.alpha == 1.0
    assert cfg.filter_len_schedule == PAPER_SCHEDULE


@pytest.mark.parametrize(
    "f_hz, taps", [(0, 20), (500, 20), (800, 20), (801, 16), (1500, 16), (1501, 8), (8000, 8)]
)
def test_filter_length_bands(f_hz, taps):
    assert filter_len_at(PipelineConfig(4, 2), f_hz) == taps


def test_filter_length_out_of_range():
    with pytest.raises(ValueError):
        filter_len_at(PipelineConfig(4, 2), 9000)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_mics=2, num_sources=2),
        dict(num_mics=4, num_sources=0),
        dict(num_mics=4, num_sources=2, prediction_delay=0),
        dict(num_mics=4, num_sources=2, filter_len_schedule=((8000, 2),)),
        dict(num_mics=4, num_sources=2, alpha=0.0),
        dict(num_mics=4, num_sources=2, reference_mic=4),
        dict(num_mics=4, num_sources=2, mode="bogus"),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        PipelineConfig(**kwargs)


def test_bands_cover_all_bins():
    bands = frequency_bands(PipelineConfig(4, 2), 257, 16000, 512)
    assert [b.filter_len for b in bands] == [20, 16, 8]
    assert bands[0].bins.start == 0 and bands[-1].bins.stop == 257
    for a, b in zip(bands, bands[1:]):
        assert a.bins.stop == b.bins.start
    # bin 25 is 781.25 Hz, bin 26 is 812.5 Hz
    assert bands[0].bins.stop == 26


def test_filter_set_aliases_noise_slot():
    bands = frequency_bands(PipelineConfig(4, 2), 257, 16000, 512)
    fs = WpeFilterSet.zeros(bands, 4, 2, 2)
    assert fs.n_stored == 3
    assert [fs.slot(j) for j in range(4)] == [0, 1, 2, 2]
    fs.filters[0][2, 3] = 1.0
    assert np.all(fs.matrix(3, 3) == 1.0)
    assert fs.matrix(3, 2) is not None and fs.matrix(3, 3).shape == (4 * 18, 4)


def test_variance_field_broadcast():
    v = VarianceField(np.ones((5, 2)), 1e-9)
    assert v.coarse and v.per_bin(3).shape == (3, 5, 2)
    w = VarianceField(np.ones((3, 5, 2)), 1e-9)
    assert not w.coarse and w.per_bin(3) is w.values


def test_prior_validation():
    with pytest.raises(ValueError):
        PriorSpectra(-np.ones((2, 2, 1)))
    with pytest.raises(ValueError):
        PriorSpectra(np.ones((2, 2)))


def test_init_state_identity():
    rng = np.random.default_rng(0)
    spec = analyze(TimeSignal(rng.standard_normal((4, 4000)), 16000))
    st = init_state(spec, PipelineConfig(4, 2))
    assert np.all(st.sep == np.eye(4))
    assert all(not np.any(g) for g in st.wpe.filters)
    np.testing.assert_array_equal(st.y, spec.data)
    assert st.coarse.values.shape == (spec.n_frames, 2)
    assert st.fine.values.shape == (spec.n_freq, spec.n_frames, 2)
    assert np.all(st.fine.values >= st.fine.floor)
