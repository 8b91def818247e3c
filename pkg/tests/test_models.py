import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcpms.core_types import Dataset
from lcpms.models import (
    NW5,
    NW5_BANDWIDTHS,
    PARAMETRIC10,
    SINUSOID_FREQS,
    SINUSOID_WINDOWS,
    LocalSinusoidModel,
    NWModel,
    build_model_bank,
)


def _train(seed=0, n=80, lo=-2.0, hi=2.0, fn=None, sigma=0.0):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(lo, hi, n))
    y = (fn(x) if fn else np.zeros(n)) + sigma * rng.normal(size=n)
    return Dataset(x, y)


# --- LocalSinusoidModel -------------------------------------------------------

def test_sinusoid_exact_recovery():
    # noiseless data from the model class itself: LS refits it exactly
    ds = _train(3, 60, fn=lambda x: 2.0 * np.sin(3.0 * x + 0.5))
    m = LocalSinusoidModel(3.0, 0.5, ds)
    q = np.array([0.3, -1.1, 0.9, 1.7])
    assert np.abs(m(q) - 2.0 * np.sin(3.0 * q + 0.5)).max() < 1e-8


def test_sinusoid_zero_window_data():
    ds = _train(4, 50)  # all responses zero
    m = LocalSinusoidModel(2.0, 1.0, ds)
    assert np.abs(m(np.array([0.0, 0.5]))).max() == 0.0


def test_sinusoid_matches_lstsq_oracle():
    rng = np.random.default_rng(9)
    ds = _train(9, 70, fn=np.cos, sigma=0.3)
    lam, h = 4.0, 0.6
    m = LocalSinusoidModel(lam, h, ds)
    for x0 in rng.uniform(-1.3, 1.3, 6):
        win = np.abs(ds.x[:, 0] - x0) <= h
        A = np.column_stack([np.sin(lam * ds.x[win, 0]), np.cos(lam * ds.x[win, 0])])
        coef, *_ = np.linalg.lstsq(A, ds.y[win], rcond=None)
        want = coef[0] * np.sin(lam * x0) + coef[1] * np.cos(lam * x0)
        got = m(np.array([x0]))[0]
        assert abs(got - want) <= 1e-8 * max(1.0, abs(want))


def test_sinusoid_ls_optimality_random_probes():
    rng = np.random.default_rng(17)
    ds = _train(21, 40, fn=np.sin, sigma=0.5)
    lam, h = 2.0, 0.8
    m = LocalSinusoidModel(lam, h, ds)
    for x0 in (-0.7, 0.2, 1.1):
        win = np.abs(ds.x[:, 0] - x0) <= h
        xs, ys = ds.x[win, 0], ds.y[win]
        # recover the fitted (a, b) from two evaluations is fragile; instead
        # refit and compare SSE against random competitors
        A = np.column_stack([np.sin(lam * xs), np.cos(lam * xs)])
        coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
        sse_fit = np.sum((A @ coef - ys) ** 2)
        for _ in range(200):
            cand = coef + rng.normal(scale=0.3, size=2)
            assert np.sum((A @ cand - ys) ** 2) >= sse_fit - 1e-6


def test_sinusoid_sparse_window_falls_back_to_global():
    # one faraway training cluster: the window around x0 is empty, so the
    # prediction must come from the global LS fit instead
    x = np.linspace(10.0, 11.0, 30)
    y = np.sin(5.0 * x)
    m = LocalSinusoidModel(5.0, 0.25, Dataset(x, y))
    A = np.column_stack([np.sin(5.0 * x), np.cos(5.0 * x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    x0 = 0.0
    want = coef[0] * np.sin(0.0) + coef[1] * np.cos(0.0)
    assert abs(m(np.array([x0]))[0] - want) < 1e-10


def test_sinusoid_degenerate_everything_predicts_mean():
    # a single training point makes both window and global fits singular
    ds = Dataset(np.array([1.0]), np.array([4.2]))
    m = LocalSinusoidModel(3.0, 0.5, ds)
    assert m(np.array([-2.0, 1.0, 7.0])).tolist() == [4.2, 4.2, 4.2]


def test_sinusoid_is_pure():
    ds = _train(5, 30, fn=np.sin, sigma=0.2)
    m = LocalSinusoidModel(1.0, 1.0, ds)
    q = np.linspace(-1, 1, 7)
    assert np.array_equal(m(q), m(q))


# --- NWModel --------------------------------------------------------------------

def test_nw_constant_responses():
    ds = Dataset(np.linspace(0, 1, 9), np.full(9, 3.3))
    m = NWModel(0.2, ds)
    assert np.allclose(m(np.array([0.0, 0.37, 2.0])), 3.3, rtol=1e-14)


def test_nw_single_training_point():
    m = NWModel(0.3, Dataset(np.array([5.0]), np.array([7.0])))
    assert m(np.array([5.0, -40.0])).tolist() == [7.0, 7.0]


def test_nw_symmetric_pair_averages():
    m = NWModel(0.5, Dataset(np.array([-1.0, 1.0]), np.array([2.0, 4.0])))
    assert m(np.array([0.0]))[0] == 3.0


def test_nw_far_query_nearest_neighbor():
    # kernel underflows at huge distance; nearest training response wins
    m = NWModel(0.1, Dataset(np.array([0.0, 1.0]), np.array([-5.0, 5.0])))
    assert m(np.array([1e9]))[0] == 5.0
    assert m(np.array([-1e9]))[0] == -5.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 3.0))
def test_nw_convex_combination_bound(seed, bw):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 30))
    ds = Dataset(rng.uniform(-3, 3, n), rng.normal(size=n) * 4.0)
    m = NWModel(bw, ds)
    preds = m(rng.uniform(-5, 5, 25))
    assert preds.min() >= ds.y.min() - 1e-12
    assert preds.max() <= ds.y.max() + 1e-12


# --- bank construction -----------------------------------------------------------

def test_parametric_bank_order():
    ds = _train(1, 40, fn=np.sin, sigma=0.1)
    bank = build_model_bank(PARAMETRIC10, ds)
    assert len(bank) == 10
    # frequency-major, window-minor
    combos = [(m.lam, m.window_h) for m in bank]
    want = [(lam, h) for lam in SINUSOID_FREQS for h in SINUSOID_WINDOWS]
    assert combos == [(float(a), float(b)) for a, b in want]


def test_nw_bank_order():
    ds = _train(1, 40)
    bank = build_model_bank(NW5, ds)
    assert [m.bandwidth for m in bank] == list(NW5_BANDWIDTHS)


def test_custom_bank_passthrough_and_validation():
    ds = _train(1, 10)
    f = lambda x: np.zeros_like(np.asarray(x, dtype=float))
    assert build_model_bank([f], ds) == [f]
    with pytest.raises(ValueError):
        build_model_bank([], ds)
    with pytest.raises(ValueError):
        build_model_bank([f, "not callable"], ds)
    with pytest.raises(ValueError):
        build_model_bank("no_such_bank", ds)
