"""Brute-force reference implementations and proof-style diagnostics.

Everything here is deliberately slow and transparent: profiles are rebuilt
from scratch wherever the definitions say so, and the only speedup allowed
is evaluating the (pure, frozen) candidate models once per dataset. The
test suite treats this module as ground truth for the cached engine.

This module is the only place allowed to see a held-out test response: the
oracle interval and the oracle admissible level are proof devices, never
inputs to prediction. `naive_lcpms` takes no test response at all — it is
the uncached rebuild of the production pipeline, reachable from the CLI via
--naive for cross-validation at small scales.

All decision arithmetic (profile construction, threshold expressions,
tie-breaking) is shared with `selection`; see the notes there. Because the
held-out pair enters each profile through `build_profile`'s highlighted
slot, the surrogate sandwich C- <= oracle <= C+ holds exactly in float64,
not merely in exact arithmetic, and the property tests assert it with zero
tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core_types import Dataset, GammaGrid, Interval, IntervalUnion, KernelSpec, ModelFn
from .lcp_core import build_profile, predict_scalar, weighted_quantile
from .models import LocalSinusoidModel, NWModel
from .selection import (
    GammaBounds,
    SelectionResult,
    SurrogatePair,
    TraceEntry,
    coverage_frac,
    lower_level,
    safe_index_set,
    upper_level,
)

__all__ = [
    "OracleInstance",
    "oracle_interval",
    "oracle_gamma_hat",
    "oracle_coverage_counts",
    "surrogate_and_oracle_tables",
    "naive_lcpms",
    "random_instance",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleInstance:
    """A complete experiment draw: n calibration pairs plus the held-out
    test pair as the last row of `data`, with the bank, localizer, level
    grid, and target alpha. Only this module may read the last response."""

    data: Dataset
    models: tuple[ModelFn, ...]
    kernel: KernelSpec
    grid: GammaGrid
    alpha: float

    def __post_init__(self):
        if self.data.n < 2:
            raise ValueError("need at least one calibration pair plus the test pair")
        if not self.models:
            raise ValueError("need at least one model")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def n(self) -> int:
        """Calibration size (the test pair is excluded)."""
        return self.data.n - 1

    @property
    def calib(self) -> Dataset:
        return Dataset(self.data.x[: self.n], self.data.y[: self.n])

    @property
    def x_new(self) -> np.ndarray:
        return self.data.x[self.n]

    @property
    def y_new(self) -> float:
        return float(self.data.y[self.n])


def _calib_predictions(inst: OracleInstance):
    """Model predictions on the calibration block and at the test covariate,
    evaluated exactly as the production engine evaluates them."""
    calib = inst.calib
    xin = calib.model_input()
    p_cal = np.stack([np.asarray(m(xin), dtype=np.float64) for m in inst.models])  # (K, n)
    p_test = np.array([predict_scalar(m, inst.x_new) for m in inst.models])  # (K,)
    return p_cal, p_test


def _loo_base(inst: OracleInstance, w_new: np.ndarray, i: int):
    """Leave-one-out base weights at calibration index i (0-based) plus the
    test point's augmented weight, with the uniform fallback applied."""
    calib_x = inst.data.x[: inst.n]
    mask = np.arange(inst.n) != i
    base_w = inst.kernel.weights_to_point(calib_x[mask], calib_x[i])
    w_star = float(w_new[i])
    if not (np.any(base_w > 0.0) or w_star > 0.0):
        base_w = np.ones(inst.n - 1)
        w_star = 1.0
    return mask, base_w, w_star


def oracle_interval(inst: OracleInstance, i: int, k: int, gamma: float) -> Interval:
    """The interval the pipeline would build at calibration covariate X_i if
    it could swap in the true held-out pair: the localized interval over
    D_{-i} augmented with (Y_{n+1}, X_{n+1}). 1-based i and k."""
    n = inst.n
    if not (1 <= i <= n):
        raise IndexError(f"i must be in 1..{n}, got {i}")
    if not (1 <= k <= len(inst.models)):
        raise IndexError(f"k must be in 1..{len(inst.models)}, got {k}")
    p_cal, p_test = _calib_predictions(inst)
    r_cal = np.abs(inst.data.y[: n] - p_cal[k - 1])
    r_true = abs(inst.y_new - float(p_test[k - 1]))
    w_new = inst.kernel.weights_to_point(inst.data.x[:n], inst.x_new)
    mask, base_w, w_star = _loo_base(inst, w_new, i - 1)
    prof = build_profile(r_cal[mask], base_w, special=(r_true, w_star))
    return Interval(float(p_cal[k - 1, i - 1]), weighted_quantile(prof, gamma))


def surrogate_and_oracle_tables(inst: OracleInstance):
    """Half-widths of C-, oracle, and C+ for every (model k, calibration
    index i, grid level), each shape (K, n, |grid|). Built pair-by-pair from
    scratch; the workhorse of the proof-invariant tests."""
    n, K, G = inst.n, len(inst.models), inst.grid.size
    p_cal, p_test = _calib_predictions(inst)
    y_cal = inst.data.y[:n]
    r_cal = np.abs(y_cal[None, :] - p_cal)  # (K, n)
    r_true = np.abs(inst.y_new - p_test)  # (K,)
    w_new = inst.kernel.weights_to_point(inst.data.x[:n], inst.x_new)

    q_lo = np.empty((K, n, G))
    q_or = np.empty((K, n, G))
    q_up = np.empty((K, n, G))
    gv = inst.grid.values
    for i in range(n):
        mask, base_w, w_star = _loo_base(inst, w_new, i)
        for k in range(K):
            base_mag = r_cal[k, mask]
            q_lo[k, i] = build_profile(base_mag, base_w, special=(0.0, w_star)).quantiles(gv)
            q_or[k, i] = build_profile(base_mag, base_w, special=(float(r_true[k]), w_star)).quantiles(gv)
            q_up[k, i] = build_profile(base_mag, base_w, special=(np.inf, w_star)).quantiles(gv)
    return q_lo, q_or, q_up


def _test_point_quantiles(inst: OracleInstance, p_cal: np.ndarray) -> np.ndarray:
    """Half-widths of the full-calibration intervals at the test covariate,
    per model and grid level: shape (K, |grid|)."""
    n = inst.n
    y_cal = inst.data.y[:n]
    wf = inst.kernel.weights_to_point(inst.data.x[:n], inst.x_new)
    if not np.any(wf > 0.0):
        wf = np.ones(n)
    return np.stack(
        [
            build_profile(np.abs(y_cal - p_cal[k]), wf).quantiles(inst.grid.values)
            for k in range(len(inst.models))
        ]
    )


def oracle_coverage_counts(inst: OracleInstance) -> np.ndarray:
    """For each grid level, the number of indices i in 1..n+1 whose response
    falls in the shortest swapped-in interval C_min(D~_{-i}, X_i, gamma)
    (ties to the smallest model index). The proof's Z_i sum; permutation
    invariant in the absence of exact residual ties."""
    n, G = inst.n, inst.grid.size
    p_cal, p_test = _calib_predictions(inst)
    y_cal = inst.data.y[:n]
    r_cal = np.abs(y_cal[None, :] - p_cal)
    _, q_or, _ = surrogate_and_oracle_tables(inst)

    counts = np.zeros(G, dtype=np.int64)
    cols = np.arange(G)
    for i in range(n):
        sel = np.argmin(q_or[:, i, :], axis=0)  # (G,) first minimum
        member = r_cal[:, i][:, None] <= q_or[:, i, :]  # (K, G)
        counts += member[sel, cols]
    # the (n+1)-th term: the actual prediction-time interval at the test point
    q_test = _test_point_quantiles(inst, p_cal)  # (K, G)
    sel = np.argmin(q_test, axis=0)
    member = np.abs(inst.y_new - p_test)[:, None] <= q_test
    counts += member[sel, cols]
    return counts


def oracle_gamma_hat(inst: OracleInstance) -> float:
    """Largest grid level at which the swapped-in shortest intervals cover
    at least 1 - alpha of the n+1 responses (with the n+1 denominator).
    Falls back to the smallest grid level, with a warning, when no level
    qualifies — mirroring the production fallback."""
    counts = oracle_coverage_counts(inst)
    feasible = coverage_frac(counts, inst.n) >= lower_level(inst.alpha)
    hits = np.nonzero(feasible)[0]
    if hits.size == 0:
        logger.warning("oracle admissible set is empty; falling back to min(grid)")
        return float(inst.grid.values[0])
    return float(inst.grid.values[hits[-1]])


def naive_lcpms(
    calib: Dataset, x_new, alpha: float, grid: GammaGrid, models, kernel: KernelSpec
) -> SelectionResult:
    """Uncached reference pipeline: recomputes every surrogate pair, safe
    set, coverage count, and final interval from scratch at every grid
    level. Needs no test response. Bit-identical to SelectionEngine."""
    models = list(models)
    n, K = calib.n, len(models)
    x0 = np.atleast_1d(np.asarray(x_new, dtype=np.float64))
    xin = calib.model_input()
    p_cal = np.stack([np.asarray(m(xin), dtype=np.float64) for m in models])
    predsx = np.array([predict_scalar(m, x0) for m in models])
    y = calib.y
    lv_lo = lower_level(alpha)
    lv_up = upper_level(alpha, n)
    idx_all = np.arange(n)
    uniform_fired = False

    feas_lo = np.zeros(grid.size, dtype=bool)
    feas_up = np.zeros(grid.size, dtype=bool)
    for g, gamma in enumerate(grid.values):
        cnt_lo = 0
        cnt_up = 0
        for i in range(n):
            mask = idx_all != i
            base_w = kernel.weights_to_point(calib.x[mask], calib.x[i])
            w_star = float(kernel.weights_to_point(x0[None, :], calib.x[i])[0])
            if not (np.any(base_w > 0.0) or w_star > 0.0):
                base_w = np.ones(n - 1)
                w_star = 1.0
                uniform_fired = True
            pairs = []
            for k in range(K):
                base_mag = np.abs(y[mask] - p_cal[k, mask])
                prof_lo = build_profile(base_mag, base_w, special=(0.0, w_star))
                prof_up = build_profile(base_mag, base_w, special=(np.inf, w_star))
                center = float(p_cal[k, i])
                pairs.append(
                    SurrogatePair(
                        Interval(center, weighted_quantile(prof_lo, float(gamma))),
                        Interval(center, weighted_quantile(prof_up, float(gamma))),
                        i + 1,
                        k + 1,
                        float(gamma),
                    )
                )
            safe = safe_index_set(pairs)
            yi = float(y[i])
            cnt_lo += all(pairs[k - 1].lower.contains(yi) for k in safe.members)
            cnt_up += any(pairs[k - 1].upper.contains(yi) for k in safe.members)
        feas_lo[g] = coverage_frac(cnt_lo, n) >= lv_lo
        feas_up[g] = coverage_frac(cnt_up, n) >= lv_up

    def pick(feas):
        hits = np.nonzero(feas)[0]
        if hits.size:
            return int(hits[-1]), False
        return 0, True

    g_lo, fb_lo = pick(feas_lo)
    g_hi, fb_hi = pick(feas_up)
    bounds = GammaBounds(float(grid.values[g_lo]), float(grid.values[g_hi]), float(alpha), fb_lo, fb_hi)

    union = IntervalUnion.empty()
    trace = []
    for g in range(g_lo, g_hi + 1):
        gamma = float(grid.values[g])
        wf = kernel.weights_to_point(calib.x, x0)
        if not np.any(wf > 0.0):
            wf = np.ones(n)
            uniform_fired = True
        qs = np.array(
            [weighted_quantile(build_profile(np.abs(y - p_cal[k]), wf), gamma) for k in range(K)]
        )
        lengths = 2.0 * qs
        k = int(np.argmin(lengths))
        iv = Interval(float(predsx[k]), float(qs[k]))
        trace.append(TraceEntry(gamma, k + 1, iv))
        union = union.insert(iv.lo, iv.hi)
    return SelectionResult(union, tuple(trace), bounds, uniform_fired)


# --- random instance generator for property tests ---------------------------

def _poly_sine(a: float, b: float, c: float, d: float, e: float) -> ModelFn:
    def f(x):
        x = np.asarray(x, dtype=np.float64)
        return a + b * x + c * np.sin(d * x + e)

    return f


def random_instance(
    seed: int,
    grid: GammaGrid | None = None,
    n_range: tuple[int, int] = (5, 30),
    k_range: tuple[int, int] = (1, 4),
) -> OracleInstance:
    """Deterministic random instance for property tests: small calibration
    set, 1-d covariates on [-2, 2], smooth random mean with Gaussian noise,
    and a mixed bank of random smooth functions plus occasionally a trained
    kernel smoother or windowed sinusoid. Breadth over realism."""
    rng = np.random.default_rng(np.random.SeedSequence((0x5EED, int(seed))))
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    K = int(rng.integers(k_range[0], k_range[1] + 1))

    mean = _poly_sine(
        rng.normal(0, 1),
        rng.normal(0, 0.8),
        rng.normal(0, 1.5),
        rng.uniform(0.5, 4.0),
        rng.uniform(0, 2 * np.pi),
    )
    sigma = rng.uniform(0.05, 0.6)
    x = rng.uniform(-2.0, 2.0, n + 1)
    y = mean(x) + rng.normal(0.0, sigma, n + 1)

    models: list[ModelFn] = []
    train = None
    for _ in range(K):
        form = rng.uniform()
        if form < 0.7 or n < 8:
            models.append(
                _poly_sine(
                    rng.normal(0, 1),
                    rng.normal(0, 0.8),
                    rng.normal(0, 1.5),
                    rng.uniform(0.5, 4.0),
                    rng.uniform(0, 2 * np.pi),
                )
            )
            continue
        if train is None:
            xt = rng.uniform(-2.0, 2.0, 40)
            train = Dataset(xt, mean(xt) + rng.normal(0.0, sigma, 40))
        if form < 0.85:
            models.append(NWModel(rng.uniform(0.1, 1.5), train))
        else:
            models.append(LocalSinusoidModel(rng.uniform(0.5, 4.0), rng.uniform(0.4, 2.0), train))

    family = "gaussian" if rng.uniform() < 0.5 else "exponential"
    kernel = KernelSpec(family, float(rng.uniform(0.2, 2.0)))
    alpha = float(rng.uniform(0.05, 0.4))
    return OracleInstance(Dataset(x, y), tuple(models), kernel, grid or GammaGrid.default(), alpha)
