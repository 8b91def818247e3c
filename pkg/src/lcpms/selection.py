"""Per-point model selection with localized conformal intervals.

Given K candidate regressors, a calibration set, and a grid of candidate
miscoverage levels, this module computes for a test covariate:

  * surrogate interval pairs C-(i,k,gamma) / C+(i,k,gamma) — the localized
    intervals obtained by augmenting the leave-one-out calibration set with
    the test covariate carrying a perfectly conforming (residual 0) or
    extremely nonconforming (residual +inf) response;
  * safe index sets: models whose best-case (C-) length does not exceed the
    shortest worst-case (C+) length at that calibration point;
  * an admissible level band [gamma_lo, gamma_hi] certified by calibration
    coverage counts with an (n+1) denominator;
  * the final prediction set: the union, over grid levels in the band, of
    the shortest full-data interval among the K candidates.

Decision arithmetic is canonical and shared with the brute-force rebuild in
`oracle_ref`: quantile masses come from one sequential cumulative sum of
raw localizer weights in sorted-residual order, the augmented point's
weight enters through a single addition (see `lcp_core.build_profile`),
thresholds are evaluated as `count / (n + 1.0) >= level` with
`1.0 - alpha` and `1.0 - alpha - 1.0/(n + 1.0)`, and leave-one-out reuses
the full-data cumulative sums by zeroing the dropped weight (adding 0.0
preserves every later partial sum bit-for-bit, and a zeroed step can never
be chosen because its cumulative value duplicates its predecessor's). The
fast path is therefore bit-identical to the naive per-level rebuild, not
just close.

The cached engine precomputes everything that does not depend on the test
covariate (residual sort orders and leave-one-out cumulative weight sums);
per test point it only reweights by the augmented weights and scans the
level grid with binary searches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core_types import (
    Dataset,
    GammaGrid,
    Interval,
    IntervalUnion,
    KernelSpec,
    ModelFn,
    interval_length,
)
from .lcp_core import build_profile, predict_scalar, uniform_if_dead, weighted_quantile

__all__ = [
    "SurrogatePair",
    "SafeSet",
    "GammaBounds",
    "TraceEntry",
    "SelectionResult",
    "PointEvaluation",
    "SelectionEngine",
    "surrogate_pair",
    "safe_index_set",
    "gamma_bounds",
    "lcpms_interval",
    "lower_level",
    "upper_level",
    "coverage_frac",
]

logger = logging.getLogger(__name__)


# --- canonical decision arithmetic, shared with oracle_ref ------------------
#
# Both the cached engine and the naive rebuild must compare the same floats,
# so the three threshold expressions live here and nowhere else.

def lower_level(alpha: float) -> float:
    """Calibration-coverage threshold certifying gamma_lo: 1 - alpha."""
    return 1.0 - alpha


def upper_level(alpha: float, n: int) -> float:
    """Threshold certifying gamma_hi: 1 - alpha - 1/(n+1)."""
    return 1.0 - alpha - 1.0 / (n + 1.0)


def coverage_frac(count, n: int):
    """Empirical coverage of n calibration indicators with the n+1 denominator."""
    return count / (n + 1.0)


# --- result types -----------------------------------------------------------

@dataclass(frozen=True)
class SurrogatePair:
    """Lower (C-) and upper (C+) surrogate intervals for one leave-one-out
    calibration index and one candidate model, both centered at the model's
    prediction at that calibration covariate. lower is contained in upper."""

    lower: Interval
    upper: Interval
    i: int  # calibration index, 1-based
    k: int  # model index, 1-based
    gamma: float


@dataclass(frozen=True)
class SafeSet:
    """Models whose best-case interval is no longer than the shortest
    worst-case interval at calibration index i. Never empty: the model with
    the shortest C+ qualifies through its own C-."""

    i: int
    gamma: float
    members: tuple[int, ...]  # ascending 1-based model indices


@dataclass(frozen=True)
class GammaBounds:
    """Admissible miscoverage band certified by calibration coverage counts.

    fallback flags record that the corresponding feasible set was empty and
    the most conservative grid level was substituted.
    """

    gamma_lo: float
    gamma_hi: float
    alpha: float
    fallback_lo: bool = False
    fallback_hi: bool = False


@dataclass(frozen=True)
class TraceEntry:
    """Shortest candidate interval at one admissible level; ties among equal
    lengths resolve to the smallest model index."""

    gamma: float
    model_index: int  # 1-based
    interval: Interval


@dataclass(frozen=True)
class SelectionResult:
    union: IntervalUnion
    trace: tuple[TraceEntry, ...]
    bounds: GammaBounds
    uniform_fallback: bool  # a localizer weight vector underflowed to zero


@dataclass(frozen=True)
class PointEvaluation:
    """Ensemble result for one test covariate plus, optionally, the result
    each candidate would produce as a one-model bank (used by the
    best-single baseline; bit-identical to running that bank alone)."""

    result: SelectionResult
    predictions: np.ndarray  # (K,) model predictions at the test covariate
    singles: tuple[SelectionResult, ...] | None = None


# --- reference building blocks ----------------------------------------------

def surrogate_pair(
    calib: Dataset,
    i: int,
    model: ModelFn,
    x_new,
    gamma: float,
    kernel: KernelSpec,
    k: int = 1,
) -> SurrogatePair:
    """Surrogate interval pair at 1-based calibration index i.

    Both intervals are centered at the model's prediction at X_i and use the
    leave-one-out calibration residuals plus the augmented test point: with
    residual 0 for the lower interval, +inf for the upper, each carrying
    localizer weight H(x_new, X_i).
    """
    n = calib.n
    if not (1 <= i <= n):
        raise IndexError(f"i must be in 1..{n}, got {i}")
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    idx = i - 1
    x0 = np.atleast_1d(np.asarray(x_new, dtype=np.float64))
    preds = np.asarray(model(calib.model_input()), dtype=np.float64)
    resid = np.abs(calib.y - preds)
    center = float(preds[idx])

    mask = np.arange(n) != idx
    base_mag = resid[mask]
    base_w = kernel.weights_to_point(calib.x[mask], calib.x[idx])
    w_star = float(kernel.weights_to_point(x0[None, :], calib.x[idx])[0])
    if not (np.any(base_w > 0.0) or w_star > 0.0):
        logger.warning("surrogate localizer weights underflowed to zero; using uniform weights")
        base_w = np.ones_like(base_w)
        w_star = 1.0
    q_lo = weighted_quantile(build_profile(base_mag, base_w, special=(0.0, w_star)), gamma)
    q_up = weighted_quantile(build_profile(base_mag, base_w, special=(np.inf, w_star)), gamma)
    return SurrogatePair(Interval(center, q_lo), Interval(center, q_up), i, k, gamma)


def safe_index_set(pairs) -> SafeSet:
    """Safe index set from one SurrogatePair per model at fixed (i, gamma):
    {k : |C-_k| <= min_k' |C+_k'|}, with extended-real comparisons."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need one surrogate pair per model")
    i, gamma = pairs[0].i, pairs[0].gamma
    if any(p.i != i or p.gamma != gamma for p in pairs):
        raise ValueError("surrogate pairs must share one (i, gamma)")
    min_up = min(interval_length(p.upper) for p in pairs)
    members = tuple(sorted(p.k for p in pairs if interval_length(p.lower) <= min_up))
    if not members:
        raise AssertionError("safe index set is provably nonempty")
    return SafeSet(i, gamma, members)


# --- the cached engine --------------------------------------------------------

class SelectionEngine:
    """Precomputed selection state for one (calibration set, model bank,
    localizer, level grid, alpha), reusable across many test covariates.

    Build cost O(K n^2 + K n log n); per-point cost O(K n^2) elementwise
    work plus O(K n (log n) |grid|-ish) binary searches, versus the naive
    O(|grid| K n^2 log n) rebuild.
    """

    def __init__(self, calib: Dataset, models, kernel: KernelSpec, grid: GammaGrid, alpha: float):
        if not (0.0 < alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
        models = list(models)
        if not models:
            raise ValueError("model bank must contain at least one model")
        self.calib = calib
        self.models = models
        self.kernel = kernel
        self.grid = grid
        self.alpha = float(alpha)

        n, K = calib.n, len(models)
        self._n, self._K = n, K
        xin = calib.model_input()
        preds = np.stack([np.asarray(m(xin), dtype=np.float64) for m in models])  # (K, n)
        if preds.shape != (K, n) or not np.all(np.isfinite(preds)):
            raise ValueError("models must return one finite prediction per calibration point")
        self._P = preds
        self._R = np.abs(calib.y[None, :] - preds)  # residual magnitudes (K, n)

        W = kernel.pairwise(calib.x)  # W[j, i] = weight of X_j against center X_i
        order = np.argsort(self._R, axis=1, kind="stable")  # (K, n)
        pos = np.empty_like(order)
        np.put_along_axis(pos, order, np.broadcast_to(np.arange(n), (K, n)), axis=1)
        self._ord = order
        self._pos = pos

        # Zt[k, i, p]: partial sum of the weights-to-X_i of the first p+1
        # residuals in model k's sorted order, with index i's own weight
        # zeroed out (the leave-one-out trick; see module docstring).
        Zt = np.empty((K, n, n))
        cols = np.arange(n)
        for k in range(K):
            V = W[order[k], :]
            V[pos[k], cols] = 0.0
            Zt[k] = np.cumsum(V, axis=0).T
        self._Zt = Zt
        self._S = np.ascontiguousarray(Zt[:, :, -1])  # (K, n) leave-one-out weight totals

        r_sorted = np.take_along_axis(self._R, order, axis=1)
        inf_col = np.full((K, 1), np.inf)
        self._Rext = np.concatenate([r_sorted, inf_col], axis=1)  # (K, n+1), +inf sentinel
        self._Lext = np.concatenate([np.zeros((K, 1)), r_sorted, inf_col], axis=1)  # (K, n+2)

        u = 1.0 - grid.values  # descending levels, aligned with gamma order
        if not np.all(np.diff(u) < 0):
            raise ValueError("grid is too fine: adjacent levels collide in float64")
        self._u_desc = u
        self._u_asc = np.ascontiguousarray(u[::-1])
        self._lower = lower_level(alpha)
        self._upper = upper_level(alpha, n)

    # -- helpers -------------------------------------------------------------

    def _patched_cums(self, dead: np.ndarray):
        """Leave-one-out cumulative sums with dead columns (all raw weights
        zero) replaced by the uniform-weight fallback."""
        Zt = self._Zt.copy()
        n = self._n
        for k in range(self._K):
            for i in np.nonzero(dead)[0]:
                v = np.ones(n)
                v[self._pos[k, i]] = 0.0
                Zt[k, i] = np.cumsum(v)
        return Zt

    def _pick_bound(self, feasible_desc: np.ndarray) -> tuple[int, bool]:
        """Largest feasible grid index (input ordered by descending gamma);
        falls back to the smallest grid level when nothing is feasible."""
        hits = np.nonzero(feasible_desc)[0]
        if hits.size:
            return self.grid.size - 1 - int(hits[0]), False
        return 0, True

    # -- evaluation ------------------------------------------------------------

    def evaluate(self, x_new, with_singles: bool = False) -> PointEvaluation:
        """Full selection pipeline at one test covariate.

        with_singles also returns, per candidate k, the result of the
        one-model bank [models[k]] — computed from the same cached arrays,
        bit-identical to running that bank through its own engine.
        """
        n, K, G = self._n, self._K, self.grid.size
        x0 = np.atleast_1d(np.asarray(x_new, dtype=np.float64))
        if x0.shape[0] != self.calib.dim:
            raise ValueError(f"x_new must have dimension {self.calib.dim}")
        w_new = self.kernel.weights_to_point(self.calib.x, x0)  # (n,)
        predsx = np.array([predict_scalar(m, x0) for m in self.models])

        uniform_fired = False
        dead = (self._S[0] == 0.0) & (w_new == 0.0)
        if np.any(dead):
            logger.warning(
                "localizer weights underflowed to zero at %d calibration points; using uniform weights",
                int(np.count_nonzero(dead)),
            )
            uniform_fired = True
            w_eff = np.where(dead, 1.0, w_new)
            Zt = self._patched_cums(dead)
            S = Zt[:, :, -1]
        else:
            w_eff = w_new
            Zt = self._Zt
            S = self._S

        T = S + w_eff[None, :]  # (K, n) normalizers, base total + augmented weight
        Tcol = T[:, :, None]
        cum_up = Zt / Tcol
        cum_lo = np.empty((K, n, n + 1))
        cum_lo[:, :, 0] = w_eff[None, :]
        np.add(w_eff[None, :, None], Zt, out=cum_lo[:, :, 1:])
        cum_lo /= Tcol

        # first sorted index whose cumulative mass reaches each level
        u_asc = self._u_asc
        j_up = np.empty((K, n, G), dtype=np.int64)
        j_lo = np.empty((K, n, G), dtype=np.int64)
        for k in range(K):
            cu, cl, ju, jl = cum_up[k], cum_lo[k], j_up[k], j_lo[k]
            for i in range(n):
                ju[i] = cu[i].searchsorted(u_asc, side="left")
                jl[i] = cl[i].searchsorted(u_asc, side="left")
        kidx = np.arange(K)[:, None, None]
        q_up = self._Rext[kidx, j_up]  # (K, n, G), levels in descending-gamma order
        q_lo = self._Lext[kidx, j_lo]

        # safe sets and calibration coverage counts, per level
        min_up = np.min(q_up, axis=0)  # (n, G)
        safe = q_lo <= min_up[None, :, :]
        if not np.all(np.any(safe, axis=0)):
            raise AssertionError("safe index set is provably nonempty")
        mem_lo = self._R[:, :, None] <= q_lo  # Y_i within C- of model k
        mem_up = self._R[:, :, None] <= q_up
        cnt_lo = np.sum(np.all(~safe | mem_lo, axis=0), axis=0)  # (G,)
        cnt_up = np.sum(np.any(safe & mem_up, axis=0), axis=0)

        g_lo, fb_lo = self._pick_bound(coverage_frac(cnt_lo, n) >= self._lower)
        g_hi, fb_hi = self._pick_bound(coverage_frac(cnt_up, n) >= self._upper)
        if fb_lo or fb_hi:
            logger.warning("no grid level satisfied the coverage condition; falling back to min(grid)")
        if g_hi < g_lo:
            raise AssertionError("admissible band is provably nonempty")
        bounds = GammaBounds(
            float(self.grid.values[g_lo]), float(self.grid.values[g_hi]), self.alpha, fb_lo, fb_hi
        )

        # full-data intervals over the admissible band
        if np.any(w_new > 0.0):
            wf = w_new
        else:
            logger.warning("localizer weights at the test covariate underflowed; using uniform weights")
            uniform_fired = True
            wf = np.ones(n)
        cum_f = np.cumsum(wf[self._ord], axis=1)
        cum_f /= cum_f[:, -1:].copy()
        u_band = self._u_desc[g_lo : g_hi + 1]
        j_f = np.empty((K, u_band.size), dtype=np.int64)
        for k in range(K):
            j_f[k] = np.searchsorted(cum_f[k], u_band, side="left")
        q_f = self._Rext[np.arange(K)[:, None], j_f]  # (K, band)

        band_gammas = self.grid.values[g_lo : g_hi + 1]
        result = self._assemble(band_gammas, q_f, predsx, bounds, uniform_fired)

        singles = None
        if with_singles:
            singles = tuple(
                self._single_result(k, mem_lo[k], mem_up[k], cum_f[k], predsx[k], uniform_fired)
                for k in range(K)
            )
        return PointEvaluation(result=result, predictions=predsx, singles=singles)

    def _assemble(self, band_gammas, q_f, predsx, bounds, uniform_fired) -> SelectionResult:
        """Union and trace of the shortest candidate interval per band level."""
        sel = np.argmin(q_f, axis=0)  # first minimum = smallest model index
        union = IntervalUnion.empty()
        trace = []
        for b, g in enumerate(band_gammas):
            k = int(sel[b])
            iv = Interval(float(predsx[k]), float(q_f[k, b]))
            trace.append(TraceEntry(float(g), k + 1, iv))
            union = union.insert(iv.lo, iv.hi)
        return SelectionResult(union, tuple(trace), bounds, uniform_fired)

    def _single_result(self, k, mem_lo_k, mem_up_k, cum_f_k, pred_k, uniform_fired) -> SelectionResult:
        """The one-model-bank result for candidate k, from the cached arrays.

        With K=1 the safe set is always {1}, so the coverage indicators are
        the plain membership booleans of model k; the admissible band may
        differ from the ensemble's, so its interval slice is looked up anew.
        """
        n = self._n
        cnt_lo = np.sum(mem_lo_k, axis=0)
        cnt_up = np.sum(mem_up_k, axis=0)
        g_lo, fb_lo = self._pick_bound(coverage_frac(cnt_lo, n) >= self._lower)
        g_hi, fb_hi = self._pick_bound(coverage_frac(cnt_up, n) >= self._upper)
        bounds = GammaBounds(
            float(self.grid.values[g_lo]), float(self.grid.values[g_hi]), self.alpha, fb_lo, fb_hi
        )
        j = np.searchsorted(cum_f_k, self._u_desc[g_lo : g_hi + 1], side="left")
        union = IntervalUnion.empty()
        trace = []
        for b, g in enumerate(range(g_lo, g_hi + 1)):
            iv = Interval(float(pred_k), float(self._Rext[k, j[b]]))
            trace.append(TraceEntry(float(self.grid.values[g]), 1, iv))
            union = union.insert(iv.lo, iv.hi)
        return SelectionResult(union, tuple(trace), bounds, uniform_fired)


def gamma_bounds(
    calib: Dataset, x_new, alpha: float, grid: GammaGrid, models, kernel: KernelSpec
) -> GammaBounds:
    """Admissible miscoverage band at one test covariate (one-shot engine)."""
    engine = SelectionEngine(calib, models, kernel, grid, alpha)
    return engine.evaluate(x_new).result.bounds


def lcpms_interval(
    calib: Dataset, x_new, alpha: float, grid: GammaGrid, models, kernel: KernelSpec
) -> SelectionResult:
    """Prediction set for one test covariate: the union over admissible grid
    levels of the shortest candidate interval. One-shot engine; build a
    SelectionEngine directly when evaluating many points."""
    engine = SelectionEngine(calib, models, kernel, grid, alpha)
    return engine.evaluate(x_new).result
