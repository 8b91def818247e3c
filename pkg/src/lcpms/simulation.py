"""Synthetic-data studies: generators, replication runner, and metrics.

Two regression designs are built in: a piecewise sinusoid whose frequency
and amplitude change at x = 0 (paired with the windowed-sinusoid bank), and
a smooth sin(x^3) mean whose curvature grows along the domain (paired with
the kernel-smoother bank). Covariates are uniform on the design's domain;
noise is centered Gaussian.

Replications and test points are independent work units. This build runs
them sequentially; each replication still owns a derived, independent RNG
stream (`derive_rep_seed`), so results are bit-identical regardless of how
the work would be scheduled.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .core_types import Dataset, GammaGrid, IntervalUnion, KernelSpec, ModelFn
from .lcp_core import lcp_interval
from .models import build_model_bank
from .selection import SelectionEngine, SelectionResult

__all__ = [
    "DGPFamily",
    "DGPSpec",
    "PointRecord",
    "RepMetrics",
    "ResultRow",
    "TableConfig",
    "CellError",
    "piecewise_sine_mean",
    "sine_cubed_mean",
    "mean_function",
    "generate",
    "gen_piecewise_sine",
    "gen_sine_cubed",
    "derive_rep_seed",
    "split_conformal_lengths",
    "run_replication",
    "best_single_baseline",
    "run_table",
]

logger = logging.getLogger(__name__)


class DGPFamily(Enum):
    PIECEWISE_SINE = "piecewise_sine"
    SINE_CUBED = "sine_cubed"


_DOMAIN = {
    DGPFamily.PIECEWISE_SINE: (-5.0, 5.0),
    DGPFamily.SINE_CUBED: (0.0, 3.0),
}


def piecewise_sine_mean(x: np.ndarray) -> np.ndarray:
    """sin(5x) below zero, 2 sin(3x) from zero up."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < 0.0, np.sin(5.0 * x), 2.0 * np.sin(3.0 * x))


def sine_cubed_mean(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sin(x**3)


def mean_function(family: DGPFamily) -> Callable[[np.ndarray], np.ndarray]:
    if family is DGPFamily.PIECEWISE_SINE:
        return piecewise_sine_mean
    return sine_cubed_mean


@dataclass(frozen=True)
class DGPSpec:
    """One draw's worth of configuration. sigma = 0 is allowed (degenerate
    noiseless responses) — handy for exactness tests."""

    family: DGPFamily
    sigma: float
    n_train: int
    n_calib: int
    n_test: int
    seed: int

    def __post_init__(self):
        if isinstance(self.family, str):
            object.__setattr__(self, "family", DGPFamily(self.family))
        if not (self.sigma >= 0.0):
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")
        if self.n_train < 1 or self.n_calib < 2 or self.n_test < 1:
            raise ValueError(
                f"sample sizes out of range: n_train={self.n_train}, "
                f"n_calib={self.n_calib}, n_test={self.n_test}"
            )


def generate(spec: DGPSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Draw (train, calib, test) from one seeded stream, in that order.
    The draw order is part of the determinism contract: train covariates,
    train noise, then calibration, then test."""
    lo, hi = _DOMAIN[spec.family]
    mean = mean_function(spec.family)
    rng = np.random.default_rng(spec.seed)

    def block(m: int) -> Dataset:
        x = rng.uniform(lo, hi, m)
        eps = rng.normal(0.0, spec.sigma, m)
        return Dataset(x, mean(x) + eps)

    return block(spec.n_train), block(spec.n_calib), block(spec.n_test)


def gen_piecewise_sine(spec: DGPSpec) -> tuple[Dataset, Dataset, Dataset]:
    if spec.family is not DGPFamily.PIECEWISE_SINE:
        raise ValueError(f"expected a piecewise-sine spec, got {spec.family}")
    return generate(spec)


def gen_sine_cubed(spec: DGPSpec) -> tuple[Dataset, Dataset, Dataset]:
    if spec.family is not DGPFamily.SINE_CUBED:
        raise ValueError(f"expected a sine-cubed spec, got {spec.family}")
    return generate(spec)


@dataclass(frozen=True)
class PointRecord:
    """Per-test-point outcome, enough to drive the per-point CSV export."""

    x: float
    true_mean: float
    union: IntervalUnion
    gamma_lo: float
    gamma_hi: float
    selected_hi: int  # model picked at the tightest admissible level (1-based)
    modal_selected: int  # most frequent pick across the band, ties to smallest
    covered: bool
    length: float


@dataclass(frozen=True)
class RepMetrics:
    """One replication's aggregates. split_single_lengths holds each model's
    plain split conformal length at level alpha (the hindsight baseline's raw
    material); single_mean_lengths holds the mean lengths of the localized
    one-model pipeline when requested. Fallback flags propagate from the
    engine."""

    mean_length: float
    coverage: float
    split_single_lengths: tuple[float, ...]
    single_mean_lengths: tuple[float, ...] | None
    records: tuple[PointRecord, ...]
    uniform_fallback: bool
    bound_fallback: bool


def derive_rep_seed(master_seed: int, n: int, sigma: float, bw: float, rep: int) -> int:
    """Fixed splitting rule: hash the master seed with the cell coordinates
    and replication index. Floats enter by their bit patterns so distinct
    cells can never collide by rounding."""
    sig_bits = int(np.float64(sigma).view(np.uint64))
    bw_bits = int(np.float64(bw).view(np.uint64))
    ss = np.random.SeedSequence((int(master_seed), int(n), sig_bits, bw_bits, int(rep)))
    return int(ss.generate_state(1, np.uint64)[0])


def split_conformal_lengths(calib: Dataset, models: Sequence[ModelFn], alpha: float) -> np.ndarray:
    """Per-model lengths of plain (unweighted) split conformal intervals at
    miscoverage alpha: twice the ceil((n+1)(1-alpha))-th smallest absolute
    calibration residual. The length does not depend on the query point, so
    no test data is involved. Infinite when n is too small to reach the
    required order statistic."""
    n = calib.n
    r = int(np.ceil((n + 1) * (1.0 - alpha))) - 1
    out = np.empty(len(models))
    if r >= n:
        out.fill(np.inf)
        return out
    xin = calib.model_input()
    for k, m in enumerate(models):
        resid = np.sort(np.abs(calib.y - np.asarray(m(xin), dtype=float)))
        out[k] = 2.0 * resid[r]
    return out


def _modal_index(result: SelectionResult) -> int:
    counts = np.bincount([e.model_index for e in result.trace])
    return int(np.argmax(counts))  # first max == smallest index on ties


def _point_record(x: float, mu: float, y: float, result: SelectionResult) -> PointRecord:
    return PointRecord(
        x=float(x),
        true_mean=float(mu),
        union=result.union,
        gamma_lo=result.bounds.gamma_lo,
        gamma_hi=result.bounds.gamma_hi,
        selected_hi=result.trace[-1].model_index,
        modal_selected=_modal_index(result),
        covered=bool(result.union.contains(float(y))),
        length=result.union.measure,
    )


def run_replication(
    dgp: DGPSpec,
    bank_spec,
    kernel: KernelSpec,
    alpha: float = 0.1,
    grid: GammaGrid | None = None,
    naive: bool = False,
    with_singles: bool = True,
) -> RepMetrics:
    """One full replication: draw data, build the bank on the training
    block, run the selection pipeline on every test point. `naive=True`
    routes everything through the uncached reference pipeline instead of
    the engine (slow; for cross-validation at small scales)."""
    grid = grid or GammaGrid.default()
    train, calib, test = generate(dgp)
    models = build_model_bank(bank_spec, train)
    K = len(models)
    mean = mean_function(dgp.family)
    mu_test = mean(test.model_input())
    split_lens = split_conformal_lengths(calib, models, alpha)

    records: list[PointRecord] = []
    single_sums = np.zeros(K) if with_singles else None
    uni_flag = False
    bound_fb = False

    if naive:
        from .oracle_ref import naive_lcpms  # test-grade path; keep out of the hot import

        for j in range(test.n):
            x = test.x[j]
            res = naive_lcpms(calib, x, alpha, grid, models, kernel)
            records.append(_point_record(test.x[j, 0], mu_test[j], test.y[j], res))
            uni_flag |= res.uniform_fallback
            bound_fb |= res.bounds.fallback_lo or res.bounds.fallback_hi
            if with_singles:
                for k in range(K):
                    s = naive_lcpms(calib, x, alpha, grid, [models[k]], kernel)
                    single_sums[k] += s.union.measure
    else:
        engine = SelectionEngine(calib, models, kernel, grid, alpha)
        for j in range(test.n):
            ev = engine.evaluate(test.x[j], with_singles=with_singles)
            res = ev.result
            records.append(_point_record(test.x[j, 0], mu_test[j], test.y[j], res))
            uni_flag |= res.uniform_fallback
            bound_fb |= res.bounds.fallback_lo or res.bounds.fallback_hi
            if with_singles:
                for k in range(K):
                    single_sums[k] += ev.singles[k].union.measure

    lengths = np.array([r.length for r in records])
    covered = np.array([r.covered for r in records])
    return RepMetrics(
        mean_length=float(np.mean(lengths)),
        coverage=float(np.mean(covered)),
        split_single_lengths=tuple(float(v) for v in split_lens),
        single_mean_lengths=tuple(single_sums / test.n) if with_singles else None,
        records=tuple(records),
        uniform_fallback=uni_flag,
        bound_fallback=bound_fb,
    )


_BASELINE_VARIANTS = ("split", "localized", "fixed_gamma")


def best_single_baseline(
    dgp: DGPSpec,
    bank_spec,
    kernel: KernelSpec,
    alpha: float = 0.1,
    grid: GammaGrid | None = None,
    n_reps: int = 100,
    variant: str = "split",
) -> tuple[int, float]:
    """Hindsight baseline: the single model whose intervals are shortest on
    average across replications, with that average. The reported variant,
    "split", is plain split conformal prediction at level alpha — no
    localizer, no selection machinery. "localized" runs the full one-model
    selection pipeline per model; "fixed_gamma" evaluates the localized
    interval at the fixed level gamma = alpha, which carries no
    finite-sample guarantee. Returns a 1-based model index."""
    if variant not in _BASELINE_VARIANTS:
        raise ValueError(f"variant must be one of {_BASELINE_VARIANTS}, got {variant!r}")
    grid = grid or GammaGrid.default()
    sums = None
    count = 0
    for rep in range(n_reps):
        seed = derive_rep_seed(dgp.seed, dgp.n_calib, dgp.sigma, kernel.bandwidth, rep)
        spec = replace(dgp, seed=seed)
        if variant == "split":
            train, calib, _ = generate(spec)
            models = build_model_bank(bank_spec, train)
            per_rep = split_conformal_lengths(calib, models, alpha)
        elif variant == "localized":
            m = run_replication(spec, bank_spec, kernel, alpha, grid, with_singles=True)
            per_rep = np.asarray(m.single_mean_lengths)
        else:
            train, calib, test = generate(spec)
            models = build_model_bank(bank_spec, train)
            per_rep = np.zeros(len(models))
            for k, model in enumerate(models):
                per_rep[k] = np.mean(
                    [
                        lcp_interval(calib, model, test.x[j], alpha, kernel).length
                        for j in range(test.n)
                    ]
                )
        sums = per_rep if sums is None else sums + per_rep
        count += 1
    means = sums / count
    k = int(np.argmin(means))
    return k + 1, float(means[k])


@dataclass(frozen=True)
class ResultRow:
    """One table cell, averaged over replications."""

    n: int
    sigma: float
    localizer_bw: float
    ensemble_len: float
    best_single_len: float
    ensemble_coverage: float
    best_single_index: int
    n_reps: int

    def __post_init__(self):
        if not (self.ensemble_len >= 0.0 and self.best_single_len >= 0.0):
            raise ValueError("interval lengths must be nonnegative")
        if not (0.0 <= self.ensemble_coverage <= 1.0):
            raise ValueError(f"coverage must lie in [0, 1], got {self.ensemble_coverage}")


@dataclass(frozen=True)
class TableConfig:
    """Experiment matrix: the cross product of n, sigma, and localizer
    bandwidth values, one design family and bank throughout."""

    family: DGPFamily
    bank: str | Sequence[ModelFn]
    kernel_family: str
    n_values: tuple[int, ...]
    sigma_values: tuple[float, ...]
    bw_values: tuple[float, ...]
    alpha: float = 0.1
    grid: GammaGrid | None = None
    n_reps: int = 100
    n_test: int = 200
    n_train: int | None = None  # None: match the calibration size
    master_seed: int = 1
    naive: bool = False


class CellError(RuntimeError):
    """A table cell failed; the message names the cell."""


def run_table(cfg: TableConfig) -> list[ResultRow]:
    """One ResultRow per (n, sigma, bw) cell, rows sorted by those keys.
    Deterministic given the master seed: every replication's seed is derived
    from (master, cell, rep) alone, so cells can be recomputed in isolation
    and schedule changes cannot reorder randomness."""
    if not (cfg.n_values and cfg.sigma_values and cfg.bw_values):
        raise ValueError("experiment matrix must be nonempty")
    grid = cfg.grid or GammaGrid.default()
    rows: list[ResultRow] = []
    for n in sorted(set(cfg.n_values)):
        for sigma in sorted(set(cfg.sigma_values)):
            for bw in sorted(set(cfg.bw_values)):
                try:
                    rows.append(_run_cell(cfg, grid, n, sigma, bw))
                except Exception as exc:
                    raise CellError(
                        f"cell (n={n}, sigma={sigma}, localizer_bw={bw}) failed: {exc}"
                    ) from exc
    return rows


def _run_cell(cfg: TableConfig, grid: GammaGrid, n: int, sigma: float, bw: float) -> ResultRow:
    kernel = KernelSpec(cfg.kernel_family, bw)
    len_sum = 0.0
    cov_sum = 0.0
    single_sums = None
    for rep in range(cfg.n_reps):
        seed = derive_rep_seed(cfg.master_seed, n, sigma, bw, rep)
        spec = DGPSpec(cfg.family, sigma, cfg.n_train or n, n, cfg.n_test, seed)
        m = run_replication(
            spec, cfg.bank, kernel, cfg.alpha, grid, naive=cfg.naive, with_singles=False
        )
        len_sum += m.mean_length
        cov_sum += m.coverage
        per_rep = np.asarray(m.split_single_lengths)
        single_sums = per_rep if single_sums is None else single_sums + per_rep
    single_means = single_sums / cfg.n_reps
    best_k = int(np.argmin(single_means))
    logger.info(
        "cell n=%d sigma=%g bw=%g: ensemble=%.4f best_single=%.4f (model %d)",
        n, sigma, bw, len_sum / cfg.n_reps, single_means[best_k], best_k + 1,
    )
    return ResultRow(
        n=n,
        sigma=float(sigma),
        localizer_bw=float(bw),
        ensemble_len=len_sum / cfg.n_reps,
        best_single_len=float(single_means[best_k]),
        ensemble_coverage=cov_sum / cfg.n_reps,
        best_single_index=best_k + 1,
        n_reps=cfg.n_reps,
    )
