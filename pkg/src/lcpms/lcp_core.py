"""Localizer weights, weighted residual quantiles, and single-model
localized conformal intervals.

The half-width of a localized interval at level gamma is the smallest
residual magnitude whose cumulative localizer mass reaches 1 - gamma; mass
assigned to an infinite residual counts toward the normalizer but can never
be covered by a finite magnitude, so the quantile is +inf whenever the
finite mass falls short.

Arithmetic contract, shared with the batched scan in `selection` and the
reference rebuilds in `oracle_ref`: base weights are accumulated by one
sequential cumulative sum in sorted-magnitude order (infinite magnitudes
last); an optional highlighted pair -- the augmented or held-out point of a
surrogate construction -- contributes through a single addition on top of
the base partial sums, and the normalizer is `base_total + special_weight`.
Because the highlighted mass enters every profile through the same one
addition against the same base sums, cumulative masses of profiles sharing
a base are ordered exactly (never just approximately), which is what makes
the surrogate sandwich and the fast/naive agreement bit-for-bit testable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core_types import Dataset, Interval, KernelSpec, ModelFn

__all__ = [
    "ResidualProfile",
    "localizer_weights",
    "build_profile",
    "weighted_quantile",
    "lcp_interval",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ResidualProfile:
    """Sorted residual magnitudes with pooled cumulative normalized weights.

    sorted_residuals: strictly increasing finite magnitudes (ties pooled).
    cumw: matching strictly increasing cumulative masses in (0, 1];
    cumw[-1] equals total_finite_mass, the mass carried by finite residuals
    (less than 1 exactly when some weight sits on an infinite residual).
    """

    sorted_residuals: np.ndarray
    cumw: np.ndarray
    total_finite_mass: float

    def __post_init__(self):
        object.__setattr__(self, "sorted_residuals", np.asarray(self.sorted_residuals, dtype=np.float64))
        object.__setattr__(self, "cumw", np.asarray(self.cumw, dtype=np.float64))

    def quantiles(self, gammas) -> np.ndarray:
        """Vectorized weighted_quantile over an array of gamma values."""
        g = np.asarray(gammas, dtype=np.float64)
        if g.size and (np.any(g <= 0.0) or np.any(g >= 1.0)):
            raise ValueError("gamma values must lie in (0, 1)")
        levels = 1.0 - g
        js = np.searchsorted(self.cumw, levels, side="left")
        padded = np.append(self.sorted_residuals, np.inf)
        return padded[js]


def localizer_weights(xs: np.ndarray, x0, kernel: KernelSpec) -> np.ndarray:
    """Normalized localizer weights of calibration covariates against x0.

    Falls back to uniform weights (with a warning) if every raw kernel value
    underflows to zero; the ratio in the quantile is undefined at 0/0 and
    uniform weights recover global conformal behaviour.
    """
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[:, None]
    if xs.shape[0] == 0:
        raise ValueError("xs must be nonempty")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0.shape[0] != xs.shape[1]:
        raise ValueError(f"dimension mismatch: xs has d={xs.shape[1]}, x0 has d={x0.shape[0]}")
    raw = kernel.weights_to_point(xs, x0)
    raw = uniform_if_dead(raw)
    return raw / np.sum(raw)


def uniform_if_dead(raw: np.ndarray) -> np.ndarray:
    """Replace an all-zero raw weight vector with uniform raw weights."""
    if not np.any(raw > 0.0):
        logger.warning("localizer weights underflowed to zero; falling back to uniform weights")
        return np.ones_like(raw)
    return raw


def build_profile(magnitudes, raw_weights, special=None) -> ResidualProfile:
    """Build a residual profile from base (magnitude, raw weight) pairs plus
    an optional highlighted (magnitude, raw weight) pair.

    Base magnitudes may include +inf; such weight enters the normalizer but
    not the finite cumulative masses. The highlighted pair is how surrogate
    constructions inject their augmented point: its weight joins the
    normalizer through one addition and, when its magnitude is finite, its
    mass is layered onto the base partial sums with one addition each, so
    profiles sharing a base have exactly ordered cumulative masses.

    Ties among equal finite magnitudes are pooled at a single cumulative
    step (a highlighted magnitude ties ahead of equal base magnitudes);
    zero-weight steps are dropped. Total weight must be positive — apply
    the uniform fallback first when all raw weights underflow.
    """
    mags = np.asarray(magnitudes, dtype=np.float64)
    w = np.asarray(raw_weights, dtype=np.float64)
    if mags.ndim != 1 or w.shape != mags.shape:
        raise ValueError("need exactly one weight per magnitude")
    if np.any(w < 0) or np.any(np.isnan(w)) or np.any(np.isinf(w)):
        raise ValueError("weights must be finite and nonnegative")
    if np.any(np.isnan(mags)) or np.any(mags < 0):
        raise ValueError("magnitudes must be nonnegative (or +inf)")
    total_positive = bool(np.any(w > 0.0))
    if special is not None:
        m_star = float(special[0])
        w_star = float(special[1])
        if np.isnan(m_star) or m_star < 0:
            raise ValueError("highlighted magnitude must be nonnegative (or +inf)")
        if not (np.isfinite(w_star) and w_star >= 0):
            raise ValueError("highlighted weight must be finite and nonnegative")
        total_positive = total_positive or w_star > 0.0
    elif mags.size == 0:
        raise ValueError("need at least one pair")
    if not total_positive:
        raise ValueError("total weight is zero; apply the uniform fallback before building")

    finite = np.isfinite(mags)
    # canonical accumulation order: finite magnitudes stable-sorted, then infinite
    order = np.argsort(mags[finite], kind="stable")
    base_sorted = mags[finite][order]
    ordered_w = np.concatenate([w[finite][order], w[~finite]])
    n_finite = base_sorted.size
    if ordered_w.size:
        base_cum = np.cumsum(ordered_w)
        base_total = base_cum[-1]
        finite_cum = base_cum[:n_finite]
    else:
        base_total = 0.0
        finite_cum = np.empty(0)

    if special is None:
        T = base_total
        merged_mags, merged_cum = base_sorted, finite_cum
    else:
        T = base_total + w_star
        if not np.isfinite(m_star):
            merged_mags, merged_cum = base_sorted, finite_cum
        else:
            # highlighted mass layered on with one addition per step; ties
            # place it ahead of equal base magnitudes
            s = int(np.searchsorted(base_sorted, m_star, side="left"))
            star_cum = w_star + (finite_cum[s - 1] if s > 0 else 0.0)
            merged_mags = np.concatenate([base_sorted[:s], [m_star], base_sorted[s:]])
            merged_cum = np.concatenate([finite_cum[:s], [star_cum], w_star + finite_cum[s:]])

    if merged_mags.size == 0:
        return ResidualProfile(np.empty(0), np.empty(0), 0.0)
    cum = merged_cum / T

    # pool ties at the run-last entry, then drop flat (zero-mass) steps
    keep = np.empty(merged_mags.size, dtype=bool)
    keep[:-1] = merged_mags[:-1] != merged_mags[1:]
    keep[-1] = True
    merged_mags = merged_mags[keep]
    cum = cum[keep]
    rising = np.empty(cum.size, dtype=bool)
    rising[0] = cum[0] > 0.0
    rising[1:] = cum[1:] > cum[:-1]
    merged_mags = merged_mags[rising]
    cum = cum[rising]

    tfm = float(cum[-1]) if cum.size else 0.0
    return ResidualProfile(merged_mags, cum, tfm)


def weighted_quantile(profile: ResidualProfile, gamma: float) -> float:
    """Smallest profiled residual whose cumulative mass reaches 1 - gamma.

    Returns +inf when the finite mass cannot reach the level. Monotone
    nonincreasing in gamma.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    level = 1.0 - gamma
    cumw = profile.cumw
    j = int(np.searchsorted(cumw, level, side="left"))
    if j >= cumw.size:
        return float("inf")
    return float(profile.sorted_residuals[j])


def lcp_interval(
    calib: Dataset,
    f: ModelFn,
    x0,
    gamma: float,
    kernel: KernelSpec,
) -> Interval:
    """Localized conformal interval for a single fixed model.

    Centered at f(x0); half-width is the localizer-weighted quantile of the
    absolute calibration residuals |Y_i - f(X_i)| at level 1 - gamma.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    preds = np.asarray(f(calib.model_input()), dtype=np.float64)
    resid = np.abs(calib.y - preds)
    raw = uniform_if_dead(kernel.weights_to_point(calib.x, x0))
    profile = build_profile(resid, raw)
    q = weighted_quantile(profile, gamma)
    return Interval(predict_scalar(f, x0), q)


def predict_scalar(f: ModelFn, x0: np.ndarray) -> float:
    """Evaluate a model at one covariate; models take (m,) arrays when d == 1."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    out = f(x0[:1]) if x0.shape[0] == 1 else f(x0[None, :])
    return float(np.asarray(out).reshape(-1)[0])
