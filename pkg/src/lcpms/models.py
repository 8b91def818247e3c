"""Candidate regressor families: windowed sinusoid least-squares fits and
Nadaraya-Watson kernel smoothers.

Models are built once from a training sample and frozen; afterwards they are
pure functions of the query covariates (1-d only for these two families).
The bank builders fix the index order of the candidates, which downstream
tie-breaking depends on.
"""

from __future__ import annotations

import numpy as np

from .core_types import Dataset, ModelFn

__all__ = [
    "LocalSinusoidModel",
    "NWModel",
    "sinusoid_predict",
    "nw_predict",
    "build_model_bank",
    "PARAMETRIC10",
    "NW5",
    "SINUSOID_FREQS",
    "SINUSOID_WINDOWS",
    "NW5_BANDWIDTHS",
]

PARAMETRIC10 = "parametric10"
NW5 = "nw5"

SINUSOID_FREQS = (1.0, 2.0, 3.0, 4.0, 5.0)
SINUSOID_WINDOWS = (0.5, 1.0)
NW5_BANDWIDTHS = (0.1, 0.2, 0.4, 0.8, 1.6)

# 2x2 normal equations count as singular when det <= tol * (G00 * G11)
_SINGULAR_TOL = 1e-10


def _require_1d(train: Dataset, what: str):
    if train.dim != 1:
        raise ValueError(f"{what} supports 1-d covariates only, got d={train.dim}")


class LocalSinusoidModel:
    """Per-query least squares fit of a*sin(lam*x) + b*cos(lam*x) on the
    closed window |X_i - x| <= window_h.

    The amplitude/phase form A*sin(lam*x + phi) is reparameterized into the
    linear basis (sin, cos), so each query solves a 2x2 system assembled
    from prefix sums over the sorted training sample. Degenerate windows
    (< 2 points, or normal equations singular under the scaled determinant
    check) fall back to a global least-squares fit over all training points,
    and to the training mean if that is singular too.
    """

    def __init__(self, lam: float, window_h: float, train: Dataset):
        if not (lam > 0):
            raise ValueError(f"lam must be positive, got {lam}")
        if not (window_h > 0):
            raise ValueError(f"window_h must be positive, got {window_h}")
        _require_1d(train, "LocalSinusoidModel")
        self.lam = float(lam)
        self.window_h = float(window_h)

        xt = train.model_input()
        order = np.argsort(xt, kind="stable")
        xs = xt[order]
        ys = train.y[order]
        s = np.sin(self.lam * xs)
        c = np.cos(self.lam * xs)

        def prefix(v):
            out = np.empty(v.size + 1)
            out[0] = 0.0
            np.cumsum(v, out=out[1:])
            return out

        self._xs = xs
        self._pss = prefix(s * s)
        self._psc = prefix(s * c)
        self._pcc = prefix(c * c)
        self._psy = prefix(s * ys)
        self._pcy = prefix(c * ys)
        self._mean = float(np.mean(train.y))
        self._global_ab = self._solve_global()

    def _solve_global(self):
        g00, g01, g11 = self._pss[-1], self._psc[-1], self._pcc[-1]
        det = g00 * g11 - g01 * g01
        if det <= _SINGULAR_TOL * (g00 * g11):
            return None
        b0, b1 = self._psy[-1], self._pcy[-1]
        return ((b0 * g11 - b1 * g01) / det, (b1 * g00 - b0 * g01) / det)

    def __call__(self, x) -> np.ndarray:
        xq = np.asarray(x, dtype=np.float64).reshape(-1)
        lo = np.searchsorted(self._xs, xq - self.window_h, side="left")
        hi = np.searchsorted(self._xs, xq + self.window_h, side="right")

        def window(p):
            return p[hi] - p[lo]

        g00, g01, g11 = window(self._pss), window(self._psc), window(self._pcc)
        b0, b1 = window(self._psy), window(self._pcy)
        det = g00 * g11 - g01 * g01
        good = ((hi - lo) >= 2) & (det > _SINGULAR_TOL * (g00 * g11))

        with np.errstate(divide="ignore", invalid="ignore"):
            a = (b0 * g11 - b1 * g01) / det
            b = (b1 * g00 - b0 * g01) / det
        sq = np.sin(self.lam * xq)
        cq = np.cos(self.lam * xq)
        if self._global_ab is None:
            fallback = np.full(xq.size, self._mean)
        else:
            ga, gb = self._global_ab
            fallback = ga * sq + gb * cq
        return np.where(good, a * sq + b * cq, fallback)

    def describe(self) -> str:
        return f"sinusoid(lam={self.lam:g}, window={self.window_h:g})"


class NWModel:
    """Nadaraya-Watson kernel smoother with Gaussian kernel exp(-u^2/2),
    u = (x - X_i)/bandwidth.

    The prediction is a convex combination of training responses, hence
    always inside [min Y, max Y]; the output is clipped to that range so the
    bound survives floating-point rounding at extreme weights. A query so
    far from the data that the kernel mass underflows to zero gets the
    nearest neighbor's response.
    """

    def __init__(self, bandwidth: float, train: Dataset):
        if not (bandwidth > 0):
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
        _require_1d(train, "NWModel")
        self.bandwidth = float(bandwidth)
        self._xt = np.array(train.model_input())
        self._yt = np.array(train.y)
        self._ylo = float(np.min(self._yt))
        self._yhi = float(np.max(self._yt))

    def __call__(self, x) -> np.ndarray:
        xq = np.asarray(x, dtype=np.float64).reshape(-1)
        u = (xq[:, None] - self._xt[None, :]) / self.bandwidth
        w = np.exp(-0.5 * u * u)
        den = np.sum(w, axis=1)
        num = np.sum(w * self._yt[None, :], axis=1)
        dead = ~(den > 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = num / den
        if np.any(dead):
            nn = np.argmin(np.abs(xq[dead, None] - self._xt[None, :]), axis=1)
            out[dead] = self._yt[nn]
        return np.clip(out, self._ylo, self._yhi)

    def describe(self) -> str:
        return f"nw(bandwidth={self.bandwidth:g})"


def sinusoid_predict(m: LocalSinusoidModel, x: float) -> float:
    return float(m(np.asarray([x]))[0])


def nw_predict(m: NWModel, x: float) -> float:
    return float(m(np.asarray([x]))[0])


def build_model_bank(spec, train: Dataset) -> list[ModelFn]:
    """Build the candidate bank named by spec (or pass fixed functions through).

    "parametric10": sinusoid fits, frequencies 1..5 crossed with windows
    {0.5, 1.0}, frequency-major order -> 10 models. "nw5": Nadaraya-Watson
    with bandwidths {0.1, 0.2, 0.4, 0.8, 1.6} -> 5 models. Any other
    sequence of callables is used as-is. Index order is part of the
    contract: shortest-interval ties break toward the smaller index.
    """
    if isinstance(spec, str):
        if spec == PARAMETRIC10:
            return [
                LocalSinusoidModel(lam, h, train)
                for lam in SINUSOID_FREQS
                for h in SINUSOID_WINDOWS
            ]
        if spec == NW5:
            return [NWModel(h, train) for h in NW5_BANDWIDTHS]
        raise ValueError(f"unknown model bank {spec!r}")
    bank = list(spec)
    if not bank:
        raise ValueError("model bank must contain at least one model")
    for f in bank:
        if not callable(f):
            raise ValueError("custom bank entries must be callables")
    return bank
