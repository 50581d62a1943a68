"""Hazard functions from step cumulative-hazard estimates.

The default smoother fits a weighted penalized cubic B-spline to the
cumulative values at the jump ages (weights = 1 / variance) and
differentiates it.  Knots sit at a subset of the distinct ages whose size
grows slowly with the number of ages, as in the usual smoothing-spline
knot rule; below 50 ages every age is a knot.  The roughness penalty is
the integrated squared second derivative and its weight is chosen by
generalized cross-validation.

A kernel alternative applies an Epanechnikov kernel to the increments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline, make_interp_spline

from .estimators import StepEstimate
from .hazards import SmoothedHazard

SPLINE = "spline-gcv"
KERNEL = "kernel"


class SmoothingError(ValueError):
    """Raised when an estimate has too few jumps to smooth."""


@dataclass(frozen=True)
class SmootherConfig:
    kind: str = SPLINE
    bandwidth: float | None = None
    boundary: str = "clamp"
    boundary_pct: tuple[float, float] = (2.0, 98.0)
    floor: float = 1e-12
    log10_bracket: float = 6.0

    def __post_init__(self):
        if self.kind not in (SPLINE, KERNEL):
            raise ValueError(f"unknown smoother {self.kind!r}")
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.floor < 0:
            raise ValueError("floor must be nonnegative")
        if self.boundary not in ("clamp", "none"):
            raise ValueError("boundary must be 'clamp' or 'none'")


def n_knots(n: int) -> int:
    """Number of interior knots for ``n`` distinct ages."""
    if n < 50:
        return n
    a1, a2, a3, a4 = np.log2([50.0, 100.0, 140.0, 200.0])
    if n < 200:
        return int(2.0 ** (a1 + (a2 - a1) * (n - 50) / 150))
    if n < 800:
        return int(2.0 ** (a2 + (a3 - a2) * (n - 200) / 600))
    if n < 3200:
        return int(2.0 ** (a3 + (a4 - a3) * (n - 800) / 2400))
    return int(200 + (n - 3200) ** 0.2)


def _prepare(x, y, w):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(x) < 2:
        raise SmoothingError("need at least 2 jumps to smooth; fall back to a flat hazard")
    span = x[-1] - x[0]
    # merge ages that are numerically coincident
    keep = np.concatenate([[True], np.diff(x) > 1e-10 * max(span, 1e-300)])
    if not np.all(keep):
        grp = np.cumsum(keep) - 1
        ws = np.bincount(grp, weights=w)
        y = np.bincount(grp, weights=w * y) / ws
        x = x[keep]
        w = ws
    return x, y, w / np.mean(w)


class _Problem:
    """Normal equations of the penalized fit on ages rescaled to [0, 1]."""

    def __init__(self, x, y, w):
        n = len(x)
        self.x0, self.span = x[0], x[-1] - x[0]
        u = (x - self.x0) / self.span
        idx = np.floor(np.linspace(0.0, n - 1, n_knots(n)) + 1e-9).astype(int)
        inner = u[idx]
        self.t = np.r_[[u[0]] * 3, inner, [u[-1]] * 3]
        nb = len(self.t) - 4
        B = BSpline.design_matrix(u, self.t, 3)
        self.B, self.y, self.w, self.n = B, y, w, n
        self.BtWB = (B.T @ B.multiply(w[:, None])).toarray()
        self.BtWy = B.T @ (w * y)
        # B'' is linear between knots, so 2-point Gauss-Legendre is exact
        g, gw = np.polynomial.legendre.leggauss(2)
        a, b = inner[:-1], inner[1:]
        pts = ((b - a)[:, None] * (g + 1) / 2 + a[:, None]).ravel()
        pw = ((b - a)[:, None] * gw / 2).ravel()
        D2 = BSpline(self.t, np.eye(nb), 3).derivative(2)(pts)
        self.Omega = D2.T @ (D2 * pw[:, None])
        self.scale = float(np.trace(self.BtWB) / np.trace(self.Omega))

    def solve(self, lam: float):
        """Coefficients, effective degrees of freedom and GCV score at ``lam``."""
        try:
            cf = linalg.cho_factor(self.BtWB + lam * self.Omega, check_finite=False)
        except linalg.LinAlgError:
            return None, np.nan, np.inf
        coef = linalg.cho_solve(cf, self.BtWy, check_finite=False)
        df = float(np.trace(linalg.cho_solve(cf, self.BtWB, check_finite=False)))
        resid = self.y - self.B @ coef
        if not df < self.n:
            return coef, df, np.inf
        return coef, df, float(np.mean(self.w * resid ** 2) / (1.0 - df / self.n) ** 2)

    def spline(self, coef) -> BSpline:
        # the basis is invariant under the affine map back to the original ages
        return BSpline(self.x0 + self.span * self.t, coef, 3)


def gcv_score(x, y, w, alpha: float) -> float:
    """Weighted GCV: ``mean(w (y - g)^2) / (1 - tr(A)/n)^2``."""
    x, y, w = _prepare(x, y, w)
    return _Problem(x, y, w).solve(alpha)[2]


def _select(prob: _Problem, log10_bracket: float) -> float:
    centre = np.log(prob.scale)
    half = log10_bracket * np.log(10.0)

    def score(la):
        return prob.solve(np.exp(la))[2]

    grid = np.linspace(centre - half, centre + half, 49)
    vals = np.array([score(la) for la in grid])
    if not np.any(np.isfinite(vals)):
        raise SmoothingError("GCV is undefined at every trial penalty")
    k = int(np.nanargmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = score(c), score(d)
    while b - a > 1e-4:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = score(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = score(d)
    best = (a + b) / 2.0
    if not score(best) <= vals[k]:
        best = grid[k]
    return float(np.exp(best))


def select_penalty(x, y, w, log10_bracket: float = 6.0) -> float:
    """GCV penalty: coarse log-grid scan, then golden-section refinement."""
    x, y, w = _prepare(x, y, w)
    return _select(_Problem(x, y, w), log10_bracket)


def smoothing_spline(x, y, w, alpha: float | None = None, log10_bracket: float = 6.0):
    """Penalized cubic spline through weighted points; returns (spline, alpha)."""
    x, y, w = _prepare(x, y, w)
    if len(x) == 2:
        return make_interp_spline(x, y, k=1), 0.0
    prob = _Problem(x, y, w)
    if alpha is None:
        alpha = _select(prob, log10_bracket)
    coef = prob.solve(alpha)[0]
    if coef is None:
        raise SmoothingError(f"penalized fit is singular at penalty {alpha:g}")
    return prob.spline(coef), alpha


def _clamped(func, times, config: SmootherConfig):
    if config.boundary == "none" or len(times) < 3:
        return func
    lo, hi = np.percentile(times, config.boundary_pct)

    def clamped(tau):
        return func(np.clip(tau, lo, hi))

    return clamped


def smooth_cumhaz(est: StepEstimate, variances=None,
                  config: SmootherConfig = SmootherConfig()) -> SmoothedHazard:
    """Hazard as the derivative of a GCV smoothing spline fitted to ``est``.

    Zero variances are replaced by the smallest positive variance present.
    """
    if len(est.times) < 2:
        raise SmoothingError("need at least 2 jumps to smooth; fall back to a flat hazard")
    var = np.asarray(est.variance if variances is None else variances, dtype=float)
    var = np.where(np.isfinite(var), var, np.nan)
    pos = var[var > 0]
    fill = pos.min() if len(pos) else 1.0
    var = np.where((var > 0) & np.isfinite(var), var, fill)
    spline, alpha = smoothing_spline(est.times, est.values, 1.0 / var,
                                     log10_bracket=config.log10_bracket)
    deriv = spline.derivative()
    func = _clamped(deriv, est.times, config)
    return SmoothedHazard(func, est.horizon, floor=config.floor,
                          info={"smoother": SPLINE, "alpha": alpha})


def epanechnikov_bandwidth(times) -> float:
    """Rule-of-thumb bandwidth ``2.34 * min(sd, IQR / 1.349) * N^(-1/5)``."""
    times = np.asarray(times, dtype=float)
    sd = np.std(times, ddof=1)
    q75, q25 = np.percentile(times, [75, 25])
    spread = min(sd, (q75 - q25) / 1.349) if q75 > q25 else sd
    return float(2.34 * spread * len(times) ** (-0.2))


def smooth_kernel(est: StepEstimate, config: SmootherConfig = SmootherConfig(kind=KERNEL)
                  ) -> SmoothedHazard:
    """Epanechnikov-smoothed increments: ``sum_k K_b(tau - tau_k) dLambda_k``."""
    t = np.asarray(est.times, dtype=float)
    inc = np.asarray(est.increments, dtype=float)
    if config.bandwidth is None:
        if len(t) < 2:
            raise SmoothingError("need at least 2 jumps for a data-driven bandwidth")
        b = epanechnikov_bandwidth(t)
    else:
        b = config.bandwidth
    if not b > 0:
        raise SmoothingError("degenerate kernel bandwidth")
    c0 = np.concatenate([[0.0], np.cumsum(inc)])
    c1 = np.concatenate([[0.0], np.cumsum(inc * t)])
    c2 = np.concatenate([[0.0], np.cumsum(inc * t * t)])

    def hazard(tau):
        tau = np.asarray(tau, dtype=float)
        lo = np.searchsorted(t, tau - b, side="right")
        hi = np.searchsorted(t, tau + b, side="left")
        s0, s1, s2 = c0[hi] - c0[lo], c1[hi] - c1[lo], c2[hi] - c2[lo]
        return 0.75 / b * (s0 * (1.0 - tau ** 2 / b ** 2) + (2.0 * tau * s1 - s2) / b ** 2)

    func = _clamped(hazard, t, config)
    return SmoothedHazard(func, est.horizon, floor=config.floor,
                          info={"smoother": KERNEL, "bandwidth": b})


def smooth(est: StepEstimate, variances=None, config: SmootherConfig = SmootherConfig()
           ) -> SmoothedHazard:
    if config.kind == KERNEL:
        return smooth_kernel(est, config)
    return smooth_cumhaz(est, variances, config)
