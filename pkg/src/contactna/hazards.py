"""Parametric contact-interval families and maximum-likelihood fitting.

Weibull(s, r) uses the shape/rate convention ``Lambda(tau) = (r * tau) ** s``,
so Weibull(.5, 1), exponential(1) and Weibull(2, 1) have cumulative hazards
``sqrt(tau)``, ``tau`` and ``tau**2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special, stats

from .records import EpidemicRecord, candidate_pairs, contact_windows

log = logging.getLogger(__name__)

FAMILIES = ("exponential", "weibull", "gamma")


class HazardModel:
    """A contact-interval distribution described by its hazard."""

    family: str = ""

    def hazard(self, tau):
        raise NotImplementedError

    def cumulative_hazard(self, tau):
        raise NotImplementedError

    def inverse_cumulative_hazard(self, x):
        raise NotImplementedError

    def survival(self, tau):
        return np.exp(-self.cumulative_hazard(tau))

    def sample(self, rng: np.random.Generator, size=None, scale: float = 1.0):
        """Inverse-transform draws; ``scale`` divides the cumulative hazard."""
        e = rng.standard_exponential(size)
        return self.inverse_cumulative_hazard(e * scale)

    @property
    def params(self) -> tuple[float, ...]:
        return ()

    def to_csv_line(self) -> str:
        return ",".join([self.family, *(repr(float(p)) for p in self.params)])


def _positive(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("hazard is defined for tau > 0 only")
    return tau


def _nonneg(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("cumulative hazard is defined for tau >= 0 only")
    return tau


@dataclass(frozen=True)
class Weibull(HazardModel):
    shape: float
    rate: float = 1.0
    family = "weibull"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("Weibull parameters must be positive")

    @property
    def params(self):
        return (self.shape, self.rate)

    def hazard(self, tau):
        tau = _positive(tau)
        return self.shape * self.rate * (self.rate * tau) ** (self.shape - 1.0)

    def cumulative_hazard(self, tau):
        return (self.rate * _nonneg(tau)) ** self.shape

    def inverse_cumulative_hazard(self, x):
        return np.asarray(x, dtype=float) ** (1.0 / self.shape) / self.rate


@dataclass(frozen=True)
class Exponential(Weibull):
    shape: float = field(default=1.0, init=False)
    rate: float = 1.0
    family = "exponential"

    @property
    def params(self):
        return (self.rate,)

    def hazard(self, tau):
        return np.full(np.shape(_positive(tau)), self.rate)


@dataclass(frozen=True)
class Gamma(HazardModel):
    """Gamma(shape, rate); hazard from log-density minus log-survivor."""

    shape: float
    rate: float = 1.0
    family = "gamma"

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma parameters must be positive")

    @property
    def params(self):
        return (self.shape, self.rate)

    @property
    def _dist(self):
        return stats.gamma(self.shape, scale=1.0 / self.rate)

    def _log_upper(self, x):
        """``log Q(a, x)``; far in the tail via ``Gamma(a, x) = exp(-x) U(1 - a, 1 - a, x)``."""
        with np.errstate(divide="ignore"):
            out = np.log(special.gammaincc(self.shape, x))
        tail = ~np.isfinite(out) | (out < -600)
        if np.any(tail):
            a, xt = self.shape, x[tail]
            out[tail] = -xt + np.log(special.hyperu(1 - a, 1 - a, xt)) - special.gammaln(a)
        return out

    def hazard(self, tau):
        tau = _positive(tau)
        x = np.atleast_1d(self.rate * tau)
        logpdf = (np.log(self.rate) + (self.shape - 1) * np.log(x) - x
                  - special.gammaln(self.shape))
        out = np.exp(logpdf - self._log_upper(x))
        return out if np.ndim(tau) else out[0]

    def cumulative_hazard(self, tau):
        tau = _nonneg(tau)
        out = 0.0 - self._log_upper(np.atleast_1d(self.rate * tau).astype(float))
        return out if np.ndim(tau) else out[0]

    def inverse_cumulative_hazard(self, x):
        x = np.asarray(x, dtype=float)
        return special.gammainccinv(self.shape, np.exp(-x)) / self.rate


@dataclass(frozen=True)
class Constant(HazardModel):
    """Degenerate duration distribution used for fixed latent/infectious periods."""

    value: float
    family = "constant"

    @property
    def params(self):
        return (self.value,)

    def sample(self, rng, size=None, scale=1.0):
        return np.full(size, self.value) if size is not None else float(self.value)


class SmoothedHazard(HazardModel):
    """A nonparametric hazard given as a callable on ``(0, horizon]``."""

    family = "nonparametric-smoothed"

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], horizon: float,
                 floor: float = 1e-12, info: dict | None = None):
        self._func = func
        self.horizon = float(horizon)
        self.floor = floor
        self.info = info or {}

    def hazard(self, tau):
        tau = np.asarray(tau, dtype=float)
        return np.maximum(self._func(tau), self.floor)

    def cumulative_hazard(self, tau):
        from scipy.integrate import quad

        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        out = [quad(lambda u: float(self.hazard(u)), 0.0, t, limit=200)[0] if t > 0 else 0.0
               for t in tau]
        return np.array(out)

    def grid(self, num: int = 200) -> tuple[np.ndarray, np.ndarray]:
        tau = np.linspace(self.horizon / num, self.horizon, num)
        return tau, self.hazard(tau)


def make_model(family: str, *params: float) -> HazardModel:
    family = family.lower()
    if family in ("exponential", "exp"):
        return Exponential(rate=params[0] if params else 1.0)
    if family == "weibull":
        return Weibull(*params)
    if family == "gamma":
        return Gamma(*params)
    if family == "constant":
        return Constant(*params)
    raise ValueError(f"unknown hazard family {family!r}")


def parse_model(line: str) -> HazardModel:
    """Inverse of :meth:`HazardModel.to_csv_line`."""
    family, *rest = [s.strip() for s in line.split(",")]
    return make_model(family, *(float(x) for x in rest if x))


class FitError(RuntimeError):
    pass


@dataclass
class ParametricFit:
    family: str
    model: HazardModel | None
    params: np.ndarray
    loglik: float
    converged: bool
    boundary: bool = False
    stderr: np.ndarray | None = None
    message: str = ""


def loglik_terms(record: EpidemicRecord, use_infectors: bool = False):
    """The pieces of the log likelihood that do not depend on the parameters.

    Returns ``(j, tau, ends)``: candidate infectees with their ages, and the
    ends of all exposure windows.  The likelihood is
    ``sum_j log sum_{i in V_j} lambda(tau_ij) - sum_w Lambda(end_w)``.
    """
    pairs = candidate_pairs(record, use_observed=use_infectors)
    if use_infectors:
        singletons = np.bincount(pairs.j, minlength=record.n)[record.secondary]
        if np.any(singletons != 1):
            raise FitError("use_infectors requires a recorded infector for every infection")
    return pairs.j, pairs.tau, contact_windows(record)


def _loglik(model: HazardModel, jj, tau, ends) -> float:
    total = 0.0
    if len(jj):
        lam = model.hazard(tau)
        _, inv = np.unique(jj, return_inverse=True)
        per_j = np.bincount(inv, weights=lam)
        with np.errstate(divide="ignore"):
            total = float(np.sum(np.log(per_j)))
    return total - float(np.sum(model.cumulative_hazard(ends)))


def fit_parametric(record: EpidemicRecord, family: str, use_infectors: bool = False,
                   x0=None, tol: float = 1e-8, maxiter: int = 4000) -> ParametricFit:
    """Maximize the contact-interval likelihood over one parametric family.

    Without ``use_infectors`` the likelihood marginalizes over who infected
    whom.  Parameters are optimized on the log scale with Nelder-Mead.
    """
    jj, tau, ends = loglik_terms(record, use_infectors)
    exposure = float(np.sum(ends))
    if exposure <= 0:
        raise FitError("no exposure time in record")
    n_events = len(np.unique(jj))
    if n_events == 0:
        npar = 1 if family == "exponential" else 2
        return ParametricFit(family, None, np.zeros(npar), 0.0, True, boundary=True,
                             message="no infections: rate estimate on the boundary 0")

    def build(eta):
        return make_model(family, *np.exp(eta))

    def negll(eta):
        if np.any(np.abs(eta) > 50):
            return np.inf
        try:
            val = _loglik(build(eta), jj, tau, ends)
        except (ValueError, FloatingPointError):
            return np.inf
        return -val if np.isfinite(val) else np.inf

    if x0 is None:
        rate0 = n_events / exposure
        x0 = [np.log(rate0)] if family == "exponential" else [0.0, np.log(rate0)]
    res = optimize.minimize(negll, np.asarray(x0, dtype=float), method="Nelder-Mead",
                            options={"xatol": tol, "fatol": tol * 1e-2, "maxiter": maxiter,
                                     "maxfev": 2 * maxiter})
    # restart once from the optimum to shake off a collapsed simplex
    res = optimize.minimize(negll, res.x, method="Nelder-Mead",
                            options={"xatol": tol, "fatol": tol * 1e-2, "maxiter": maxiter,
                                     "maxfev": 2 * maxiter})
    params = np.exp(res.x)
    stderr = _delta_stderr(negll, res.x)
    if not res.success:
        log.warning("fit_parametric(%s) did not converge: %s", family, res.message)
    return ParametricFit(family, build(res.x), params, -float(res.fun), bool(res.success),
                         stderr=stderr, message=str(res.message))


def _delta_stderr(negll, eta, h=1e-4):
    """Standard errors of exp(eta) from a central-difference Hessian."""
    k = len(eta)
    H = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            ea, eb = np.eye(k)[a] * h, np.eye(k)[b] * h
            H[a, b] = (negll(eta + ea + eb) - negll(eta + ea - eb)
                       - negll(eta - ea + eb) + negll(eta - ea - eb)) / (4 * h * h)
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return None
    d = np.exp(eta)
    return np.sqrt(np.abs(np.diag(cov))) * d
