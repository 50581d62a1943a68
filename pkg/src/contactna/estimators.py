"""Nelson-Aalen and Kaplan-Meier estimates when who-infected-whom is observed.

Events sharing a floating-point age are merged into one jump of size
``d / Y``; the variance increment is ``d / Y**2``, which assumes a
continuous contact-interval distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .records import (EpidemicRecord, RecordError, RiskSetFunction,
                      candidate_pairs, mass_action_risk_set, risk_set)

CUMHAZ = "cumhaz"
SURVIVAL = "survival"


@dataclass(frozen=True, eq=False)
class StepEstimate:
    """Cadlag step function with pointwise variance.

    For a cumulative hazard, ``increments`` are the jumps and ``values`` their
    running sum.  For a survival curve, ``increments`` are the conditional
    failure probabilities and ``values`` the running product of ``1 - inc``;
    ``cumhaz`` and ``cumhaz_var`` then hold the companion cumulative hazard,
    which drives the confidence limits.
    """

    times: np.ndarray
    increments: np.ndarray
    values: np.ndarray
    variance: np.ndarray
    horizon: float
    kind: str = CUMHAZ
    cumhaz: np.ndarray | None = None
    cumhaz_var: np.ndarray | None = None

    @property
    def start(self) -> float:
        return 1.0 if self.kind == SURVIVAL else 0.0

    def _index(self, tau):
        return np.searchsorted(self.times, np.asarray(tau, dtype=float), side="right") - 1

    def _lookup(self, arr, tau, empty):
        idx = self._index(tau)
        if len(arr) == 0:
            return np.full(np.shape(idx), empty, dtype=float)
        return np.where(idx >= 0, arr[np.maximum(idx, 0)], empty)

    def __call__(self, tau):
        return self._lookup(self.values, tau, self.start)

    def var(self, tau):
        return self._lookup(self.variance, tau, 0.0)

    def cumulative_hazard(self, tau):
        if self.kind == CUMHAZ:
            return self(tau)
        return self._lookup(self.cumhaz, tau, 0.0)

    def cumulative_hazard_var(self, tau):
        if self.kind == CUMHAZ:
            return self.var(tau)
        return self._lookup(self.cumhaz_var, tau, 0.0)

    def __len__(self):
        return len(self.times)


def merge_jumps(ages: np.ndarray, weights: np.ndarray):
    """Collapse equal ages; return distinct sorted ages and summed weights."""
    keep = weights > 0
    ages, weights = ages[keep], weights[keep]
    uniq, inv = np.unique(ages, return_inverse=True)
    return uniq, np.bincount(inv, weights=weights, minlength=len(uniq))


def jump_estimate(ages, weights, Y: RiskSetFunction) -> StepEstimate:
    """``sum d_k / Y(tau_k)`` over event ages, with variance ``sum d_k / Y(tau_k)**2``."""
    times, d = merge_jumps(np.asarray(ages, dtype=float), np.asarray(weights, dtype=float))
    y = Y(times).astype(float)
    if np.any(y <= 0):
        raise RecordError("event age outside the observed risk set")
    inc = d / y
    return StepEstimate(times, inc, np.cumsum(inc), np.cumsum(d / y ** 2), Y.horizon)


def observed_events(record: EpidemicRecord) -> np.ndarray:
    """Infectiousness ages at which recorded infectors made infectious contact."""
    secondary = record.secondary
    missing = secondary[record.infector[secondary] < 0]
    if len(missing):
        raise RecordError(f"missing infector for persons {missing[:10].tolist()}")
    return candidate_pairs(record, use_observed=True).tau


def nelson_aalen(record: EpidemicRecord, Y: RiskSetFunction | None = None) -> StepEstimate:
    """Nelson-Aalen estimate of the contact-interval cumulative hazard."""
    ages = observed_events(record)
    if Y is None:
        Y = risk_set(record)
    return jump_estimate(ages, np.ones_like(ages), Y)


def nelson_aalen_mass_action(record: EpidemicRecord) -> StepEstimate:
    """Estimate of the normalized cumulative hazard using ``Y_*`` in place of ``Y``."""
    return nelson_aalen(record, mass_action_risk_set(record))


def product_limit(est: StepEstimate, d: np.ndarray, y: np.ndarray) -> StepEstimate:
    """Product-limit survival companion of a cumulative-hazard estimate.

    ``d`` and ``y`` are the (possibly fractional) event counts and risk-set
    sizes at ``est.times``.  The variance is Greenwood's.
    """
    p = d / y
    surv = np.cumprod(1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        gw = np.where(y > d, d / (y * (y - d)), np.inf)
        var = surv ** 2 * np.cumsum(gw)
    var = np.where(np.isnan(var), 0.0, var)
    return StepEstimate(est.times, p, surv, var, est.horizon, kind=SURVIVAL,
                        cumhaz=est.values, cumhaz_var=est.variance)


def kaplan_meier(record: EpidemicRecord, Y: RiskSetFunction | None = None) -> StepEstimate:
    """Kaplan-Meier estimate of the contact-interval survival function."""
    if Y is None:
        Y = risk_set(record)
    na = nelson_aalen(record, Y)
    y = Y(na.times).astype(float)
    return product_limit(na, na.increments * y, y)


@dataclass(frozen=True)
class Band:
    tau: np.ndarray
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    degenerate: np.ndarray

    def contains(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.lower <= truth) & (truth <= self.upper)


def log_limits(cumhaz, var, alpha: float = 0.05):
    """``H * exp(+-z * sigma / H)``; returns (lower, upper, degenerate)."""
    cumhaz = np.asarray(cumhaz, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    z = ndtri(1.0 - alpha / 2.0)
    degenerate = cumhaz <= 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        factor = np.exp(z * sigma / cumhaz)
    lower = np.where(degenerate, 0.0, cumhaz / factor)
    upper = np.where(degenerate, 0.0, cumhaz * factor)
    return lower, upper, degenerate


def confidence_band(est: StepEstimate, alpha: float = 0.05, tau=None) -> Band:
    """Pointwise log-transformed ``1 - alpha`` limits at ``tau`` (default: jump times).

    Survival limits are ``exp(-upper), exp(-lower)`` of the companion
    cumulative-hazard limits.  Where the cumulative hazard is 0 the limits
    collapse to the estimate and ``degenerate`` is set.
    """
    tau = est.times if tau is None else np.asarray(tau, dtype=float)
    H = est.cumulative_hazard(tau)
    lo, hi, flag = log_limits(H, est.cumulative_hazard_var(tau), alpha)
    if est.kind == SURVIVAL:
        return Band(tau, est(tau), np.exp(-hi), np.exp(-lo), flag)
    return Band(tau, H, lo, hi, flag)
