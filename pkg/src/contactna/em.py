"""Marginal Nelson-Aalen estimation when who-infected-whom is not observed.

Every secondary infection ``j`` spreads one unit of event mass over its
infectious set, with probability ``p_ij`` proportional to the contact
hazard at the candidate age ``tau_ij``.  The marginal estimate sums
``p_ij / Y(tau_ij)``.  The EM iteration alternates smoothing the current
estimate into a hazard, recomputing the ``p_ij`` and rebuilding the
estimate.  Persons whose infector is recorded keep it with probability one.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .estimators import StepEstimate, jump_estimate, merge_jumps, product_limit
from .hazards import HazardModel
from .records import (CandidatePairs, EpidemicRecord, RecordError, RiskSetFunction,
                      candidate_pairs, mass_action_risk_set, risk_set)
from .smoothing import SmootherConfig, SmoothingError, smooth

log = logging.getLogger(__name__)

L1_PERCENTILES = tuple(range(5, 100, 5))


@dataclass(frozen=True, eq=False)
class WeightedEventSet:
    """Candidate infectors with their probabilities, sorted by infectee then age."""

    j: np.ndarray
    i: np.ndarray
    tau: np.ndarray
    p: np.ndarray

    def __len__(self):
        return len(self.j)

    def infectors_of(self, j: int) -> dict[int, float]:
        sel = self.j == j
        return dict(zip(self.i[sel].tolist(), self.p[sel].tolist()))


def _groups(j: np.ndarray) -> np.ndarray:
    """Dense group ids for a sorted infectee array."""
    if len(j) == 0:
        return np.empty(0, dtype=np.int64)
    return np.concatenate([[0], np.cumsum(j[1:] != j[:-1])])


def uniform_weights(pairs: CandidatePairs) -> WeightedEventSet:
    g = _groups(pairs.j)
    size = np.bincount(g)
    return WeightedEventSet(pairs.j, pairs.i, pairs.tau, 1.0 / size[g])


def infector_probabilities(record_or_pairs, model: HazardModel) -> WeightedEventSet:
    """``p_ij = lambda(tau_ij) / sum_{k in V_j} lambda(tau_kj)``."""
    pairs = (candidate_pairs(record_or_pairs) if isinstance(record_or_pairs, EpidemicRecord)
             else record_or_pairs)
    g = _groups(pairs.j)
    lam = np.asarray(model.hazard(pairs.tau), dtype=float)
    if np.any(~np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("hazard must be finite and nonnegative at candidate ages")
    total = np.bincount(g, weights=lam)
    if np.any(total <= 0):
        bad = pairs.j[np.isin(g, np.flatnonzero(total <= 0))]
        raise ValueError(f"hazard is zero at every candidate age for persons {np.unique(bad)[:10].tolist()}")
    return WeightedEventSet(pairs.j, pairs.i, pairs.tau, lam / total[g])


def marginal_variance(weights: WeightedEventSet, Y: RiskSetFunction):
    """Conditional-variance estimate at the distinct candidate ages.

    ``2 sum p / Y^2 - sum_j (sum_{i} p_ij / Y(tau_ij))^2``, both sums over
    candidate events with age ``<= tau``.  Returns ``(times, variance)``.
    """
    keep = weights.p > 0
    j, tau, p = weights.j[keep], weights.tau[keep], weights.p[keep]
    if len(tau) == 0:
        return np.empty(0), np.empty(0)
    y = Y(tau).astype(float)
    if np.any(y <= 0):
        raise RecordError("candidate age outside the observed risk set")
    c = p / y
    # running per-infectee sums in age order
    by_j = np.lexsort((tau, j))
    jj, cc = j[by_j], c[by_j]
    run = np.cumsum(cc)
    starts = np.concatenate([[True], jj[1:] != jj[:-1]])
    offset = np.maximum.accumulate(np.where(starts, np.arange(len(jj)), 0))
    base = np.where(offset > 0, run[offset - 1], 0.0)
    after = run - base
    before = after - cc
    dsq = np.empty_like(c)
    dsq[by_j] = after ** 2 - before ** 2
    order = np.argsort(tau, kind="stable")
    ts = tau[order]
    total = np.cumsum(2.0 * c[order] / y[order] - dsq[order])
    last = np.concatenate([ts[1:] != ts[:-1], [True]])
    return ts[last], np.maximum(total[last], 0.0)


def marginal_estimate(weights: WeightedEventSet, Y: RiskSetFunction) -> StepEstimate:
    """Marginal Nelson-Aalen estimate carrying the conditional-variance formula."""
    est = jump_estimate(weights.tau, weights.p, Y)
    times, var = marginal_variance(weights, Y)
    if len(times) != len(est.times):
        raise AssertionError("variance and estimate jump times disagree")
    return StepEstimate(est.times, est.increments, est.values, var, est.horizon)


def marginal_nelson_aalen_given(record: EpidemicRecord, model: HazardModel,
                                Y: RiskSetFunction | None = None) -> StepEstimate:
    """Marginal Nelson-Aalen estimate under a given contact-interval hazard."""
    if Y is None:
        Y = risk_set(record)
    return marginal_estimate(infector_probabilities(record, model), Y)


def expected_loglik(weights: WeightedEventSet, Y: RiskSetFunction, surv_times, cond_fail):
    """Expected complete-data log likelihood of a discrete survival function.

    ``cond_fail`` are conditional failure probabilities at ``surv_times``;
    each distinct candidate age must appear in ``surv_times``.
    """
    times, d = merge_jumps(weights.tau, weights.p)
    q = dict(zip(np.asarray(surv_times).tolist(), np.asarray(cond_fail).tolist()))
    y = Y(times).astype(float)
    total = 0.0
    for t, dk, yk in zip(times.tolist(), d.tolist(), y.tolist()):
        pk = q[t]
        if dk > 0:
            total += dk * np.log(pk)
        if yk - dk > 0:
            total += (yk - dk) * np.log1p(-pk)
    return total


@dataclass(frozen=True)
class EMConfig:
    tol: float = 5e-4
    min_iter: int = 5
    max_iter: int = 50
    percentiles: tuple[float, ...] = L1_PERCENTILES
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    initial: HazardModel | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 <= self.min_iter <= self.max_iter:
            raise ValueError("need 0 <= min_iter <= max_iter")


@dataclass
class EMResult:
    cumhaz: StepEstimate
    survival: StepEstimate
    weights: WeightedEventSet
    l1_log: list[float]
    converged: bool
    grid: np.ndarray
    hazard: HazardModel | None = None

    @property
    def iterations(self) -> int:
        return len(self.l1_log)


def em_estimate(record: EpidemicRecord, config: EMConfig = EMConfig(),
                Y: RiskSetFunction | None = None) -> EMResult:
    """Iterate smooth -> E-step -> M-step until the L1 difference drops below ``tol``.

    The L1 difference is the mean absolute change of the estimate over the
    configured percentiles of all possible contact intervals; the grid is
    fixed before the first iteration.
    """
    if Y is None:
        Y = risk_set(record)
    pairs = candidate_pairs(record)
    grid = (np.percentile(Y.ends, config.percentiles) if len(Y.ends)
            else np.zeros(len(config.percentiles)))
    weights = (uniform_weights(pairs) if config.initial is None
               else infector_probabilities(pairs, config.initial))
    est = marginal_estimate(weights, Y)
    ambiguous = len(pairs) > len(np.unique(pairs.j))
    # no age may outweigh one whole event at the earliest candidate age
    var_floor = 1.0 / float(Y(np.min(pairs.tau))) ** 2 if len(pairs) else 0.0
    l1_log: list[float] = []
    converged = False
    model = None
    for k in range(1, config.max_iter + 1):
        if ambiguous:
            try:
                model = smooth(est, np.maximum(est.variance, var_floor), config.smoother)
                new_weights = infector_probabilities(pairs, model)
            except SmoothingError:
                new_weights = uniform_weights(pairs)
            new = marginal_estimate(new_weights, Y)
        else:
            new_weights, new = weights, est
        l1 = float(np.mean(np.abs(new(grid) - est(grid))))
        l1_log.append(l1)
        weights, est = new_weights, new
        if k >= config.min_iter and l1 < config.tol:
            converged = True
            break
    if not converged:
        log.warning("EM did not reach L1 < %g in %d iterations", config.tol, config.max_iter)
    y = Y(est.times).astype(float)
    survival = product_limit(est, est.increments * y, y)
    return EMResult(est, survival, weights, l1_log, converged, grid, model)


def em_estimate_mass_action(record: EpidemicRecord, config: EMConfig = EMConfig(tol=5e-3)
                            ) -> EMResult:
    """EM with ``Y_*`` in place of ``Y``; estimates the normalized cumulative hazard."""
    return em_estimate(record, config, Y=mass_action_risk_set(record))
