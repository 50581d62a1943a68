"""Discrete-time contact-interval likelihood for daily data (chain-binomial).

Days of infectiousness are numbered 1..D: an infector whose infectiousness
begins on day ``o`` can first transmit on day ``o + 1``.  A susceptible
infected on day ``t`` contributes ``1 - prod(1 - lambda(t - o_i))`` over its
infectious set, and every exposed pair contributes the escape probability
``S(k)`` for the ``k`` full days it was exposed without infection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import optimize, stats

from .records import EpidemicRecord, RecordError, _gather


@dataclass(frozen=True)
class DiscreteHazard:
    """Daily conditional probabilities of infectious contact for days 1..D."""

    lam: tuple[float, ...]

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or len(lam) == 0:
            raise ValueError("need at least one day")
        if np.any(~np.isfinite(lam)) or np.any((lam < 0) | (lam > 1)):
            raise ValueError("daily hazards must lie in [0, 1]")
        object.__setattr__(self, "lam", tuple(lam.tolist()))

    @classmethod
    def constant(cls, lam: float, D: int) -> "DiscreteHazard":
        return cls((float(lam),) * int(D))

    @property
    def D(self) -> int:
        return len(self.lam)

    def log_survival_table(self) -> np.ndarray:
        """``log S(k)`` for k = 0..D."""
        with np.errstate(divide="ignore"):
            return np.concatenate([[0.0], np.cumsum(np.log1p(-np.asarray(self.lam)))])

    def survival(self, k) -> np.ndarray:
        return np.exp(self.log_survival_table()[np.asarray(k, dtype=np.int64)])


def _integer_days(x: np.ndarray, what: str) -> np.ndarray:
    finite = x[np.isfinite(x)]
    if np.any(finite != np.round(finite)):
        raise RecordError(f"{what} must be whole days")
    return x


def _exposures(record: EpidemicRecord):
    """Exposed pairs with their escape days and infection-day flag."""
    if record.mode != "network":
        raise RecordError("chain-binomial likelihood needs an explicit contact graph")
    t = _integer_days(record.t_infection, "infection times")
    _integer_days(record.latent[record.infected], "latent periods")
    _integer_days(record.infectious[record.infected], "infectious periods")
    onset = record.onset
    src = record.infected[onset[record.infected] < record.T]
    ii, jj = _gather(record.contacts._out_csr, src)
    iota = record.infectious[ii]
    tj = t[jj]
    days = np.minimum(np.minimum(iota, tj - onset[ii] - 1), record.T - onset[ii])
    hit = (onset[ii] < tj) & (tj <= onset[ii] + iota)
    return ii, jj, np.maximum(days, 0).astype(np.int64), hit, (tj - onset[ii])


def chain_binomial_loglik(record: EpidemicRecord, hazard: DiscreteHazard) -> float:
    """Exact log likelihood of a daily-resolution record under ``hazard``."""
    ii, jj, days, hit, age = _exposures(record)
    D = hazard.D
    if np.any(record.infectious[ii] > D):
        raise RecordError(f"infectious period longer than the {D}-day hazard table")
    logS = hazard.log_survival_table()
    total = float(np.sum(logS[days]))
    secondary = record.secondary
    if len(secondary) == 0:
        return total
    jh, ah = jj[hit], age[hit].astype(np.int64)
    counts = np.bincount(jh, minlength=record.n)[secondary]
    if np.any(counts == 0):
        raise RecordError(f"empty infectious set for persons {secondary[counts == 0][:10].tolist()}")
    with np.errstate(divide="ignore"):
        log_escape = np.log1p(-np.asarray(hazard.lam)[ah - 1])
        per_j = np.bincount(jh, weights=log_escape, minlength=record.n)[secondary]
        total += float(np.sum(np.log(-np.expm1(per_j))))
    return total


@dataclass(frozen=True)
class EscapeFit:
    lam: float
    lower: float
    upper: float
    loglik: float
    D: int

    @property
    def escape(self) -> float:
        return 1.0 - self.lam

    def contact_probability(self, lam: float | None = None) -> float:
        lam = self.lam if lam is None else lam
        return 1.0 - (1.0 - lam) ** self.D

    @property
    def contact_interval(self) -> tuple[float, float]:
        return self.contact_probability(self.lower), self.contact_probability(self.upper)

    def hazard(self) -> DiscreteHazard:
        return DiscreteHazard.constant(self.lam, self.D)


def fit_escape_probability(records: Iterable[EpidemicRecord], D: int,
                           level: float = 0.95) -> EscapeFit:
    """Maximum-likelihood constant daily hazard with a profile-likelihood interval.

    For constant ``lambda`` the log likelihood is
    ``E log(1 - lambda) + sum_j log(1 - (1 - lambda)**c_j)`` where ``E`` counts
    escape days and ``c_j`` the infectious-set size of infection ``j``.
    """
    records = list(records)
    E = 0
    sizes: list[np.ndarray] = []
    for rec in records:
        ii, jj, days, hit, _ = _exposures(rec)
        if np.any(rec.infectious[ii] > D):
            raise RecordError(f"infectious period longer than D={D}")
        E += int(days.sum())
        sec = rec.secondary
        if len(sec):
            c = np.bincount(jj[hit], minlength=rec.n)[sec]
            if np.any(c == 0):
                raise RecordError("infection with an empty infectious set")
            sizes.append(c)
    c = np.concatenate(sizes) if sizes else np.empty(0, dtype=np.int64)
    if E == 0 and len(c) == 0:
        raise ValueError("no transmissions and no exposure: escape probability undefined")

    def ll(lam: float) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            val = E * np.log1p(-lam) if E else 0.0
            if len(c):
                val += float(np.sum(np.log(-np.expm1(c * np.log1p(-lam)))))
        return float(val) if np.isfinite(val) else -np.inf

    if len(c) == 0:
        lam_hat = 0.0
    elif E == 0:
        lam_hat = 1.0
    else:
        res = optimize.minimize_scalar(lambda x: -ll(x), bounds=(0.0, 1.0), method="bounded",
                                       options={"xatol": 1e-12})
        lam_hat = float(res.x)
    best = ll(lam_hat)
    cut = stats.chi2.ppf(level, 1) / 2.0

    def excess(x):
        return best - ll(x) - cut

    # interior end points keep the log likelihood finite for brentq
    a, b = 1e-300, 1.0 - 2.0 ** -52
    lo = 0.0 if lam_hat <= a or excess(a) <= 0 else optimize.brentq(excess, a, lam_hat, xtol=1e-14)
    hi = 1.0 if lam_hat >= b or excess(b) <= 0 else optimize.brentq(excess, lam_hat, b, xtol=1e-14)
    return EscapeFit(lam_hat, float(lo), float(hi), best, int(D))
