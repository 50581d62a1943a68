"""Household pipeline: daily onset data to contact-interval estimates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..chainbinom import EscapeFit, fit_escape_probability
from ..em import EMConfig, EMResult, em_estimate
from ..estimators import confidence_band
from ..hazards import FitError, ParametricFit, fit_parametric
from ..records import NETWORK, Contacts, EpidemicRecord

log = logging.getLogger(__name__)

Household = tuple[str, list[tuple[str, float]]]

MARGINAL = "marginal-km"
CHAIN_BINOMIAL = "chain-binomial"


@dataclass(frozen=True)
class NaturalHistory:
    """Incubation, latent and infectious periods in whole days."""

    incubation: int = 2
    latent: int = 0
    infectious: int = 6

    def __post_init__(self):
        if not (self.incubation >= 0 and self.latent >= 0 and self.infectious >= 1):
            raise ValueError("need incubation >= 0, latent >= 0, infectious >= 1")
        if any(int(x) != x for x in (self.incubation, self.latent, self.infectious)):
            raise ValueError("natural history periods must be whole days")

    def label(self) -> str:
        return f"({self.incubation}, {self.latent}, {self.infectious})"


@dataclass
class HouseholdProblem:
    household_id: str
    person_id: str
    message: str


@dataclass
class PooledHouseholds:
    record: EpidemicRecord
    ids: list[tuple[str, str]]
    primaries: int
    problems: list[HouseholdProblem] = field(default_factory=list)


def build_household_record(households: Sequence[Household], nh: NaturalHistory) -> PooledHouseholds:
    """Pool households into one record with contacts only inside each household.

    Each household is shifted so its earliest case is infected at day 0.  All
    earliest cases are imported.  A later case with no possible infector
    under ``nh`` is reported and also treated as imported.
    """
    t, ids, edges, problems = [], [], [], []
    imported: list[bool] = []
    primaries = 0
    for hid, members in households:
        base = len(t)
        onsets = np.array([o for _, o in members], dtype=float)
        sick = np.isfinite(onsets)
        first = onsets[sick].min() if sick.any() else 0.0
        # infection day = onset - incubation; the shift cancels the incubation period
        rel = np.where(sick, onsets - first, np.inf)
        imp = sick & (rel == 0)
        primaries += int(imp.sum())
        for k in np.flatnonzero(sick & ~imp):
            src = rel[imp | (sick & (rel < rel[k]))]
            ok = (src + nh.latent < rel[k]) & (rel[k] <= src + nh.latent + nh.infectious)
            if not ok.any():
                problems.append(HouseholdProblem(hid, members[k][0],
                                                 f"onset outside every candidate window under {nh.label()}"))
                imp[k] = True
        size = len(members)
        for a in range(size):
            for b in range(size):
                if a != b:
                    edges.append((base + a, base + b))
        t.extend(rel.tolist())
        imported.extend(imp.tolist())
        ids.extend((hid, pid) for pid, _ in members)
    n = len(t)
    if n < 2:
        raise ValueError("need at least two household members in total")
    t_arr = np.asarray(t)
    inf = np.isfinite(t_arr)
    latent = np.where(inf, float(nh.latent), np.nan)
    infectious = np.where(inf, float(nh.infectious), np.nan)
    T = float(np.max(t_arr[inf] + nh.latent + nh.infectious)) if inf.any() else 1.0
    contacts = Contacts(n, NETWORK, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    record = EpidemicRecord(t_arr, latent, infectious, np.asarray(imported), contacts, T)
    return PooledHouseholds(record, ids, primaries, problems)


@dataclass
class HouseholdAnalysis:
    nh: NaturalHistory
    estimator: str
    contact_probability: float
    contact_ci: tuple[float, float]
    cumhaz: float | None = None
    cumhaz_ci: tuple[float, float] | None = None
    survival: float | None = None
    converged: bool = True
    em: EMResult | None = None
    escape: EscapeFit | None = None
    parametric: dict[str, ParametricFit] = field(default_factory=dict)
    problems: list[HouseholdProblem] = field(default_factory=list)
    households: int = 0
    members: int = 0
    primaries: int = 0
    secondaries: int = 0

    def formatted(self) -> str:
        """Two-decimal probability with limits and no leading zeros, e.g. ``.07 (.05, .10)``."""
        lo, hi = self.contact_ci
        return f"{_prob(self.contact_probability)} ({_prob(lo)}, {_prob(hi)})"


def _prob(x: float) -> str:
    s = f"{x:.2f}"
    return s[1:] if s.startswith("0.") else s


def household_analyze(households: Sequence[Household], nh: NaturalHistory = NaturalHistory(),
                      estimator: str = MARGINAL, em_config: EMConfig = EMConfig(),
                      parametric: Sequence[str] = ("exponential", "weibull")) -> HouseholdAnalysis:
    """Estimate the household infectious contact probability ``1 - S(D)``."""
    pooled = build_household_record(households, nh)
    rec = pooled.record
    D = nh.infectious
    out = HouseholdAnalysis(nh, estimator, 0.0, (0.0, 0.0), problems=pooled.problems,
                            households=len(households), members=rec.n,
                            primaries=pooled.primaries, secondaries=len(rec.secondary))
    for p in pooled.problems:
        log.warning("household %s person %s: %s", p.household_id, p.person_id, p.message)
    if estimator == MARGINAL:
        if len(rec.secondary) == 0:
            out.cumhaz, out.cumhaz_ci, out.survival = 0.0, (0.0, 0.0), 1.0
            return out
        res = em_estimate(rec, em_config)
        band = confidence_band(res.cumhaz, tau=[float(D)])
        H, lo, hi = float(band.estimate[0]), float(band.lower[0]), float(band.upper[0])
        S = float(res.survival(float(D)))
        out.em, out.converged = res, res.converged
        out.cumhaz, out.cumhaz_ci, out.survival = H, (lo, hi), S
        out.contact_probability = 1.0 - S
        out.contact_ci = (-float(np.expm1(-lo)), -float(np.expm1(-hi)))
        for family in parametric:
            try:
                out.parametric[family] = fit_parametric(rec, family)
            except FitError as exc:
                log.warning("parametric %s fit failed: %s", family, exc)
    elif estimator == CHAIN_BINOMIAL:
        fit = fit_escape_probability([rec], D)
        out.escape = fit
        out.contact_probability = fit.contact_probability()
        out.contact_ci = fit.contact_interval
    else:
        raise ValueError(f"unknown household estimator {estimator!r}")
    return out


def sensitivity_analysis(households: Sequence[Household], grid: dict[str, NaturalHistory],
                         **kwargs) -> dict[str, HouseholdAnalysis | Exception]:
    """Run :func:`household_analyze` at each grid point; failures are kept per point."""
    out: dict[str, HouseholdAnalysis | Exception] = {}
    for label, nh in grid.items():
        try:
            out[label] = household_analyze(households, nh, **kwargs)
        except (ValueError, RuntimeError) as exc:
            log.error("sensitivity point %s failed: %s", label, exc)
            out[label] = exc
    return out


# synthetic data

@dataclass(frozen=True)
class HouseholdLayout:
    sizes: tuple[int, ...]
    primaries: tuple[int, ...]

    @property
    def members(self) -> int:
        return sum(self.sizes)


def synthetic_layout(households: int = 58, members: int = 299, coprimary: int = 4,
                     seed: int = 2009) -> HouseholdLayout:
    """Household sizes with a fixed total; ``coprimary`` households get two primaries."""
    rng = np.random.default_rng(seed)
    sizes = 2 + rng.poisson(members / households - 2, households)
    while sizes.sum() != members:
        k = int(rng.integers(households))
        if sizes.sum() < members:
            sizes[k] += 1
        elif sizes[k] > 3:
            sizes[k] -= 1
    prim = np.ones(households, dtype=np.int64)
    big = np.flatnonzero(sizes >= 3)
    prim[rng.choice(big, size=coprimary, replace=False)] = 2
    return HouseholdLayout(tuple(sizes.tolist()), tuple(prim.tolist()))


def simulate_households(layout: HouseholdLayout, daily_hazard: float, nh: NaturalHistory,
                        rng: np.random.Generator, calendar_span: int = 30) -> list[Household]:
    """Daily chain-binomial outbreaks; onset day = infection day + incubation."""
    if not 0.0 <= daily_hazard <= 1.0:
        raise ValueError("daily hazard must lie in [0, 1]")
    out: list[Household] = []
    escape = 1.0 - daily_hazard
    for h, (size, k) in enumerate(zip(layout.sizes, layout.primaries)):
        day0 = int(rng.integers(calendar_span))
        t = np.full(size, np.inf)
        t[:k] = 0.0
        d = 0
        while True:
            d += 1
            onset = t + nh.latent
            if not np.any(d <= onset[np.isfinite(onset)] + nh.infectious):
                break
            active = (onset < d) & (d <= onset + nh.infectious)
            sus = ~np.isfinite(t)
            if not sus.any():
                break
            hit = rng.random(int(sus.sum())) >= escape ** int(active.sum())
            idx = np.flatnonzero(sus)[hit]
            t[idx] = d
        members = [(f"{h + 1}-{p + 1}", (day0 + t[p] + nh.incubation) if np.isfinite(t[p]) else np.inf)
                   for p in range(size)]
        out.append((str(h + 1), members))
    return out


def daily_hazard_for(contact_probability: float, D: int) -> float:
    """Constant daily hazard giving ``contact_probability`` over ``D`` days."""
    return 1.0 - (1.0 - contact_probability) ** (1.0 / D)


def synthetic_fixture(contact_probability: float = 0.07, nh: NaturalHistory = NaturalHistory(),
                      seed: int = 0, layout: HouseholdLayout | None = None) -> list[Household]:
    layout = synthetic_layout() if layout is None else layout
    rng = np.random.default_rng(seed)
    return simulate_households(layout, daily_hazard_for(contact_probability, nh.infectious), nh, rng)


# secondary attack rate

@dataclass
class SARResult:
    mean: float
    lower: float
    upper: float
    samples: np.ndarray


def household_shape(households: Sequence[Household]) -> tuple[np.ndarray, np.ndarray]:
    """Per-household sizes and number of earliest (index) cases."""
    sizes, index = [], []
    for _, members in households:
        onsets = np.array([o for _, o in members], dtype=float)
        sick = np.isfinite(onsets)
        sizes.append(len(members))
        index.append(int(np.sum(onsets[sick] == onsets[sick].min())) if sick.any() else 0)
    return np.asarray(sizes), np.asarray(index)


def sar_forward_simulation(households: Sequence[Household], p: float, replicates: int = 10_000,
                           rng: np.random.Generator | None = None, level: float = 0.95) -> SARResult:
    """Reed-Frost outbreaks seeded by each household's index cases.

    Every infective contacts each susceptible member with probability ``p``
    once, generation by generation.  The SAR pools infected over susceptible
    contacts across households.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if replicates <= 0:
        raise ValueError("replicates must be positive")
    rng = np.random.default_rng() if rng is None else rng
    sizes, index = household_shape(households)
    at_risk = np.where(index > 0, sizes - index, 0)
    total = int(at_risk.sum())
    if total == 0:
        raise ValueError("no susceptible household contacts")
    S = np.broadcast_to(at_risk, (replicates, len(sizes))).copy()
    I = np.broadcast_to(index, (replicates, len(sizes))).copy()
    while np.any(I > 0):
        new = rng.binomial(S, 1.0 - (1.0 - p) ** I)
        S -= new
        I = new
    sar = (total - S.sum(axis=1)) / total
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(sar, [tail, 1.0 - tail])
    return SARResult(float(sar.mean()), float(lo), float(hi), sar)
