"""Monte Carlo coverage of pointwise confidence limits."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..em import EMConfig, em_estimate
from ..estimators import confidence_band, kaplan_meier, nelson_aalen
from ..records import MASS_ACTION, RecordError, mass_action_risk_set, risk_set
from ..simulate import SimulationConfig, simulate_epidemic

log = logging.getLogger(__name__)

QUANTILES = (5, 10, 25, 50, 75, 90, 95)
NA, KM, MNA, MKM = "nelson-aalen", "kaplan-meier", "marginal-na", "marginal-km"
ESTIMATORS = (NA, KM, MNA, MKM)
CSV_COLUMNS = ["estimator", "quantile", "hits", "n", "coverage", "lo", "hi"]


def clopper_pearson(k: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Exact binomial confidence interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        return float("nan"), float("nan")
    if not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n")
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass
class ReplicateResult:
    hits: dict[str, np.ndarray]
    failures: dict[str, str]
    iterations: int | None
    converged: bool | None
    extinctions: int
    quantile_ages: np.ndarray
    truth: np.ndarray


@dataclass
class CoverageReport:
    estimators: tuple[str, ...]
    quantiles: tuple[int, ...]
    replicates: int
    hits: dict[str, np.ndarray]
    n: dict[str, int]
    failures: dict[str, list[tuple[int, str]]] = field(default_factory=dict)
    iterations: list[int] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)
    extinctions: int = 0
    error: str | None = None

    def coverage(self, estimator: str, quantile: int) -> float:
        k = self.quantiles.index(quantile)
        n = self.n[estimator]
        return self.hits[estimator][k] / n if n else float("nan")

    def interval(self, estimator: str, quantile: int) -> tuple[float, float]:
        k = self.quantiles.index(quantile)
        return clopper_pearson(int(self.hits[estimator][k]), self.n[estimator])

    def rows(self):
        for est in self.estimators:
            for k, q in enumerate(self.quantiles):
                h, n = int(self.hits[est][k]), self.n[est]
                lo, hi = clopper_pearson(h, n)
                yield est, q, h, n, (h / n if n else float("nan")), lo, hi

    def iteration_summary(self) -> dict[str, float]:
        if not self.iterations:
            return {}
        it = np.asarray(self.iterations)
        return {"min": int(it.min()), "median": float(np.median(it)), "max": int(it.max()),
                "converged_fraction": float(np.mean(self.converged))}

    def summary_lines(self) -> list[str]:
        out = []
        for est, q, h, n, cov, lo, hi in self.rows():
            out.append(f"{est:13s} {q:3d}  {cov:.3f} ({lo:.3f}, {hi:.3f})  [{h}/{n}]")
        return out


def replicate_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(rep)])


def run_replicate(config: SimulationConfig, estimators=ESTIMATORS, seed: int = 0, rep: int = 0,
                  em_config: EMConfig | None = None, quantiles=QUANTILES,
                  max_attempts: int = 1000) -> ReplicateResult:
    """Simulate one epidemic that reaches ``stop_m`` and test every estimator's limits."""
    rng = replicate_rng(seed, rep)
    extinctions = 0
    for _ in range(max_attempts):
        record = simulate_epidemic(config, rng)
        if not record.extinct:
            break
        extinctions += 1
    else:
        raise RuntimeError(f"no epidemic reached {config.stop_m} infections in {max_attempts} tries")
    mass = config.mode == MASS_ACTION
    Y = mass_action_risk_set(record) if mass else risk_set(record)
    ages = np.percentile(Y.ends, quantiles)
    truth = np.asarray(config.contact_model.cumulative_hazard(ages), dtype=float)
    if em_config is None:
        em_config = EMConfig(tol=5e-3 if mass else 5e-4)
    hits: dict[str, np.ndarray] = {}
    failures: dict[str, str] = {}
    iterations = converged = None
    try:
        if NA in estimators or KM in estimators:
            na = nelson_aalen(record, Y)
            if NA in estimators:
                hits[NA] = confidence_band(na, tau=ages).contains(truth)
            if KM in estimators:
                km = kaplan_meier(record, Y)
                hits[KM] = confidence_band(km, tau=ages).contains(np.exp(-truth))
    except (RecordError, ValueError) as exc:
        for name in (NA, KM):
            if name in estimators:
                failures[name] = str(exc)
    if MNA in estimators or MKM in estimators:
        try:
            res = em_estimate(record.hide_infectors(), em_config, Y)
            iterations, converged = res.iterations, res.converged
            if MNA in estimators:
                hits[MNA] = confidence_band(res.cumhaz, tau=ages).contains(truth)
            if MKM in estimators:
                hits[MKM] = confidence_band(res.survival, tau=ages).contains(np.exp(-truth))
        except (RecordError, ValueError) as exc:
            for name in (MNA, MKM):
                if name in estimators:
                    failures[name] = str(exc)
    return ReplicateResult(hits, failures, iterations, converged, extinctions, ages, truth)


def _job(args):
    return run_replicate(*args)


def coverage_study(config: SimulationConfig, estimators=ESTIMATORS, replicates: int = 200,
                   seed: int = 0, em_config: EMConfig | None = None, jobs: int = 1,
                   quantiles=QUANTILES, progress=None) -> CoverageReport:
    """Coverage of the 95% limits at the possible-contact-interval quantiles.

    Replicate ``r`` uses the generator seeded by ``(seed, r)``, so the report
    does not depend on ``jobs``.  Estimator failures are counted per
    estimator and excluded from its denominator.
    """
    estimators = tuple(estimators)
    unknown = set(estimators) - set(ESTIMATORS)
    if unknown:
        raise ValueError(f"unknown estimators {sorted(unknown)}")
    report = CoverageReport(estimators, tuple(quantiles), replicates,
                            {e: np.zeros(len(quantiles), dtype=np.int64) for e in estimators},
                            {e: 0 for e in estimators}, {e: [] for e in estimators})
    if replicates <= 0:
        report.error = "no replicates"
        return report
    args = [(config, estimators, seed, r, em_config, tuple(quantiles)) for r in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = pool.map(_job, args, chunksize=max(1, replicates // (4 * jobs)))
            _collect(report, results, progress)
    else:
        _collect(report, map(_job, args), progress)
    return report


def _collect(report: CoverageReport, results, progress):
    for r, res in enumerate(results):
        report.extinctions += res.extinctions
        for est in report.estimators:
            if est in res.failures:
                report.failures[est].append((r, res.failures[est]))
                log.warning("replicate %d: %s failed: %s", r, est, res.failures[est])
            else:
                report.hits[est] += res.hits[est]
                report.n[est] += 1
        if res.iterations is not None:
            report.iterations.append(res.iterations)
            report.converged.append(bool(res.converged))
        if progress is not None:
            progress(r + 1)
