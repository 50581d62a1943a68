from math import comb

import numpy as np
import pytest

from contactna.chainbinom import DiscreteHazard, chain_binomial_loglik, fit_escape_probability
from contactna.harness.households import (NaturalHistory, build_household_record,
                                          simulate_households, synthetic_layout)
from contactna.hazards import Weibull
from contactna.records import RecordError

from conftest import brute_probability, household, make_record, outcomes


def test_zero_hazard_no_transmission():
    rec = household([0.0, np.inf, np.inf], [0, 0, 0], [3, 3, 3], T=10)
    assert chain_binomial_loglik(rec, DiscreteHazard.constant(0.0, 3)) == 0.0


def test_single_infector_examples():
    q = 0.8
    hz = DiscreteHazard.constant(1 - q, 3)
    rec = household([0.0, 2.0], [0, 0], [3, 3], T=10)
    # escapes day 1, infected day 2
    assert np.exp(chain_binomial_loglik(rec, hz)) == pytest.approx(q * (1 - q), rel=1e-12)
    rec = household([0.0, np.inf], [0, 0], [3, 3], T=10)
    assert np.exp(chain_binomial_loglik(rec, hz)) == pytest.approx(q ** 3, rel=1e-12)


def test_bad_inputs():
    with pytest.raises(ValueError):
        DiscreteHazard((0.5, 1.2))
    with pytest.raises(ValueError):
        DiscreteHazard(())
    rec = household([0.0, 1.5], [0, 0], [3, 3], T=10)
    with pytest.raises(RecordError):
        chain_binomial_loglik(rec, DiscreteHazard.constant(0.1, 3))
    rec = household([0.0, 2.0], [0, 0], [5, 3], T=10)
    with pytest.raises(RecordError):
        chain_binomial_loglik(rec, DiscreteHazard.constant(0.1, 3))


@pytest.mark.parametrize("size", [2, 3, 4])
@pytest.mark.parametrize("D", [1, 2, 3, 4])
def test_matches_enumeration_and_normalizes(size, D):
    rng = np.random.default_rng(size * 10 + D)
    lam = rng.uniform(0.05, 0.6, D)
    hz = DiscreteHazard(tuple(lam))
    latent = rng.integers(0, 2, size)
    iota = rng.integers(1, D + 1, size)
    # horizon after every possible recovery, so observation is complete
    last = int(size * (1 + D + 1))
    T = last + D + 2
    total = 0.0
    checked = 0
    for t in outcomes(size, last):
        p = brute_probability(t, latent, iota, lam, T)
        try:
            rec = household(t, latent, iota, T)
            ll = chain_binomial_loglik(rec, hz)
        except RecordError:
            assert p == 0.0
            continue
        assert abs(np.exp(ll) - p) < 1e-10
        total += np.exp(ll)
        checked += 1
    assert checked > 0
    assert total == pytest.approx(1.0, abs=1e-10)


def reed_frost_final_size(size, q):
    """Final-size distribution for one index case with per-generation escape ``q``."""
    dist = np.zeros(size + 1)

    def step(S, I, infected, pr):
        if I == 0 or S == 0:
            dist[infected] += pr
            return
        p_inf = 1.0 - q ** I
        for k in range(S + 1):
            step(S - k, k, infected + k, pr * comb(S, k) * p_inf ** k * (1 - p_inf) ** (S - k))

    step(size - 1, 1, 1, 1.0)
    return dist


@pytest.mark.parametrize("size,D", [(3, 2), (4, 2), (3, 3), (4, 1)])
def test_textbook_chain_recursion(size, D):
    # latent period D keeps generations apart, so daily chains collapse to Reed-Frost
    lam = 0.3
    hz = DiscreteHazard.constant(lam, D)
    latent = [D] * size
    iota = [D] * size
    last = size * (2 * D + 1)
    T = last + 2 * D + 2
    final = np.zeros(size + 1)
    for t in outcomes(size, last):
        try:
            rec = household(t, latent, iota, T)
            p = np.exp(chain_binomial_loglik(rec, hz))
        except RecordError:
            continue
        final[int(np.sum(np.isfinite(t)))] += p
    expect = reed_frost_final_size(size, (1 - lam) ** D)
    assert np.allclose(final, expect, rtol=0, atol=1e-12)


def test_fit_boundaries():
    rec = household([0.0, np.inf, np.inf], [0, 0, 0], [3, 3, 3], T=10)
    fit = fit_escape_probability([rec], D=3)
    assert fit.lam == 0.0 and fit.lower == 0.0 and 0 < fit.upper < 1
    rec = household([0.0, 1.0], [0, 5], [1, 1], T=7)
    fit = fit_escape_probability([rec], D=1)
    assert fit.lam == 1.0 and fit.upper == 1.0 and 0 < fit.lower < 1


def test_fit_needs_information():
    rec = household([0.0, np.inf], [5, 0], [2, 2], T=3)
    with pytest.raises(ValueError, match="undefined"):
        fit_escape_probability([rec], D=2)


def test_fit_matches_direct_maximization():
    layout = synthetic_layout()
    nh = NaturalHistory(0, 0, 6)
    hh = simulate_households(layout, 0.05, nh, np.random.default_rng(1))
    rec = build_household_record(hh, nh).record
    fit = fit_escape_probability([rec], D=6)
    grid = np.linspace(0.001, 0.2, 2000)
    ll = [chain_binomial_loglik(rec, DiscreteHazard.constant(x, 6)) for x in grid]
    assert abs(grid[int(np.argmax(ll))] - fit.lam) < 2e-4
    assert fit.loglik == pytest.approx(chain_binomial_loglik(rec, fit.hazard()), rel=1e-12)
    # profile limits sit 1.92 log-likelihood units below the maximum
    for x in (fit.lower, fit.upper):
        drop = fit.loglik - chain_binomial_loglik(rec, DiscreteHazard.constant(x, 6))
        assert drop == pytest.approx(1.920729, abs=1e-5)


def test_fit_calibration():
    layout = synthetic_layout()
    nh = NaturalHistory(0, 0, 6)
    rng = np.random.default_rng(2)
    hits = 0
    reps = 200
    for _ in range(reps):
        hh = simulate_households(layout, 0.012, nh, rng)
        fit = fit_escape_probability([build_household_record(hh, nh).record], D=6)
        hits += fit.lower <= 0.012 <= fit.upper
    assert hits / reps >= 0.90


def test_continuity_bridge():
    # discretize a continuous hazard ever more finely; the daily log likelihood
    # minus m log h approaches the continuous-time log likelihood
    model = Weibull(2.0, 1.0)
    t = np.array([0.0, 0.75, 1.25, np.inf, 0.0])
    latent = np.array([0.0, 0.25, 0.0, 0.0, 0.5])
    iota = np.array([1.5, 1.0, 1.0, 1.0, 1.0])
    imported = np.array([True, False, False, False, True])
    T = 3.0
    edges = [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1), (1, 3), (3, 1), (4, 1), (1, 4)]
    # continuous: sum log(sum hazard over infectious set) - sum Lambda(exposure)
    onset = t + latent
    exact = 0.0
    n = len(t)
    for a, b in edges:
        if not np.isfinite(t[a]) or onset[a] >= T:
            continue
        u = min(iota[a], t[b] - onset[a], T - onset[a])
        if u > 0:
            exact -= model.cumulative_hazard(u)
    for j in range(n):
        if np.isfinite(t[j]) and not imported[j]:
            lam = [model.hazard(t[j] - onset[i]) for i, jj in edges
                   if jj == j and np.isfinite(t[i]) and onset[i] < t[j] <= onset[i] + iota[i]]
            exact += np.log(sum(lam))
    errors = []
    for k in (4, 16, 64, 256):
        h = 1.0 / k
        D = int(round(iota.max() * k))
        S = np.exp(-model.cumulative_hazard(np.arange(D + 1) * h))
        lam = 1.0 - S[1:] / S[:-1]
        rec = make_record(t * k, latent * k, iota * k, edges, T * k, imported=imported)
        ll = chain_binomial_loglik(rec, DiscreteHazard(tuple(lam)))
        errors.append(abs(ll - 2 * np.log(h) - exact))
    assert all(a > b for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 0.02
