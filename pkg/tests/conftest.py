import itertools

import numpy as np
import pytest

from contactna.records import MASS_ACTION, NETWORK, Contacts, EpidemicRecord


def make_record(t, latent, iota, edges, T, imported=None, infector=None, mode=NETWORK):
    t = np.asarray(t, dtype=float)
    n = len(t)
    inf = np.isfinite(t)
    if imported is None:
        imported = inf & (t == 0)
    latent = np.where(inf, np.asarray(latent, dtype=float), np.nan)
    iota = np.where(inf, np.asarray(iota, dtype=float), np.nan)
    if mode == MASS_ACTION:
        contacts = Contacts.mass_action(n)
    else:
        contacts = Contacts(n, NETWORK, np.asarray(edges, dtype=np.int64).reshape(-1, 2))
    return EpidemicRecord(t, latent, iota, np.asarray(imported), contacts, float(T),
                          infector=None if infector is None else np.asarray(infector))


def random_record(rng, n=None, max_n=6, p_edge=0.7, p_infect=0.7, with_infectors=True,
                  integer=False, mode=NETWORK):
    """A small consistent record built forward in time.

    Person 0 is imported at time 0.  Each later person is either never
    infected or infected inside the window of an earlier infected contact.
    """
    n = int(rng.integers(2, max_n + 1)) if n is None else n
    if mode == MASS_ACTION:
        adj = ~np.eye(n, dtype=bool)
    else:
        adj = (rng.random((n, n)) < p_edge) & ~np.eye(n, dtype=bool)
    t = np.full(n, np.inf)
    lat = np.zeros(n)
    iota = np.ones(n)
    v = np.full(n, -1)
    t[0] = 0.0
    draw = (lambda lo, hi: float(rng.integers(lo, hi + 1))) if integer else \
        (lambda lo, hi: float(rng.uniform(lo, hi)))
    lat[0], iota[0] = (draw(0, 1), draw(1, 3)) if integer else (draw(0, 0.5), draw(0.5, 2))
    for j in range(1, n):
        if rng.random() > p_infect:
            continue
        srcs = [i for i in range(j) if np.isfinite(t[i]) and adj[i, j]]
        if not srcs:
            continue
        i = srcs[int(rng.integers(len(srcs)))]
        onset = t[i] + lat[i]
        if integer:
            t[j] = onset + float(rng.integers(1, int(iota[i]) + 1))
            lat[j], iota[j] = draw(0, 1), draw(1, 3)
        else:
            t[j] = onset + rng.uniform(0.05, 1.0) * iota[i]
            lat[j], iota[j] = draw(0, 0.5), draw(0.5, 2)
        v[j] = i
    fin = t[np.isfinite(t)]
    if integer:
        T = float(max(fin.max(), np.max((t + lat + iota)[np.isfinite(t)]) - int(rng.integers(0, 2))))
    else:
        T = float(fin.max() + rng.uniform(0, 2))
    T = max(T, float(fin.max()))
    edges = np.argwhere(adj)
    rec = make_record(t, lat, iota, edges, T, imported=np.arange(n) == 0,
                      infector=v if with_infectors else None, mode=mode)
    return rec


# brute-force oracles, written straight from the set definitions

def brute_infectious_set(rec, j):
    t = rec.t_infection
    out = set()
    for i in range(rec.n):
        if i == j or not np.isfinite(t[i]) or not rec.contacts.has_edge(i, j):
            continue
        on = t[i] + rec.latent[i]
        if on < t[j] <= on + rec.infectious[i]:
            out.add(i)
    return out


def brute_Y(rec, tau):
    """Triple sum over (j, i) of I*_i(tau) S*_ij(tau) 1{tau <= T - onset_i}."""
    t = rec.t_infection
    total = 0
    for i in range(rec.n):
        if not np.isfinite(t[i]):
            continue
        on = t[i] + rec.latent[i]
        if on > rec.T:
            continue
        for j in range(rec.n):
            if j == i or not rec.contacts.has_edge(i, j):
                continue
            infectious = 0 < tau <= rec.infectious[i]
            susceptible = tau <= t[j] - on
            observed = tau <= rec.T - on
            total += int(infectious and susceptible and observed)
    return total


def brute_Y_star(rec, tau):
    t = rec.t_infection
    total = 0
    for i in range(rec.n):
        if np.isfinite(t[i]):
            on = t[i] + rec.latent[i]
            total += int(on <= rec.T and 0 < tau <= rec.infectious[i] and tau <= rec.T - on)
    return total


def brute_nelson_aalen(rec, tau, Yfun=brute_Y):
    total = 0.0
    for j in range(rec.n):
        i = rec.infector[j]
        if i < 0:
            continue
        a = rec.t_infection[j] - (rec.t_infection[i] + rec.latent[i])
        if a <= tau:
            total += 1.0 / Yfun(rec, a)
    return total


def enumerate_networks(rec, hazard):
    """All transmission networks with their probabilities under ``hazard``."""
    js = [j for j in range(rec.n) if np.isfinite(rec.t_infection[j]) and not rec.imported[j]]
    sets = [sorted(brute_infectious_set(rec, j)) for j in js]
    for combo in itertools.product(*sets):
        pr = 1.0
        for j, i, cand in zip(js, combo, sets):
            ages = [rec.t_infection[j] - (rec.t_infection[k] + rec.latent[k]) for k in cand]
            lam = [float(hazard(a)) for a in ages]
            pr *= lam[cand.index(i)] / sum(lam)
        yield dict(zip(js, combo)), pr


def fine_grid(rec, extra=()):
    pts = {0.5 * rec.T}
    t = rec.t_infection
    for i in range(rec.n):
        if np.isfinite(t[i]):
            on = t[i] + rec.latent[i]
            for j in range(rec.n):
                if np.isfinite(t[j]):
                    pts.add(t[j] - on)
            pts.add(rec.infectious[i])
            pts.add(rec.T - on)
    pts |= set(extra)
    base = sorted(p for p in pts if p > 0)
    grid = set(base)
    for p in base:
        grid |= {p * (1 - 1e-9), p * (1 + 1e-9)}
    return np.array(sorted(grid))


# daily household oracles

def household(t, latent, iota, T, imported=None):
    n = len(t)
    edges = [(a, b) for a in range(n) for b in range(n) if a != b]
    return make_record(t, latent, iota, edges, T, imported=imported)


def brute_probability(t, latent, iota, lam, T):
    """Day-by-day probability of the exact outcome ``t`` (inf = never infected)."""
    t = np.asarray(t, dtype=float)
    onset = t + np.asarray(latent, dtype=float)
    prob = 1.0
    for d in range(1, int(T) + 1):
        for j in range(len(t)):
            if t[j] < d:
                continue
            escape = 1.0
            for i in range(len(t)):
                if i != j and np.isfinite(t[i]) and onset[i] < d <= onset[i] + iota[i]:
                    escape *= 1.0 - lam[int(d - onset[i]) - 1]
            prob *= (1.0 - escape) if t[j] == d else escape
    return prob


def outcomes(size, last_day):
    """Every assignment of infection days 1..last_day (or never) to non-primary members."""
    choices = list(range(1, last_day + 1)) + [np.inf]
    for rest in itertools.product(choices, repeat=size - 1):
        yield [0.0, *rest]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report_criterion(label: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
