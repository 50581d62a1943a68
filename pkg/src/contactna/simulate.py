"""Watts-Strogatz contact networks and event-driven SEIR simulation."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace

import numpy as np

from .hazards import Constant, Exponential, HazardModel, Weibull
from .records import MASS_ACTION, NETWORK, Contacts, EpidemicRecord


def generate_ws_network(n: int, k: int, p: float, rng: np.random.Generator,
                        return_rewired: bool = False):
    """Watts-Strogatz small-world graph.

    Start from a ring where every node is joined to its ``k`` nearest
    neighbours, then visit each lattice edge ``(u, u + d)`` (offset ``d``
    outer, node ``u`` inner) and with probability ``p`` move its far end to a
    uniformly chosen node, avoiding self-loops and duplicate edges.

    With ``return_rewired`` also return, per node, how many of its ``k``
    lattice edges were rewired.
    """
    if k % 2 or not 2 <= k < n:
        raise ValueError("k must be even with 2 <= k < n")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    half = k // 2
    u = np.tile(np.arange(n, dtype=np.int64), half)
    v = (u + np.repeat(np.arange(1, half + 1), n)) % n
    rewire = np.flatnonzero(rng.random(half * n) < p)
    rewired = np.zeros(n, dtype=np.int64)
    if len(rewire):
        present = set((np.minimum(u, v) * n + np.maximum(u, v)).tolist())
        degree = np.full(n, k, dtype=np.int64)
        for e in rewire.tolist():
            a, b = int(u[e]), int(v[e])
            if degree[a] >= n - 1:
                continue
            while True:
                w = int(rng.integers(n))
                key = min(a, w) * n + max(a, w)
                if w != a and key not in present:
                    break
            present.discard(min(a, b) * n + max(a, b))
            present.add(key)
            degree[b] -= 1
            degree[w] += 1
            v[e] = w
            rewired[a] += 1
            rewired[b] += 1
    contacts = Contacts.from_undirected(n, np.column_stack([u, v]))
    return (contacts, rewired) if return_rewired else contacts


@dataclass
class SimulationConfig:
    mode: str = NETWORK
    n: int = 10_000
    ws_k: int = 10
    ws_p: float = 0.1
    contact_model: HazardModel = field(default_factory=lambda: Weibull(2.0, 1.0))
    latent_model: HazardModel = field(default_factory=lambda: Constant(0.0))
    infectious_model: HazardModel = field(default_factory=lambda: Exponential(1.0))
    initial_infections: int = 1
    stop_m: int = 300
    seed: int | None = 0

    def __post_init__(self):
        if self.mode not in (NETWORK, MASS_ACTION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 1 <= self.initial_infections <= self.stop_m <= self.n:
            raise ValueError("need 1 <= initial_infections <= stop_m <= n")
        if self.mode == NETWORK:
            if self.ws_k % 2 or not 2 <= self.ws_k < self.n:
                raise ValueError("ws_k must be even with 2 <= ws_k < n")
            if not 0.0 <= self.ws_p <= 1.0:
                raise ValueError("ws_p must lie in [0, 1]")

    def with_(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)


def _duration(model: HazardModel, rng) -> float:
    return float(model.sample(rng, size=None))


def simulate_epidemic(config: SimulationConfig, rng: np.random.Generator | None = None,
                      contacts: Contacts | None = None) -> EpidemicRecord:
    """Simulate until ``stop_m`` infections have occurred or the epidemic dies out.

    ``T`` is the time of the ``stop_m``-th infection.  On extinction the
    record is flagged and ``T`` is the last removal time, so every contact
    interval is fully observed.  In mass-action mode the per-pair cumulative
    hazard is ``Lambda(tau) / (n - 1)``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n = config.n
    if config.mode == NETWORK:
        if contacts is None:
            contacts = generate_ws_network(n, config.ws_k, config.ws_p, rng)
        indptr, indices = contacts._out_csr
    else:
        contacts = Contacts.mass_action(n)

    t_inf = np.full(n, np.inf)
    latent = np.full(n, np.nan)
    infectious = np.full(n, np.nan)
    infector = np.full(n, -1, dtype=np.int64)
    imported = np.zeros(n, dtype=bool)
    queue: list[tuple[float, int, int]] = []
    count = 0
    T = None
    contact_model = config.contact_model

    def infect(j: int, t: float, source: int):
        t_inf[j] = t
        infector[j] = source
        eps = _duration(config.latent_model, rng)
        iota = _duration(config.infectious_model, rng)
        latent[j], infectious[j] = eps, iota
        start = t + eps
        if config.mode == NETWORK:
            targets = indices[indptr[j]:indptr[j + 1]]
            targets = targets[~np.isfinite(t_inf[targets])]
            if len(targets) == 0:
                return
            tau = contact_model.sample(rng, size=len(targets))
            hit = tau <= iota
            for tgt, age in zip(targets[hit].tolist(), tau[hit].tolist()):
                heapq.heappush(queue, (start + age, tgt, j))
        else:
            scale = n - 1
            p_any = -np.expm1(-float(contact_model.cumulative_hazard(iota)) / scale)
            k = int(rng.binomial(n - 1, p_any))
            if k == 0:
                return
            targets = rng.choice(n - 1, size=k, replace=False)
            targets = targets + (targets >= j)
            u = rng.random(k) * p_any
            tau = contact_model.inverse_cumulative_hazard(-scale * np.log1p(-u))
            tau = np.minimum(tau, iota)
            for tgt, age in zip(targets.tolist(), tau.tolist()):
                if not np.isfinite(t_inf[tgt]):
                    heapq.heappush(queue, (start + age, tgt, j))

    seeds = rng.choice(n, size=config.initial_infections, replace=False)
    for j in sorted(seeds.tolist()):
        imported[j] = True
        infect(j, 0.0, -1)
        count += 1
    if count >= config.stop_m:
        T = 0.0

    while T is None and queue:
        t, j, i = heapq.heappop(queue)
        if np.isfinite(t_inf[j]):
            continue
        infect(j, t, i)
        count += 1
        if count >= config.stop_m:
            T = t

    extinct = T is None
    if extinct:
        done = np.isfinite(t_inf)
        T = float(np.max(t_inf[done] + latent[done] + infectious[done]))
    return EpidemicRecord(t_inf, latent, infectious, imported, contacts, T,
                          infector=infector, extinct=extinct,
                          meta={"seed": config.seed})
