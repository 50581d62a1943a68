"""Epidemic records and the quantities derived from them.

A record holds, for every person, the infection time, latent period and
infectious period, together with the contact structure and the end of
observation ``T``.  Everything downstream is expressed in *infectiousness
age*: the time elapsed since a person became infectious.

Infectiousness windows are half-open on the left, ``(onset, onset + iota]``,
so a person whose infectiousness begins exactly at ``t_j`` cannot infect
``j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

NETWORK = "network"
MASS_ACTION = "massaction"


class RecordError(ValueError):
    """Raised for inconsistent or unsupported epidemic records."""


@dataclass(frozen=True)
class PersonHistory:
    """Natural history of one person (``t_infection = inf`` if never infected)."""

    id: int
    t_infection: float = np.inf
    latent: float | None = None
    infectious_duration: float | None = None
    imported: bool = False
    infector: int | None = None

    def __post_init__(self):
        if np.isfinite(self.t_infection):
            if self.latent is None or self.infectious_duration is None:
                raise RecordError(f"person {self.id}: infected without natural history")
            if self.latent < 0:
                raise RecordError(f"person {self.id}: negative latent period")
            if self.infectious_duration <= 0:
                raise RecordError(f"person {self.id}: infectious period must be positive")
        elif self.imported:
            raise RecordError(f"person {self.id}: imported but never infected")

    @property
    def recovery(self) -> float:
        return self.latent + self.infectious_duration


@dataclass(frozen=True, eq=False)
class Contacts:
    """Who can make infectious contact with whom.

    In network mode ``edges`` is an ``(E, 2)`` array of directed pairs
    ``(i, j)`` meaning ``C_ij = 1``.  In mass-action mode every ordered pair
    of distinct persons is a contact and ``edges`` is ``None``.
    """

    n: int
    mode: str = NETWORK
    edges: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in (NETWORK, MASS_ACTION):
            raise RecordError(f"unknown contact mode {self.mode!r}")
        if self.mode == NETWORK:
            edges = np.asarray(self.edges if self.edges is not None else np.empty((0, 2)),
                               dtype=np.int64).reshape(-1, 2)
            if len(edges) and (edges.min() < 0 or edges.max() >= self.n):
                raise RecordError("edge endpoint outside population")
            if np.any(edges[:, 0] == edges[:, 1]):
                raise RecordError("self-edges are not allowed")
            object.__setattr__(self, "edges", edges)

    @classmethod
    def mass_action(cls, n: int) -> "Contacts":
        return cls(n=n, mode=MASS_ACTION)

    @classmethod
    def from_undirected(cls, n: int, pairs) -> "Contacts":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(n=n, edges=np.concatenate([pairs, pairs[:, ::-1]]))

    @cached_property
    def _out_csr(self):
        return _csr(self.edges[:, 0], self.edges[:, 1], self.n)

    @cached_property
    def _in_csr(self):
        return _csr(self.edges[:, 1], self.edges[:, 0], self.n)

    def sources(self, j: int) -> np.ndarray:
        """All ``i`` with ``C_ij = 1``."""
        if self.mode == MASS_ACTION:
            return np.delete(np.arange(self.n), j)
        indptr, indices = self._in_csr
        return indices[indptr[j]:indptr[j + 1]]

    def targets(self, i: int) -> np.ndarray:
        """All ``j`` with ``C_ij = 1``."""
        if self.mode == MASS_ACTION:
            return np.delete(np.arange(self.n), i)
        indptr, indices = self._out_csr
        return indices[indptr[i]:indptr[i + 1]]

    def has_edge(self, i: int, j: int) -> bool:
        if i == j:
            return False
        if self.mode == MASS_ACTION:
            return True
        return bool(np.any(self.targets(i) == j))


def _csr(rows, cols, n):
    order = np.lexsort((cols, rows))
    counts = np.bincount(rows, minlength=n)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return indptr, cols[order]


def _gather(csr, nodes):
    """Concatenate the CSR neighbour lists of ``nodes``; return (owner, neighbour)."""
    indptr, indices = csr
    starts, stops = indptr[nodes], indptr[nodes + 1]
    lengths = stops - starts
    owner = np.repeat(nodes, lengths)
    if lengths.sum() == 0:
        return owner, np.empty(0, dtype=np.int64)
    offsets = np.repeat(starts - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return owner, indices[np.arange(lengths.sum()) + offsets]


@dataclass(frozen=True, eq=False)
class EpidemicRecord:
    """Observed data from one epidemic.

    Arrays are indexed by person (0-based).  ``infector[j]`` is ``-1`` when
    unknown or not applicable; imported infections are flagged in
    ``imported``.
    """

    t_infection: np.ndarray
    latent: np.ndarray
    infectious: np.ndarray
    imported: np.ndarray
    contacts: Contacts
    T: float
    infector: np.ndarray = None
    extinct: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.contacts.n
        t = np.asarray(self.t_infection, dtype=float)
        arrays = {
            "t_infection": t,
            "latent": np.asarray(self.latent, dtype=float),
            "infectious": np.asarray(self.infectious, dtype=float),
            "imported": np.asarray(self.imported, dtype=bool),
            "infector": (np.full(n, -1, dtype=np.int64) if self.infector is None
                         else np.asarray(self.infector, dtype=np.int64)),
        }
        for name, arr in arrays.items():
            if arr.shape != (n,):
                raise RecordError(f"{name} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        inf = np.isfinite(t)
        if np.any(t[inf] > self.T) or np.any(t[inf] < 0):
            raise RecordError("infection times must lie in [0, T] or be infinite")
        if np.any(~(self.latent[inf] >= 0)):
            raise RecordError("latent periods must be nonnegative")
        if np.any(~(self.infectious[inf] > 0)):
            raise RecordError("infectious periods must be positive")
        if np.any(self.imported & ~inf):
            raise RecordError("imported infections must have a finite infection time")
        bad = self.infector[(self.infector >= 0) & ~inf]
        if len(bad):
            raise RecordError("infector recorded for an uninfected person")

    @classmethod
    def from_persons(cls, persons: Sequence[PersonHistory], contacts: Contacts,
                     T: float) -> "EpidemicRecord":
        persons = sorted(persons, key=lambda p: p.id)
        if [p.id for p in persons] != list(range(contacts.n)):
            raise RecordError("person ids must be 0..n-1")
        nan = np.nan
        return cls(
            t_infection=np.array([p.t_infection for p in persons], dtype=float),
            latent=np.array([nan if p.latent is None else p.latent for p in persons]),
            infectious=np.array([nan if p.infectious_duration is None
                                 else p.infectious_duration for p in persons]),
            imported=np.array([p.imported for p in persons]),
            infector=np.array([-1 if p.infector is None else p.infector for p in persons]),
            contacts=contacts,
            T=T,
        )

    @property
    def n(self) -> int:
        return self.contacts.n

    @property
    def mode(self) -> str:
        return self.contacts.mode

    @cached_property
    def infected(self) -> np.ndarray:
        return np.flatnonzero(np.isfinite(self.t_infection))

    @property
    def m(self) -> int:
        return len(self.infected)

    @cached_property
    def onset(self) -> np.ndarray:
        """Onset of infectiousness ``t_i + latent_i`` (inf if never infected)."""
        with np.errstate(invalid="ignore"):
            out = self.t_infection + np.where(np.isfinite(self.t_infection), self.latent, 0.0)
        out.setflags(write=False)
        return out

    @cached_property
    def removal(self) -> np.ndarray:
        out = self.onset + np.where(np.isfinite(self.t_infection), self.infectious, 0.0)
        out.setflags(write=False)
        return out

    @cached_property
    def secondary(self) -> np.ndarray:
        """Infected, non-imported persons: the infections an estimator explains."""
        idx = self.infected
        return idx[~self.imported[idx]]

    def with_infectors(self, infector) -> "EpidemicRecord":
        return EpidemicRecord(self.t_infection, self.latent, self.infectious, self.imported,
                              self.contacts, self.T, infector=np.asarray(infector),
                              extinct=self.extinct, meta=dict(self.meta))

    def hide_infectors(self, keep: Iterable[int] = ()) -> "EpidemicRecord":
        """Copy with who-infected-whom removed except for persons in ``keep``."""
        v = np.full(self.n, -1, dtype=np.int64)
        keep = np.asarray(list(keep), dtype=np.int64)
        v[keep] = self.infector[keep]
        return self.with_infectors(v)

    def scaled(self, c: float) -> "EpidemicRecord":
        """Same epidemic with every time multiplied by ``c > 0``."""
        return EpidemicRecord(self.t_infection * c, self.latent * c, self.infectious * c,
                              self.imported, self.contacts, self.T * c,
                              infector=self.infector, extinct=self.extinct)

    def validate(self) -> None:
        """Check that every recorded infector was infectious at the infection time."""
        for j in np.flatnonzero(self.infector >= 0):
            if self.infector[j] not in infectious_set(self, j):
                raise RecordError(f"recorded infector of {j} was not infectious at t_j")


def infectious_set(record: EpidemicRecord, j: int) -> set[int]:
    """Persons who could have infected ``j``: contacts infectious at ``t_j``."""
    tj = record.t_infection[j]
    if not np.isfinite(tj):
        raise RecordError(f"person {j} was never infected")
    if record.imported[j]:
        raise RecordError(f"person {j} is imported, no infectious set")
    src = record.contacts.sources(j)
    ok = (record.onset[src] < tj) & (tj <= record.removal[src])
    found = {int(i) for i in src[ok]}
    if not found:
        raise RecordError(f"person {j} has an empty infectious set")
    return found


@dataclass(frozen=True)
class CandidatePairs:
    """Every possible (infector, infectee) pair with its infectiousness age.

    Sorted by infectee, then age.  ``observed`` marks infectees whose infector
    is recorded; for those only the recorded pair is kept.
    """

    j: np.ndarray
    i: np.ndarray
    tau: np.ndarray

    def __len__(self):
        return len(self.j)


def candidate_pairs(record: EpidemicRecord, use_observed: bool = True) -> CandidatePairs:
    """Collect the infectious sets of all secondary infections at once.

    With ``use_observed`` the infectious set of every ``j`` whose infector is
    recorded is replaced by that single infector.
    """
    js = record.secondary
    t, onset, removal = record.t_infection, record.onset, record.removal
    if record.mode == MASS_ACTION:
        cand = record.infected
        jj = np.repeat(js, len(cand))
        ii = np.tile(cand, len(js))
    else:
        jj, ii = _gather(record.contacts._in_csr, js)
    ok = (onset[ii] < t[jj]) & (t[jj] <= removal[ii]) & (ii != jj)
    jj, ii = jj[ok], ii[ok]
    if use_observed:
        v = record.infector[jj]
        keep = (v < 0) | (v == ii)
        jj, ii = jj[keep], ii[keep]
    tau = t[jj] - onset[ii]
    order = np.lexsort((ii, tau, jj))
    jj, ii, tau = jj[order], ii[order], tau[order]
    counts = np.bincount(jj, minlength=record.n)[js]
    if np.any(counts == 0):
        empty = js[counts == 0]
        if use_observed and np.all(record.infector[empty] >= 0):
            raise RecordError(f"recorded infectors not infectious for persons {empty[:10].tolist()}")
        raise RecordError(f"empty infectious set for persons {empty[:10].tolist()}")
    return CandidatePairs(j=jj, i=ii, tau=tau)


@dataclass(frozen=True)
class RiskSetFunction:
    """Left-continuous count of windows ``(0, u]`` that contain ``tau``.

    ``ends`` holds the sorted right endpoints, one per contact interval
    under observation (or per infectious person, for ``Y_*``).
    """

    ends: np.ndarray

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return len(self.ends) - np.searchsorted(self.ends, tau, side="left")

    @property
    def horizon(self) -> float:
        """Largest age with a nonzero count (0 when empty)."""
        return float(self.ends[-1]) if len(self.ends) else 0.0

    def __len__(self):
        return len(self.ends)


def _window_ends(record: EpidemicRecord, ii: np.ndarray, jj: np.ndarray) -> np.ndarray:
    onset = record.onset[ii]
    u = np.minimum(np.minimum(record.infectious[ii], record.t_infection[jj] - onset),
                   record.T - onset)
    return u[u > 0]


def contact_windows(record: EpidemicRecord) -> np.ndarray:
    """Observed (possibly censored) contact interval of every at-risk pair, unsorted."""
    src = record.infected[record.onset[record.infected] <= record.T]
    if record.mode == MASS_ACTION:
        ends = []
        for chunk in np.array_split(src, max(1, len(src) * record.n // 5_000_000 + 1)):
            ii = np.repeat(chunk, record.n)
            jj = np.tile(np.arange(record.n), len(chunk))
            keep = ii != jj
            ends.append(_window_ends(record, ii[keep], jj[keep]))
        return np.concatenate(ends) if ends else np.empty(0)
    ii, jj = _gather(record.contacts._out_csr, src)
    return _window_ends(record, ii, jj)


def risk_set(record: EpidemicRecord) -> RiskSetFunction:
    """``Y(tau)``: number of contact intervals of length ``>= tau`` under observation."""
    return RiskSetFunction(np.sort(contact_windows(record)))


def infectious_windows(record: EpidemicRecord) -> np.ndarray:
    """Per infected person, the age at which it stops being infectious or observed."""
    src = record.infected[record.onset[record.infected] <= record.T]
    u = np.minimum(record.infectious[src], record.T - record.onset[src])
    return u[u > 0]


def mass_action_risk_set(record: EpidemicRecord) -> RiskSetFunction:
    """``Y_*(tau)``: infected persons still infectious and observed at age ``tau``."""
    if record.mode != MASS_ACTION:
        raise RecordError("mass_action_risk_set requires a mass-action record")
    return RiskSetFunction(np.sort(infectious_windows(record)))
