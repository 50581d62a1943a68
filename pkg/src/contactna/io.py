"""CSV readers and writers.  All writes go through a temp file and a rename."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .estimators import SURVIVAL, StepEstimate, confidence_band
from .records import MASS_ACTION, NETWORK, Contacts, EpidemicRecord, RecordError

RECORD_COLUMNS = ["id", "t_infection", "latent", "infectious_duration", "infector"]
HOUSEHOLD_COLUMNS = ["household_id", "person_id", "onset_day"]


def atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def fmt(x) -> str:
    """Shortest round-tripping text for a float; empty for +inf or NaN."""
    x = float(x)
    if np.isnan(x) or x == np.inf:
        return ""
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def _rows_to_text(header: list[str] | None, rows: Iterable[Iterable], preamble: str = "") -> str:
    buf = io.StringIO()
    buf.write(preamble)
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _parse_float(s: str, empty: float = np.inf) -> float:
    s = s.strip()
    return empty if s == "" else float(s)


def _parse_header(line: str) -> dict[str, str]:
    if not line.startswith("#"):
        raise RecordError("record CSV must start with a '#mode=...,n=...,T=...' line")
    out = {}
    for part in line[1:].strip().split(","):
        if "=" not in part:
            raise RecordError(f"bad header field {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


# records

def record_to_text(record: EpidemicRecord) -> str:
    meta = f"#mode={record.mode},n={record.n},T={fmt(record.T)}"
    if record.extinct:
        meta += ",extinct=1"
    rows = []
    for k in range(record.n):
        t = record.t_infection[k]
        if not np.isfinite(t):
            rows.append([k + 1, "", "", "", ""])
            continue
        if record.imported[k]:
            v = "0"
        elif record.infector[k] >= 0:
            v = str(int(record.infector[k]) + 1)
        else:
            v = ""
        rows.append([k + 1, fmt(t), fmt(record.latent[k]), fmt(record.infectious[k]), v])
    return _rows_to_text(RECORD_COLUMNS, rows, meta + "\n")


def edges_to_text(contacts: Contacts) -> str:
    return _rows_to_text(["i", "j"], (contacts.edges + 1).tolist())


def write_record(record: EpidemicRecord, path, edges_path=None) -> None:
    atomic_write(path, record_to_text(record))
    if record.mode == NETWORK:
        if edges_path is None:
            edges_path = default_edges_path(path)
        atomic_write(edges_path, edges_to_text(record.contacts))


def default_edges_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".edges.csv")


def read_edges(path, n: int) -> Contacts:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["i", "j"]:
            raise RecordError(f"{path}: expected header 'i,j'")
        pairs = [(int(a) - 1, int(b) - 1) for a, b in reader]
    edges = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= n):
        raise RecordError(f"{path}: person id outside 1..{n}")
    return Contacts(n, NETWORK, edges)


def read_record(path, edges_path=None) -> EpidemicRecord:
    with open(path, newline="") as fh:
        meta = _parse_header(fh.readline())
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != RECORD_COLUMNS:
            raise RecordError(f"{path}: expected columns {','.join(RECORD_COLUMNS)}")
        rows = list(reader)
    try:
        mode, n, T = meta["mode"], int(meta["n"]), float(meta["T"])
    except KeyError as exc:
        raise RecordError(f"{path}: header lacks {exc}") from None
    if mode not in (NETWORK, MASS_ACTION):
        raise RecordError(f"{path}: unknown mode {mode!r}")
    t = np.full(n, np.inf)
    latent = np.full(n, np.nan)
    infectious = np.full(n, np.nan)
    imported = np.zeros(n, dtype=bool)
    infector = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for row in rows:
        k = int(row["id"]) - 1
        if not 0 <= k < n or seen[k]:
            raise RecordError(f"{path}: bad or repeated id {row['id']}")
        seen[k] = True
        t[k] = _parse_float(row["t_infection"])
        if np.isfinite(t[k]):
            latent[k] = _parse_float(row["latent"], np.nan)
            infectious[k] = _parse_float(row["infectious_duration"], np.nan)
            v = row["infector"].strip()
            if v == "0":
                imported[k] = True
            elif v:
                infector[k] = int(v) - 1
    if mode == NETWORK:
        if edges_path is None:
            edges_path = default_edges_path(path)
        contacts = read_edges(edges_path, n)
    else:
        contacts = Contacts.mass_action(n)
    return EpidemicRecord(t, latent, infectious, imported, contacts, T, infector=infector,
                          extinct=meta.get("extinct", "0") == "1")


# estimates

def estimate_to_text(est: StepEstimate, alpha: float = 0.05) -> str:
    band = confidence_band(est, alpha)
    if est.kind == SURVIVAL:
        header, pre = ["tau", "survival", "var", "lo95", "hi95"], f"#kind={SURVIVAL}\n"
    else:
        header, pre = ["tau", "cumhaz", "var", "lo95", "hi95"], ""
    rows = [[fmt(a), fmt(b), fmt(c), fmt(d), fmt(e)]
            for a, b, c, d, e in zip(est.times, est.values, est.variance, band.lower, band.upper)]
    return _rows_to_text(header, rows, pre)


def read_estimate(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    cols: dict[str, list[float]] = {f: [] for f in reader.fieldnames or []}
    for row in reader:
        for k, v in row.items():
            cols[k].append(_parse_float(v))
    return {k: np.asarray(v) for k, v in cols.items()}


def weights_to_text(weights) -> str:
    rows = [[int(j) + 1, int(i) + 1, fmt(t), fmt(p)]
            for j, i, t, p in zip(weights.j, weights.i, weights.tau, weights.p)]
    return _rows_to_text(["j", "i", "tau", "p"], rows)


def iteration_log_to_text(l1_log: list[float]) -> str:
    return _rows_to_text(["iter", "l1diff"], [[k + 1, fmt(v)] for k, v in enumerate(l1_log)])


def hazard_grid_to_text(tau, hazard) -> str:
    return _rows_to_text(["tau", "hazard"], [[fmt(a), fmt(b)] for a, b in zip(tau, hazard)])


def table_to_text(header: list[str], rows: Iterable[Iterable]) -> str:
    return _rows_to_text(header, [[fmt(x) if isinstance(x, (float, np.floating)) else x
                                   for x in row] for row in rows])


def manifest_to_text(entries: Mapping[str, object]) -> str:
    return "".join(f"{k}={entries[k]}\n" for k in sorted(entries))


# households

def read_households(path) -> list[tuple[str, list[tuple[str, float]]]]:
    """Households in file order as ``(household_id, [(person_id, onset_day), ...])``."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != HOUSEHOLD_COLUMNS:
        raise RecordError(f"{path}: expected columns {','.join(HOUSEHOLD_COLUMNS)}")
    out: dict[str, list[tuple[str, float]]] = {}
    for row in reader:
        onset = _parse_float(row["onset_day"])
        if np.isfinite(onset) and onset != round(onset):
            raise RecordError(f"{path}: onset day must be whole, got {row['onset_day']!r}")
        out.setdefault(row["household_id"].strip(), []).append((row["person_id"].strip(), onset))
    return list(out.items())


def households_to_text(households) -> str:
    rows = [[hid, pid, fmt(onset)] for hid, members in households for pid, onset in members]
    return _rows_to_text(HOUSEHOLD_COLUMNS, rows)
