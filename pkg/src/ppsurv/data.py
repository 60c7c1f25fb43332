"""Survival datasets, interval partitions and risk tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import ParseError, PartitionError, SchemaError, SummaryError

ROLES = ("current", "historical")


@dataclass(frozen=True)
class StratumMap:
    """Dense 1..S coding of external stratum labels, fixed once per session."""

    labels: tuple

    @classmethod
    def from_labels(cls, *label_lists) -> "StratumMap":
        seen = set()
        for labels in label_lists:
            seen.update(str(v) for v in labels)
        return cls(tuple(sorted(seen, key=_label_key)))

    @property
    def n_strata(self) -> int:
        return len(self.labels)

    def encode(self, labels) -> np.ndarray:
        lookup = {lab: i + 1 for i, lab in enumerate(self.labels)}
        out = np.empty(len(labels), dtype=np.int64)
        for i, v in enumerate(labels):
            try:
                out[i] = lookup[str(v)]
            except KeyError:
                raise ParseError(f"row {i}: stratum label {v!r} not in session map {self.labels}", row=i) from None
        return out

    def decode(self, s: int) -> str:
        return self.labels[s - 1]

    def to_dict(self) -> dict:
        return {lab: i + 1 for i, lab in enumerate(self.labels)}


def _label_key(v: str):
    try:
        return (0, float(v), v)
    except ValueError:
        return (1, 0.0, v)


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored survival data; column 0 of ``covariates`` is the treatment indicator.

    ``strata`` holds dense labels 1..S.
    """

    times: np.ndarray
    events: np.ndarray
    covariates: np.ndarray
    strata: np.ndarray
    role: str = "current"
    covariate_names: tuple = ()
    stratum_map: StratumMap | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        n = times.shape[0]
        events = np.asarray(self.events).reshape(-1)
        X = np.asarray(self.covariates, dtype=float)
        if X.ndim == 1:
            X = X.reshape(n, -1) if n else X.reshape(0, 1)
        strata = np.asarray(self.strata).reshape(-1) if len(self.strata) else np.zeros(0, dtype=np.int64)
        if events.shape[0] != n or X.shape[0] != n or strata.shape[0] != n:
            raise SchemaError("times, events, covariates and strata must have the same number of rows")
        if X.shape[1] < 1:
            raise SchemaError("at least one covariate column (the treatment indicator) is required")
        if not np.all(np.isfinite(times)) or np.any(times < 0):
            raise ParseError("times must be finite and nonnegative")
        if not np.all(np.isin(events, (0, 1))):
            raise ParseError("events must be coded 0/1")
        if not np.all(np.isfinite(X)):
            raise ParseError("covariates must be finite")
        strata = strata.astype(np.int64)
        if n and strata.min() < 1:
            raise SchemaError("stratum labels must be dense integers starting at 1")
        if self.role not in ROLES:
            raise SchemaError(f"role must be one of {ROLES}, got {self.role!r}")
        names = tuple(self.covariate_names) or tuple(f"x{p + 1}" for p in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise SchemaError("covariate_names length does not match covariate columns")
        for arr in (times, events, X, strata):
            arr.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events.astype(np.int64))
        object.__setattr__(self, "covariates", X)
        object.__setattr__(self, "strata", strata)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[1]

    @property
    def treatment(self) -> np.ndarray:
        return self.covariates[:, 0]

    def subset(self, mask) -> "SurvivalDataset":
        return SurvivalDataset(self.times[mask], self.events[mask], self.covariates[mask],
                               self.strata[mask], self.role, self.covariate_names, self.stratum_map)

    def with_role(self, role: str) -> "SurvivalDataset":
        return SurvivalDataset(self.times, self.events, self.covariates, self.strata, role,
                               self.covariate_names, self.stratum_map)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"time": self.times, "event": self.events})
        for p, name in enumerate(self.covariate_names):
            df[name] = self.covariates[:, p]
        if self.stratum_map is not None:
            df["stratum"] = [self.stratum_map.decode(s) for s in self.strata]
        else:
            df["stratum"] = self.strata
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)


def check_compatible(datasets: Sequence[SurvivalDataset]) -> int:
    """Return the common covariate count, raising if the datasets disagree."""
    P = None
    names = None
    for d in datasets:
        if P is None:
            P, names = d.n_covariates, d.covariate_names
        elif d.n_covariates != P:
            raise SchemaError(f"covariate column counts differ: {P} vs {d.n_covariates}")
        elif d.covariate_names != names and not all(n.startswith("x") for n in names + d.covariate_names):
            raise SchemaError(f"covariate column order differs: {names} vs {d.covariate_names}")
    if P is None:
        raise SchemaError("no datasets supplied")
    return P


# ---------------------------------------------------------------------------
# ingestion

DEFAULT_SCHEMA = {"time": "time", "event": "event", "stratum": "stratum", "covariates": ["trt"]}


def read_rows(path, schema: Mapping, select: Mapping | None = None) -> list[dict]:
    """Read raw string rows, checking that every mapped column is present."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema["time"], schema["event"], schema["stratum"], *schema["covariates"]]
        if select:
            needed += list(select)
        for col in needed:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        rows = list(reader)
    if select:
        rows = [r for r in rows if all(str(r[c]).strip() == str(v) for c, v in select.items())]
    return rows


def load_dataset(path, schema: Mapping | None = None, role: str = "current",
                 select: Mapping | None = None, stratum_map: StratumMap | None = None) -> SurvivalDataset:
    """Load a comma-separated file into a validated :class:`SurvivalDataset`.

    ``schema`` maps logical names ``time``, ``event``, ``stratum`` to column
    names and ``covariates`` to an ordered list of covariate columns (the first
    is the treatment indicator).  ``select`` keeps only rows whose columns equal
    the given values, e.g. ``{"study": 1684}``.  Rows with missing or malformed
    values raise :class:`ParseError` carrying the (0-based) data row index.
    """
    schema = {**DEFAULT_SCHEMA, **(schema or {})}
    rows = read_rows(path, schema, select)
    n = len(rows)
    P = len(schema["covariates"])
    times = np.empty(n)
    events = np.empty(n, dtype=np.int64)
    X = np.empty((n, P))
    labels = []
    for i, row in enumerate(rows):
        times[i] = _parse_float(row, schema["time"], i)
        if not math.isfinite(times[i]) or times[i] < 0:
            raise ParseError(f"row {i}: time {row[schema['time']]!r} is not a nonnegative number", row=i)
        ev = _parse_float(row, schema["event"], i)
        if ev not in (0.0, 1.0):
            raise ParseError(f"row {i}: event {row[schema['event']]!r} is not coded 0/1", row=i)
        events[i] = int(ev)
        for p, col in enumerate(schema["covariates"]):
            X[i, p] = _parse_float(row, col, i)
        lab = (row[schema["stratum"]] or "").strip()
        if lab == "":
            raise ParseError(f"row {i}: missing value in column {schema['stratum']!r}", row=i)
        labels.append(lab)
    if stratum_map is None:
        stratum_map = StratumMap.from_labels(labels)
    strata = stratum_map.encode(labels)
    return SurvivalDataset(times, events, X, strata, role, tuple(schema["covariates"]), stratum_map)


def _parse_float(row, col, i) -> float:
    raw = (row[col] or "").strip()
    if raw == "":
        raise ParseError(f"row {i}: missing value in column {col!r}", row=i)
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"row {i}: column {col!r} value {raw!r} is not numeric", row=i) from None


MELANOMA_SCHEMA = {"time": "failtime", "event": "rfscens", "stratum": "stratum", "covariates": ["trt"]}


def melanoma_path() -> Path:
    return Path(str(resources.files("ppsurv") / "data" / "melanoma.csv"))


def load_melanoma() -> tuple[SurvivalDataset, SurvivalDataset]:
    """Return (historical E1684, current E1690) from the bundled fixture."""
    path = melanoma_path()
    smap = StratumMap(("1", "2"))
    hist = load_dataset(path, MELANOMA_SCHEMA, "historical", {"study": 1684}, smap)
    cur = load_dataset(path, MELANOMA_SCHEMA, "current", {"study": 1690}, smap)
    return hist, cur


# ---------------------------------------------------------------------------
# partitions

@dataclass(frozen=True, eq=False)
class IntervalPartition:
    """Per-stratum interior change points; intervals are (t_{k-1}, t_k] with t_0 = 0, t_K = inf."""

    cuts: tuple

    def __post_init__(self):
        cuts = []
        for s, c in enumerate(self.cuts):
            c = np.asarray(c, dtype=float).reshape(-1)
            if np.any(~np.isfinite(c)) or np.any(c <= 0) or np.any(np.diff(c) <= 0):
                raise PartitionError(f"stratum {s + 1}: change points must be positive, finite and strictly increasing")
            c.setflags(write=False)
            cuts.append(c)
        if not cuts:
            raise PartitionError("a partition needs at least one stratum")
        object.__setattr__(self, "cuts", tuple(cuts))

    @classmethod
    def single(cls, n_strata: int = 1) -> "IntervalPartition":
        return cls(tuple(np.zeros(0) for _ in range(n_strata)))

    @property
    def n_strata(self) -> int:
        return len(self.cuts)

    @property
    def n_intervals(self) -> tuple:
        return tuple(len(c) + 1 for c in self.cuts)

    @property
    def n_cells(self) -> int:
        return sum(self.n_intervals)

    @property
    def offsets(self) -> np.ndarray:
        """Start of each stratum's block in the flattened (stratum, interval) cell index."""
        return np.concatenate([[0], np.cumsum(self.n_intervals)])

    def boundaries(self, s: int) -> np.ndarray:
        """Boundaries 0 = t_0 < ... < t_K = inf for 1-based stratum ``s``."""
        return np.concatenate([[0.0], self.cuts[s - 1], [np.inf]])

    def split_cells(self, flat) -> list:
        """Split a flattened cell vector (or matrix with cells in the last axis) by stratum."""
        flat = np.asarray(flat)
        off = self.offsets
        return [flat[..., off[s]:off[s + 1]] for s in range(self.n_strata)]

    def to_dict(self) -> dict:
        return {"cuts": [c.tolist() for c in self.cuts]}


def _n_strata(datasets) -> int:
    return max((int(d.strata.max()) for d in datasets if d.n), default=0)


def default_partition(datasets: Sequence[SurvivalDataset], n_intervals) -> IntervalPartition:
    """Change points at the k/K quantiles of the pooled event times in each stratum.

    Quantiles use the inclusive (linear, type 7) convention.  A change point
    that collides with its predecessor because of tied event times is moved to
    the midpoint between the next two distinct event times.
    """
    n_intervals = np.atleast_1d(np.asarray(n_intervals, dtype=int))
    S = max(_n_strata(datasets), len(n_intervals))
    if len(n_intervals) == 1 and S > 1:
        n_intervals = np.repeat(n_intervals, S)
    if len(n_intervals) != S:
        raise PartitionError(f"got {len(n_intervals)} interval counts for {S} strata")
    cuts = []
    for s in range(1, S + 1):
        K = int(n_intervals[s - 1])
        if K < 1:
            raise PartitionError(f"stratum {s}: number of intervals must be >= 1")
        ev = np.concatenate([d.times[(d.strata == s) & (d.events == 1)] for d in datasets])
        if K == 1:
            cuts.append(np.zeros(0))
            continue
        if ev.size < K:
            raise PartitionError(f"stratum {s}: {ev.size} events cannot fill {K} intervals; reduce the interval count")
        cuts.append(_quantile_cuts(np.sort(ev), K, s))
    return IntervalPartition(tuple(cuts))


def _quantile_cuts(ev: np.ndarray, K: int, s: int) -> np.ndarray:
    q = np.quantile(ev, np.arange(1, K) / K)
    distinct = np.unique(ev)
    distinct = distinct[distinct > 0]
    out = []
    prev = 0.0
    for c in q:
        if c <= prev:
            above = distinct[distinct > prev]
            if above.size < 2:
                raise PartitionError(f"stratum {s}: too many tied event times for {K} intervals; reduce the interval count")
            c = 0.5 * (above[0] + above[1])
        out.append(c)
        prev = c
    if out and out[-1] >= distinct[-1]:
        raise PartitionError(f"stratum {s}: last interval would contain no events; reduce the interval count")
    return np.asarray(out)


# ---------------------------------------------------------------------------
# risk tables

@dataclass(frozen=True, eq=False)
class RiskTable:
    """Per-subject exposure and interval-event indicators over flattened cells.

    ``exposure[i, c]`` is r_ik for the cell c = (stratum of i, k) and zero for
    cells of other strata; ``interval_events`` likewise holds nu_ik.
    """

    dataset: SurvivalDataset
    partition: IntervalPartition
    exposure: np.ndarray
    interval_events: np.ndarray
    strata_index: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dataset.n

    def cell_events(self) -> np.ndarray:
        return self.interval_events.sum(axis=0)

    def event_covariate_sum(self) -> np.ndarray:
        return self.dataset.covariates.T @ self.dataset.events

    def compress(self) -> "CompressedRisk":
        return CompressedRisk.from_table(self)

    def per_subject(self, s: int) -> tuple[np.ndarray, np.ndarray]:
        """(r, nu) restricted to stratum ``s`` subjects and that stratum's intervals."""
        off = self.partition.offsets
        idx = self.strata_index.get(s, np.zeros(0, dtype=int))
        cols = slice(off[s - 1], off[s])
        return self.exposure[idx, cols], self.interval_events[idx, cols]


def build_risk_table(dataset: SurvivalDataset, partition: IntervalPartition) -> RiskTable:
    n, C = dataset.n, partition.n_cells
    if n and dataset.strata.max() > partition.n_strata:
        raise PartitionError(f"dataset has stratum {dataset.strata.max()} but the partition covers {partition.n_strata}")
    exposure = np.zeros((n, C))
    nu = np.zeros((n, C), dtype=np.int64)
    off = partition.offsets
    index = {}
    for s in range(1, partition.n_strata + 1):
        idx = np.flatnonzero(dataset.strata == s)
        index[s] = idx
        if idx.size == 0:
            continue
        b = partition.boundaries(s)
        y = dataset.times[idx]
        r = np.clip(np.minimum(y[:, None], b[None, 1:]) - b[None, :-1], 0.0, None)
        exposure[np.ix_(idx, np.arange(off[s - 1], off[s]))] = r
        k = np.searchsorted(partition.cuts[s - 1], y, side="left")
        ev = dataset.events[idx] == 1
        nu[idx[ev], off[s - 1] + k[ev]] = 1
    exposure.setflags(write=False)
    nu.setflags(write=False)
    return RiskTable(dataset, partition, exposure, nu, index)


@dataclass(frozen=True, eq=False)
class CompressedRisk:
    """Sufficient statistics of a risk table grouped by distinct covariate rows.

    patterns: U x P distinct covariate rows
    exposure: U x C summed exposure of each pattern in each cell
    events:   C events per cell
    event_x:  P vector, sum of nu_i x_i
    """

    patterns: np.ndarray
    exposure: np.ndarray
    events: np.ndarray
    event_x: np.ndarray

    @classmethod
    def from_table(cls, rt: RiskTable) -> "CompressedRisk":
        X = rt.dataset.covariates
        P = X.shape[1]
        if rt.n == 0:
            return cls(np.zeros((0, P)), np.zeros((0, rt.partition.n_cells)),
                       np.zeros(rt.partition.n_cells), np.zeros(P))
        patterns, inverse = np.unique(X, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        E = np.zeros((patterns.shape[0], rt.partition.n_cells))
        np.add.at(E, inverse, rt.exposure)
        return cls(patterns, E, rt.cell_events().astype(float), rt.event_covariate_sum().astype(float))

    @classmethod
    def empty(cls, P: int, C: int) -> "CompressedRisk":
        return cls(np.zeros((0, P)), np.zeros((0, C)), np.zeros(C), np.zeros(P))

    @staticmethod
    def stack(parts: Sequence["CompressedRisk"], weights: Sequence[float]) -> "CompressedRisk":
        """Weighted combination: exposures, events and event sums scaled by the weights."""
        w = [float(x) for x in weights]
        patterns = np.vstack([p.patterns for p in parts])
        exposure = np.vstack([wi * p.exposure for p, wi in zip(parts, w)])
        events = sum(wi * p.events for p, wi in zip(parts, w))
        event_x = sum(wi * p.event_x for p, wi in zip(parts, w))
        return CompressedRisk(patterns, exposure, np.asarray(events, dtype=float), np.asarray(event_x, dtype=float))


# ---------------------------------------------------------------------------
# summaries

def summarize(dataset: SurvivalDataset) -> pd.DataFrame:
    """Sample size, event count and total risk time by treatment x stratum."""
    if dataset.n == 0:
        raise SummaryError("cannot summarize an empty dataset")
    strata = dataset.strata
    if dataset.stratum_map is not None:
        strata = [dataset.stratum_map.decode(s) for s in strata]
    df = pd.DataFrame({"treatment": dataset.treatment, "stratum": strata,
                       "event": dataset.events, "time": dataset.times})
    out = df.groupby(["treatment", "stratum"], sort=True).agg(
        n=("event", "size"), events=("event", "sum"), risk_time=("time", "sum")).reset_index()
    return out
