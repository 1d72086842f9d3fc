"""Clustered multivariate failure-time data.

A dataset holds n clusters, each with up to J members (failure types).
Member j of cluster i carries an observed time X_ij = min(T_ij, C_ij), a
status flag Delta_ij = 1{T_ij <= C_ij}, a scalar exposure covariate V_ij
and a p-vector Z_ij. Clusters missing a member are materialized with
X = 0, Delta = 0, so those slots are never at risk at positive times and
contribute no events.

Construction sorts clusters by id and members by index, so every
downstream estimate is invariant (bit-identical) under permutations of
the input rows.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

__all__ = [
    "SubjectRecord",
    "Dataset",
    "load_dataset",
    "risk_set",
    "event_times",
    "DEFAULT_SCHEMA",
]


@dataclass(frozen=True)
class SubjectRecord:
    """One observed (cluster, member) record."""

    cluster_id: int
    member: int
    time: float
    status: int
    v: float
    z: tuple

    def __post_init__(self):
        if self.cluster_id < 0:
            raise DataError(f"cluster_id must be >= 0, got {self.cluster_id}")
        if self.member < 1:
            raise DataError(f"member index must be >= 1, got {self.member}")
        if not np.isfinite(self.time) or self.time < 0:
            raise DataError(
                f"time must be finite and >= 0, got {self.time!r} "
                f"(cluster {self.cluster_id}, member {self.member})"
            )
        if self.status not in (0, 1):
            raise DataError(
                f"status must be 0 or 1, got {self.status!r} "
                f"(cluster {self.cluster_id}, member {self.member})"
            )
        if not all(np.isfinite(self.z)) or not np.isfinite(self.v):
            raise DataError(
                f"covariates must be finite (cluster {self.cluster_id}, "
                f"member {self.member})"
            )


class _MemberView:
    """Present records of one member type, with cached risk-set orderings.

    Arrays are aligned: index l runs over the present records of this
    member, sorted by cluster id. ``desc`` sorts those records by
    descending time (stable), so the risk set at any time t is a prefix
    of the ``desc`` ordering.
    """

    def __init__(self, cluster_rows, cluster_ids, time, status, v, z):
        self.cluster_rows = cluster_rows  # row into the (n, J) cluster axis
        self.cluster_ids = cluster_ids
        self.time = time
        self.status = status.astype(bool)
        self.v = v
        self.z = z
        self.n_present = time.shape[0]
        # stable sort by -time keeps cluster order within ties deterministic
        self.desc = np.argsort(-time, kind="stable")
        self.time_desc = time[self.desc]
        # events ordered by (time, cluster_id); cluster order is already
        # ascending, so a stable sort on time alone suffices
        ev = np.flatnonzero(self.status)
        self.event_order = ev[np.argsort(time[ev], kind="stable")]

    def risk_count(self, t):
        """Number of present records with time >= t (prefix length in desc)."""
        return int(np.searchsorted(-self.time_desc, -t, side="right"))

    def events_through(self, tau):
        """Indices (member-local) of events with time <= tau, ordered."""
        if tau is None:
            return self.event_order
        k = np.searchsorted(self.time[self.event_order], tau, side="right")
        return self.event_order[:k]


class Dataset:
    """Immutable container for clustered failure-time data.

    Attributes
    ----------
    n : int
        Number of clusters.
    J : int
        Largest member index present.
    p : int
        Covariate dimension.
    cluster_ids : ndarray (n,)
        Sorted distinct cluster identifiers.
    time, status, v, present : ndarray (n, J)
        Per-slot observed time, event indicator, exposure, presence.
        Absent slots have time 0, status 0.
    z : ndarray (n, J, p)
    """

    def __init__(self, cluster_ids, time, status, v, z, present):
        self.cluster_ids = np.asarray(cluster_ids)
        self.time = np.asarray(time, dtype=float)
        self.status = np.asarray(status, dtype=bool)
        self.v = np.asarray(v, dtype=float)
        self.z = np.asarray(z, dtype=float)
        self.present = np.asarray(present, dtype=bool)
        self.n, self.J = self.time.shape
        self.p = self.z.shape[2]
        self._members: dict[int, _MemberView] = {}
        if self.n == 0:
            raise DataError("dataset has no clusters")
        masked = np.where(self.present, self.time, -np.inf)
        self.max_time = float(masked.max()) if self.present.any() else 0.0

    @classmethod
    def from_records(cls, records) -> "Dataset":
        records = list(records)
        if not records:
            raise DataError("no records")
        p = len(records[0].z)
        seen = set()
        for r in records:
            if len(r.z) != p:
                raise DataError(
                    f"inconsistent covariate dimension: expected {p}, got "
                    f"{len(r.z)} (cluster {r.cluster_id}, member {r.member})"
                )
            key = (r.cluster_id, r.member)
            if key in seen:
                raise DataError(
                    f"duplicate record for cluster {r.cluster_id}, member {r.member}"
                )
            seen.add(key)
        ids = np.array(sorted({r.cluster_id for r in records}))
        row_of = {cid: i for i, cid in enumerate(ids)}
        n = len(ids)
        J = max(r.member for r in records)
        time = np.zeros((n, J))
        status = np.zeros((n, J), dtype=bool)
        v = np.zeros((n, J))
        z = np.zeros((n, J, p))
        present = np.zeros((n, J), dtype=bool)
        for r in records:
            i, j = row_of[r.cluster_id], r.member - 1
            time[i, j] = r.time
            status[i, j] = bool(r.status)
            v[i, j] = r.v
            z[i, j] = r.z
            present[i, j] = True
        return cls(ids, time, status, v, z, present)

    @classmethod
    def from_arrays(cls, time, status, v, z, cluster_ids=None, present=None):
        """Build directly from (n, J[, p]) arrays; all slots present by default."""
        time = np.asarray(time, dtype=float)
        n, J = time.shape
        if cluster_ids is None:
            cluster_ids = np.arange(n)
        if present is None:
            present = np.ones((n, J), dtype=bool)
        z = np.asarray(z, dtype=float)
        if z.ndim == 2:
            z = z[:, :, None]
        return cls(cluster_ids, time, status, v, z, present)

    def member(self, j: int) -> _MemberView:
        """View of member type j (1-based). Present records only."""
        if not 1 <= j <= self.J:
            raise DataError(f"member index {j} out of range 1..{self.J}")
        if j not in self._members:
            col = j - 1
            rows = np.flatnonzero(self.present[:, col])
            self._members[j] = _MemberView(
                cluster_rows=rows,
                cluster_ids=self.cluster_ids[rows],
                time=self.time[rows, col],
                status=self.status[rows, col],
                v=self.v[rows, col],
                z=self.z[rows, col, :],
            )
        return self._members[j]

    @property
    def v_range(self) -> tuple[float, float]:
        vals = self.v[self.present]
        return float(vals.min()), float(vals.max())

    def records(self):
        """Iterate SubjectRecords in (cluster_id, member) order."""
        for i, cid in enumerate(self.cluster_ids):
            for j in range(self.J):
                if self.present[i, j]:
                    yield SubjectRecord(
                        cluster_id=int(cid),
                        member=j + 1,
                        time=float(self.time[i, j]),
                        status=int(self.status[i, j]),
                        v=float(self.v[i, j]),
                        z=tuple(float(x) for x in self.z[i, j]),
                    )


def risk_set(ds: Dataset, j: int, t: float):
    """Cluster ids at risk for member type j at time t, ascending.

    A present record is at risk at t when its observed time X_ij >= t.
    Absent slots are never at risk.
    """
    m = ds.member(j)
    ids = m.cluster_ids[m.time >= t]
    return [int(c) for c in np.sort(ids)]


def event_times(ds: Dataset, j: int, tau: float | None = None):
    """Observed events (time, cluster_id) of type j through tau, ascending.

    Ordered by time, ties broken by cluster id. ``tau=None`` means no
    upper limit.
    """
    m = ds.member(j)
    ev = m.events_through(tau)
    return [(float(m.time[e]), int(m.cluster_ids[e])) for e in ev]


DEFAULT_SCHEMA = {
    "cluster": "cluster",
    "member": "member",
    "time": "time",
    "status": "status",
    "v": "v",
    # "z": list of covariate column names; default autodetects z1, z2, ...
}


def _parse_number(text, row_num, col, path):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise DataError(
            f"{path}: row {row_num}: column {col!r} is not numeric: {text!r}"
        ) from None


def load_dataset(path, schema: dict | None = None) -> Dataset:
    """Read a CSV of subject records into a Dataset.

    Expected columns (renameable through ``schema``): cluster, member,
    time, status, v, and covariate columns z1..zp. ``schema["z"]`` may
    list covariate column names explicitly; otherwise columns named
    z1, z2, ... are used in numeric order.

    Raises DataError naming the offending row/column for malformed input.
    """
    sch = dict(DEFAULT_SCHEMA)
    if schema:
        sch.update(schema)
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        cols = list(reader.fieldnames)
        for key in ("cluster", "member", "time", "status", "v"):
            if sch[key] not in cols:
                raise DataError(f"{path}: missing required column {sch[key]!r}")
        if "z" in sch and sch["z"]:
            zcols = list(sch["z"])
            for c in zcols:
                if c not in cols:
                    raise DataError(f"{path}: missing covariate column {c!r}")
        else:
            numbered = []
            for c in cols:
                if c.startswith("z") and c[1:].isdigit():
                    numbered.append((int(c[1:]), c))
            zcols = [c for _, c in sorted(numbered)]
            if not zcols:
                raise DataError(
                    f"{path}: no covariate columns found (expected z1, z2, ...)"
                )
        for row_num, row in enumerate(reader, start=2):
            cid = _parse_number(row.get(sch["cluster"]), row_num, sch["cluster"], path)
            mem = _parse_number(row.get(sch["member"]), row_num, sch["member"], path)
            if cid != int(cid):
                raise DataError(f"{path}: row {row_num}: cluster id must be an integer")
            if mem != int(mem):
                raise DataError(f"{path}: row {row_num}: member must be an integer")
            status = _parse_number(row.get(sch["status"]), row_num, sch["status"], path)
            if status not in (0.0, 1.0):
                raise DataError(
                    f"{path}: row {row_num}: status must be 0 or 1, got {status!r}"
                )
            try:
                rec = SubjectRecord(
                    cluster_id=int(cid),
                    member=int(mem),
                    time=_parse_number(row.get(sch["time"]), row_num, sch["time"], path),
                    status=int(status),
                    v=_parse_number(row.get(sch["v"]), row_num, sch["v"], path),
                    z=tuple(
                        _parse_number(row.get(c), row_num, c, path) for c in zcols
                    ),
                )
            except DataError as e:
                raise DataError(f"{path}: row {row_num}: {e}") from None
            records.append(rec)
    if not records:
        raise DataError(f"{path}: no data rows")
    return Dataset.from_records(records)


def save_dataset(ds: Dataset, path):
    """Write a Dataset to CSV in the default schema (present slots only)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["cluster", "member", "time", "status", "v"]
            + [f"z{k + 1}" for k in range(ds.p)]
        )
        for r in ds.records():
            writer.writerow(
                [r.cluster_id, r.member, repr(r.time), r.status, repr(r.v)]
                + [repr(val) for val in r.z]
            )
