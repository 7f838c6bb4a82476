"""Interval grids, visit aggregation and condition-persistence fill.

Per-patient helpers (:func:`aggregate`, :func:`apply_persistence`) wrap a
columnar cohort path (:class:`VisitTable`, :func:`aggregate_table`,
:func:`fill_array`) that operates on ``(patients, rows, intervals)`` arrays.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .catalog import FeatureCatalog, PersistenceMode

__all__ = [
    "TimelineError",
    "Granularity",
    "IntervalGrid",
    "VisitRecord",
    "VisitTable",
    "ActivityMatrix",
    "CohortActivity",
    "parse_date",
    "convert_timeout",
    "aggregate",
    "aggregate_table",
    "apply_persistence",
    "fill_array",
    "read_visits",
    "write_visits",
]


class TimelineError(ValueError):
    """Raised for unparseable visits or invalid matrix operations."""


class Granularity(str, Enum):
    QUARTER = "Quarter"
    HALF_YEAR = "HalfYear"

    @property
    def months(self) -> int:
        return 3 if self is Granularity.QUARTER else 6

    @property
    def prefix(self) -> str:
        return "Q" if self is Granularity.QUARTER else "H"

    @classmethod
    def parse(cls, text: "str | Granularity") -> "Granularity":
        if isinstance(text, Granularity):
            return text
        key = str(text).replace("-", "").replace("_", "").replace(" ", "").lower()
        aliases = {"quarter": cls.QUARTER, "q": cls.QUARTER, "quarterly": cls.QUARTER,
                   "halfyear": cls.HALF_YEAR, "h": cls.HALF_YEAR, "half": cls.HALF_YEAR}
        if key not in aliases:
            raise TimelineError(f"unknown granularity {text!r}")
        return aliases[key]


def parse_date(value: object) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").item()
    try:
        return dt.date.fromisoformat(str(value).strip()[:10])
    except ValueError:
        raise TimelineError(f"unparseable visit date {value!r}") from None


def _add_months(day: dt.date, months: int) -> dt.date:
    total = day.year * 12 + (day.month - 1) + months
    return dt.date(total // 12, total % 12 + 1, 1)


@dataclass(frozen=True)
class IntervalGrid:
    """Calendar intervals tiling ``[window_start, window_end]`` (inclusive)."""

    granularity: Granularity = Granularity.HALF_YEAR
    window_start: dt.date = dt.date(2016, 1, 1)
    window_end: dt.date = dt.date(2016, 12, 31)

    def __post_init__(self) -> None:
        object.__setattr__(self, "granularity", Granularity.parse(self.granularity))
        object.__setattr__(self, "window_start", parse_date(self.window_start))
        object.__setattr__(self, "window_end", parse_date(self.window_end))
        if self.window_start.day != 1:
            raise TimelineError("window must start on the first day of a month")
        step = self.granularity.months
        cur = self.window_start
        bounds = [cur]
        while cur <= self.window_end:
            cur = _add_months(cur, step)
            bounds.append(cur)
            if len(bounds) > 1000:
                raise TimelineError("window too long")
        if bounds[-1] - dt.timedelta(days=1) != self.window_end:
            raise TimelineError("intervals do not tile the window exactly")
        object.__setattr__(self, "_bounds", tuple(bounds))

    @classmethod
    def year(cls, granularity: "Granularity | str", year: int = 2016) -> "IntervalGrid":
        return cls(Granularity.parse(granularity), dt.date(year, 1, 1), dt.date(year, 12, 31))

    @property
    def interval_count(self) -> int:
        return len(self._bounds) - 1

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(f"{self.granularity.prefix}{i + 1}" for i in range(self.interval_count))

    def interval_bounds(self, index: int) -> tuple[dt.date, dt.date]:
        return self._bounds[index], self._bounds[index + 1] - dt.timedelta(days=1)

    @property
    def boundary_ordinals(self) -> np.ndarray:
        return np.array([d.toordinal() for d in self._bounds], dtype=np.int64)

    def interval_index(self, day: object) -> int | None:
        """Index of the interval containing ``day`` or None outside the window."""
        o = parse_date(day).toordinal()
        idx = int(np.searchsorted(self.boundary_ordinals, o, side="right")) - 1
        return idx if 0 <= idx < self.interval_count else None

    def indices(self, ordinals: np.ndarray) -> np.ndarray:
        """Vectorized interval index; -1 marks days outside the window."""
        idx = np.searchsorted(self.boundary_ordinals, ordinals, side="right") - 1
        idx[(idx < 0) | (idx >= self.interval_count)] = -1
        return idx


def convert_timeout(timeout_quarters: int, granularity: "Granularity | str") -> int:
    """Express a timeout given in quarters as a number of grid intervals."""
    t = int(timeout_quarters)
    if t != timeout_quarters or t < 1:
        raise TimelineError(f"timeout must be a positive integer, got {timeout_quarters!r}")
    if Granularity.parse(granularity) is Granularity.QUARTER:
        return t
    # round half up, floor 1
    return max(1, (t + 1) // 2)


@dataclass(frozen=True)
class VisitRecord:
    patient_id: str
    visit_date: dt.date
    diagnosis_codes: tuple[str, ...] = ()
    stop_codes: tuple[str, ...] = ()
    visn: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "patient_id", str(self.patient_id))
        object.__setattr__(self, "visit_date", parse_date(self.visit_date))
        object.__setattr__(self, "diagnosis_codes", tuple(self.diagnosis_codes))
        object.__setattr__(self, "stop_codes", tuple(self.stop_codes))


@dataclass
class VisitTable:
    """Columnar visit store.

    ``visit_*`` arrays have one entry per visit; ``dx_*`` / ``stop_*`` arrays
    have one entry per code occurrence and point back at their visit.
    """

    patient_ids: np.ndarray
    visit_patient: np.ndarray
    visit_day: np.ndarray
    visit_visn: np.ndarray
    dx_visit: np.ndarray
    dx_code: np.ndarray
    stop_visit: np.ndarray
    stop_code: np.ndarray

    @property
    def n_visits(self) -> int:
        return int(self.visit_patient.size)

    @classmethod
    def from_records(cls, visits: Iterable[VisitRecord], patient_ids: Sequence[str] | None = None) -> "VisitTable":
        visits = list(visits)
        if patient_ids is None:
            patient_ids = list(dict.fromkeys(v.patient_id for v in visits))
        pid_index = {p: i for i, p in enumerate(patient_ids)}
        vp, vd, vv, dxv, dxc, sv, sc = [], [], [], [], [], [], []
        for i, v in enumerate(visits):
            if v.patient_id not in pid_index:
                raise TimelineError(f"visit for unlisted patient {v.patient_id!r}")
            vp.append(pid_index[v.patient_id])
            vd.append(v.visit_date.toordinal())
            vv.append("" if v.visn is None else str(v.visn))
            for c in v.diagnosis_codes:
                dxv.append(i)
                dxc.append(c)
            for c in v.stop_codes:
                sv.append(i)
                sc.append(c)
        return cls(
            patient_ids=np.asarray(list(patient_ids), dtype=object),
            visit_patient=np.asarray(vp, dtype=np.int64),
            visit_day=np.asarray(vd, dtype=np.int64),
            visit_visn=np.asarray(vv, dtype=object),
            dx_visit=np.asarray(dxv, dtype=np.int64),
            dx_code=np.asarray(dxc, dtype=object),
            stop_visit=np.asarray(sv, dtype=np.int64),
            stop_code=np.asarray(sc, dtype=object),
        )

    def records(self) -> Iterator[VisitRecord]:
        dx_order = np.argsort(self.dx_visit, kind="stable")
        st_order = np.argsort(self.stop_visit, kind="stable")
        dx_split = np.searchsorted(self.dx_visit[dx_order], np.arange(self.n_visits + 1))
        st_split = np.searchsorted(self.stop_visit[st_order], np.arange(self.n_visits + 1))
        for i in range(self.n_visits):
            dx = self.dx_code[dx_order[dx_split[i]:dx_split[i + 1]]]
            st = self.stop_code[st_order[st_split[i]:st_split[i + 1]]]
            visn = self.visit_visn[i]
            yield VisitRecord(
                patient_id=self.patient_ids[self.visit_patient[i]],
                visit_date=dt.date.fromordinal(int(self.visit_day[i])),
                diagnosis_codes=tuple(str(c) for c in dx),
                stop_codes=tuple(str(c) for c in st),
                visn=None if visn == "" else str(visn),
            )


@dataclass
class CohortActivity:
    """Activity for many patients: ``values[p, r, i]`` over ``catalog.matrix_rows``."""

    patient_ids: np.ndarray
    grid: IntervalGrid
    catalog: FeatureCatalog
    values: np.ndarray
    window_totals: np.ndarray
    filled: bool = False

    @property
    def n_temporal(self) -> int:
        return len(self.catalog.temporal)

    def temporal(self) -> np.ndarray:
        return self.values[:, : self.n_temporal, :]

    def counts(self) -> np.ndarray:
        return self.values[:, self.n_temporal:, :]

    def row(self, name: str) -> np.ndarray:
        """``(patients, intervals)`` slice for one feature."""
        names = [f.name for f in self.catalog.matrix_rows]
        return self.values[:, names.index(name), :]

    def patient(self, index: int) -> "ActivityMatrix":
        return ActivityMatrix(
            patient_id=str(self.patient_ids[index]),
            grid=self.grid,
            catalog=self.catalog,
            values=self.values[index].copy(),
            window_totals=self.window_totals[index].copy(),
            filled=self.filled,
        )


@dataclass
class ActivityMatrix:
    """Feature x interval grid for one patient.

    Rows follow ``catalog.matrix_rows``: binary temporal predictors first,
    then utilization counts. ``window_totals`` holds each count row's total
    over the whole window (distinct VISNs are not additive across intervals).
    """

    patient_id: str
    grid: IntervalGrid
    catalog: FeatureCatalog
    values: np.ndarray
    window_totals: np.ndarray
    filled: bool = False

    @property
    def row_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.catalog.matrix_rows)

    def row(self, name: str) -> np.ndarray:
        return self.values[self.row_names.index(name)]

    def cell(self, name: str, interval: int) -> int:
        return int(self.row(name)[interval])

    def window_total(self, name: str) -> int:
        idx = self.row_names.index(name) - len(self.catalog.temporal)
        if idx < 0:
            raise KeyError(f"{name!r} is not a count feature")
        return int(self.window_totals[idx])

    def as_dict(self) -> dict[str, tuple[int, ...]]:
        return {n: tuple(int(v) for v in r) for n, r in zip(self.row_names, self.values)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "interval", "value"])
        labels = self.grid.labels
        for name, row in zip(self.row_names, self.values):
            for lab, v in zip(labels, row):
                w.writerow([name, lab, int(v)])
        return buf.getvalue()


def _factorize(values: np.ndarray) -> tuple[list, np.ndarray]:
    """Sorted distinct values and integer codes; hashing beats sorting strings."""
    vals = values.tolist()
    uniq = sorted(set(vals))
    lookup = {u: i for i, u in enumerate(uniq)}
    return uniq, np.fromiter(map(lookup.__getitem__, vals), np.int64, len(vals))


def _code_rows(codes: np.ndarray, catalog: FeatureCatalog, stop: bool) -> tuple[np.ndarray, np.ndarray]:
    """Explode code occurrences into (occurrence, row) pairs via unique codes."""
    if codes.size == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    uniq, inv = _factorize(codes)
    per_code = [
        catalog.row_hits((), (c,)) if stop else catalog.row_hits((c,), ()) for c in uniq
    ]
    lens = np.array([len(h) for h in per_code], dtype=np.int64)
    flat = np.array([r for h in per_code for r in h], dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(lens)])
    n_hits = lens[inv]
    occ_of = np.repeat(np.arange(codes.size), n_hits)
    offsets = np.arange(n_hits.sum()) - np.repeat(np.cumsum(n_hits) - n_hits, n_hits)
    row_of = flat[starts[inv][occ_of] + offsets] if flat.size else np.zeros(0, np.int64)
    return occ_of, row_of


def aggregate_table(table: VisitTable, grid: IntervalGrid, catalog: FeatureCatalog) -> CohortActivity:
    """Raw activity for every patient in ``table``; visits outside the window are ignored."""
    rows = catalog.matrix_rows
    n, r, k = len(table.patient_ids), len(rows), grid.interval_count
    n_temp = len(catalog.temporal)
    counts = catalog.counts
    values = np.zeros((n, r, k), dtype=np.int64)
    totals = np.zeros((n, len(counts)), dtype=np.int64)
    visit_iv = grid.indices(table.visit_day)

    pairs = []
    for occ_visit, codes, stop in (
        (table.dx_visit, table.dx_code, False),
        (table.stop_visit, table.stop_code, True),
    ):
        occ, row = _code_rows(codes, catalog, stop)
        pairs.append(np.stack([occ_visit[occ], row], axis=1) if occ.size else np.zeros((0, 2), np.int64))
    vr = np.concatenate(pairs)
    if vr.size:
        vr = vr[visit_iv[vr[:, 0]] >= 0]
    # one hit per (visit, row), via a packed 1-D key
    if vr.size:
        key = np.unique(vr[:, 0] * r + vr[:, 1])
        vr = np.stack([key // r, key % r], axis=1)
    v, rr = vr[:, 0], vr[:, 1]
    p, iv = table.visit_patient[v], visit_iv[v]

    is_temp = rr < n_temp
    values[p[is_temp], rr[is_temp], iv[is_temp]] = 1

    kinds = np.array([f.count for f in counts], dtype=object)
    for c, kind in enumerate(kinds):
        row = n_temp + c
        if kind == "visn":
            keep = (visit_iv >= 0) & (table.visit_visn != "")
            if not keep.any():
                continue
            vp, vi = table.visit_patient[keep], visit_iv[keep]
            _, vcode = _factorize(table.visit_visn[keep])
            m = int(vcode.max()) + 1
            per_iv = np.unique((vp * k + vi) * m + vcode) // m
            np.add.at(values, (per_iv // k, row, per_iv % k), 1)
            per_win = np.unique(vp * m + vcode) // m
            np.add.at(totals, (per_win, c), 1)
            continue
        sel = rr == row
        if not sel.any():
            continue
        sp, si = p[sel], iv[sel]
        if kind == "days":
            days = table.visit_day[v[sel]]
            d0 = days.min()
            span = int(days.max() - d0) + 1
            key = np.unique((sp * k + si) * span + (days - d0))
            cell = key // span
            sp, si = cell // k, cell % k
        np.add.at(values, (sp, row, si), 1)
    for c, kind in enumerate(kinds):
        if kind != "visn":
            totals[:, c] = values[:, n_temp + c, :].sum(axis=1)
    return CohortActivity(table.patient_ids, grid, catalog, values, totals, filled=False)


def aggregate(visits: Sequence[VisitRecord], grid: IntervalGrid, catalog: FeatureCatalog,
              patient_id: str | None = None) -> ActivityMatrix:
    """Raw activity matrix for one patient's visits."""
    visits = list(visits)
    ids = {v.patient_id for v in visits}
    if len(ids) > 1:
        raise TimelineError("aggregate expects visits of a single patient")
    pid = ids.pop() if ids else (patient_id or "")
    table = VisitTable.from_records(visits, [pid])
    return aggregate_table(table, grid, catalog).patient(0)


def _policy_arrays(catalog: FeatureCatalog, grid: IntervalGrid) -> tuple[list[PersistenceMode], list[int]]:
    modes, tails = [], []
    for f in catalog.temporal:
        if f.policy is None:
            raise TimelineError(f"feature {f.name!r} has no persistence policy")
        modes.append(f.policy.mode)
        tails.append(
            convert_timeout(f.policy.timeout_quarters, grid.granularity)
            if f.policy.mode is PersistenceMode.RECURRENT_TIME_LIMITED
            else 0
        )
    return modes, tails


def fill_array(raw: np.ndarray, modes: Sequence[PersistenceMode], tails: Sequence[int]) -> np.ndarray:
    """Apply persistence rules to a binary ``(..., features, intervals)`` array."""
    raw = np.asarray(raw)
    out = raw.copy()
    modes = list(modes)
    for mode in set(modes):
        sel = np.array([m is mode for m in modes])
        block = raw[..., sel, :]
        if mode is PersistenceMode.CHRONIC_PERSISTENT:
            out[..., sel, :] = np.maximum.accumulate(block, axis=-1)
        elif mode is PersistenceMode.EVER_HISTORY:
            out[..., sel, :] = np.broadcast_to(block.max(axis=-1, keepdims=True), block.shape)
    tails = np.asarray(tails)
    for t in sorted({int(x) for x, m in zip(tails, modes) if m is PersistenceMode.RECURRENT_TIME_LIMITED}):
        sel = np.array([m is PersistenceMode.RECURRENT_TIME_LIMITED and x == t for m, x in zip(modes, tails)])
        block = raw[..., sel, :]
        acc = block.copy()
        for s in range(1, min(t, block.shape[-1] - 1) + 1):
            acc[..., s:] = np.maximum(acc[..., s:], block[..., :-s])
        out[..., sel, :] = acc
    return out


def apply_persistence(raw: ActivityMatrix | CohortActivity, catalog: FeatureCatalog | None = None):
    """Fill binary temporal rows per policy; count rows are left untouched."""
    if raw.filled:
        raise TimelineError("matrix is already persistence-filled")
    catalog = catalog or raw.catalog
    modes, tails = _policy_arrays(catalog, raw.grid)
    n_temp = len(catalog.temporal)
    values = raw.values.copy()
    values[..., :n_temp, :] = fill_array(raw.values[..., :n_temp, :], modes, tails)
    kwargs = dict(grid=raw.grid, catalog=catalog, values=values,
                  window_totals=raw.window_totals.copy(), filled=True)
    if isinstance(raw, CohortActivity):
        return CohortActivity(patient_ids=raw.patient_ids, **kwargs)
    return ActivityMatrix(patient_id=raw.patient_id, **kwargs)


# --------------------------------------------------------------------------
# visit files

def _split_codes(text: str) -> tuple[str, ...]:
    return tuple(c.strip() for c in text.replace("|", ";").split(";") if c.strip())


def read_visits(path: str | Path) -> list[VisitRecord]:
    """Read visits from JSON-lines (``.jsonl``) or CSV (codes ``;``-separated)."""
    path = Path(path)
    out = []
    with path.open(encoding="utf-8", newline="") as fh:
        if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise TimelineError(f"{path}:{lineno}: {exc}") from exc
                out.append(VisitRecord(
                    patient_id=rec["patient_id"],
                    visit_date=rec.get("date", rec.get("visit_date")),
                    diagnosis_codes=tuple(rec.get("diagnosis_codes", ())),
                    stop_codes=tuple(rec.get("stop_codes", ())),
                    visn=rec.get("visn"),
                ))
        else:
            for rec in csv.DictReader(fh):
                out.append(VisitRecord(
                    patient_id=rec["patient_id"],
                    visit_date=rec.get("date") or rec.get("visit_date"),
                    diagnosis_codes=_split_codes(rec.get("diagnosis_codes", "")),
                    stop_codes=_split_codes(rec.get("stop_codes", "")),
                    visn=rec.get("visn") or None,
                ))
    return out


def write_visits(visits: Iterable[VisitRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
            for v in visits:
                rec = {"patient_id": v.patient_id, "date": v.visit_date.isoformat(),
                       "diagnosis_codes": list(v.diagnosis_codes), "stop_codes": list(v.stop_codes)}
                if v.visn is not None:
                    rec["visn"] = v.visn
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        else:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "date", "diagnosis_codes", "stop_codes", "visn"])
            for v in visits:
                w.writerow([v.patient_id, v.visit_date.isoformat(), ";".join(v.diagnosis_codes),
                            ";".join(v.stop_codes), v.visn or ""])
