"""Static / time-varying feature vectors and natural-language prompts.

Per-patient builders run through the same batch code as cohort-scale design
matrices (:func:`design_matrix`), so both always agree.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .catalog import (
    DOMAIN_ORDER,
    UNKNOWN,
    DomainGroup,
    FeatureCatalog,
    FeatureDef,
    band_of,
    slugify,
)
from .timeline import (
    ActivityMatrix,
    CohortActivity,
    IntervalGrid,
    VisitRecord,
    VisitTable,
    aggregate,
    aggregate_table,
    apply_persistence,
)

__all__ = [
    "RepresentError",
    "Representation",
    "PatientProfile",
    "CohortProfiles",
    "FeatureVector",
    "PromptDoc",
    "Column",
    "vector_layout",
    "design_matrix",
    "build_static",
    "build_time_varying",
    "render_prompt",
    "task_sentence",
    "DOMAIN_LABELS",
    "profiles_from_table",
    "read_demographics",
    "write_demographics",
    "strata_keys",
    "toy_profile",
]

WINDOWS = (3, 6, 9, 12)

DOMAIN_LABELS = {
    DomainGroup.DEMOGRAPHICS: "demographics",
    DomainGroup.SERVICE_UTILIZATION: "utilization",
    DomainGroup.MENTAL_HEALTH: "mental_health_disorders",
    DomainGroup.PHYSICAL_HEALTH: "physical_health",
    DomainGroup.SUBSTANCE_ABUSE: "substance_abuse",
    DomainGroup.MILITARY_HISTORY: "military_history",
    DomainGroup.SBFH: "social_and_behavioral_factors",
}


class RepresentError(ValueError):
    pass


class Representation(str, Enum):
    STATIC = "static"
    TIME_VARYING = "time_varying"
    TIME_VARYING_NO_FILL = "time_varying_no_fill"

    @classmethod
    def parse(cls, text: "str | Representation") -> "Representation":
        if isinstance(text, Representation):
            return text
        key = str(text).strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"timevarying": "time_varying", "tv": "time_varying",
                   "tv_no_fill": "time_varying_no_fill", "timevaryingnofill": "time_varying_no_fill"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise RepresentError(f"unknown representation {text!r}") from None


@dataclass
class PatientProfile:
    """One patient's static attributes plus raw activity.

    ``demographics`` maps static feature names (demographic, military and
    static SBFH attributes) to raw values; missing keys are stored as
    ``"unknown"``. Values are rendered verbatim in prompts and mapped onto
    catalog levels for vectors.
    """

    patient_id: str
    catalog: FeatureCatalog
    raw_matrix: ActivityMatrix
    demographics: dict[str, object] = field(default_factory=dict)
    filled_matrix: ActivityMatrix | None = None

    def __post_init__(self) -> None:
        extra = set(self.demographics) - {f.name for f in self.catalog.static}
        if extra:
            raise RepresentError(f"unknown static attribute(s): {sorted(extra)}")
        self.demographics = {
            f.name: self.demographics.get(f.name, UNKNOWN) for f in self.catalog.static
        }
        if self.raw_matrix.filled:
            raise RepresentError("raw_matrix must be unfilled")
        if self.filled_matrix is None:
            self.filled_matrix = apply_persistence(self.raw_matrix, self.catalog)

    @property
    def grid(self) -> IntervalGrid:
        return self.raw_matrix.grid

    @property
    def utilization(self) -> dict[str, tuple[int, ...]]:
        n_temp = len(self.catalog.temporal)
        return {f.name: tuple(int(x) for x in self.raw_matrix.values[n_temp + i])
                for i, f in enumerate(self.catalog.counts)}


@dataclass
class CohortProfiles:
    """Batch of profiles: raw activity plus static level indices ``(n, n_static)``."""

    catalog: FeatureCatalog
    raw: CohortActivity
    static_levels: np.ndarray
    _filled: CohortActivity | None = None

    @property
    def patient_ids(self) -> np.ndarray:
        return self.raw.patient_ids

    @property
    def filled(self) -> CohortActivity:
        if self._filled is None:
            self._filled = apply_persistence(self.raw, self.catalog)
        return self._filled

    @classmethod
    def from_profiles(cls, profiles: Sequence[PatientProfile]) -> "CohortProfiles":
        if not profiles:
            raise RepresentError("no profiles")
        cat, grid = profiles[0].catalog, profiles[0].grid
        levels = np.array(
            [[f.levels.index(f.level_of(p.demographics[f.name])) for f in cat.static] for p in profiles],
            dtype=np.int64,
        ).reshape(len(profiles), len(cat.static))
        raw = CohortActivity(
            patient_ids=np.array([p.patient_id for p in profiles], dtype=object),
            grid=grid,
            catalog=cat,
            values=np.stack([p.raw_matrix.values for p in profiles]),
            window_totals=np.stack([p.raw_matrix.window_totals for p in profiles]),
        )
        return cls(cat, raw, levels)


@dataclass(frozen=True)
class FeatureVector:
    entries: tuple[tuple[str, float], ...]
    representation: Representation

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.entries)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.entries], dtype=float)

    def as_dict(self) -> dict[str, float]:
        return dict(self.entries)

    def __getitem__(self, name: str) -> float:
        return self.as_dict()[name]


@dataclass(frozen=True)
class PromptDoc:
    text: str
    window_months: int
    granularity: str

    def to_record(self, patient_id: str) -> dict:
        return {"patient_id": patient_id, "window_months": self.window_months, "text": self.text}


@dataclass(frozen=True)
class Column:
    name: str
    feature: str
    kind: str  # "level" | "band" | "any" | "interval"
    index: int


def _domain_sorted(features: Iterable[FeatureDef]) -> list[FeatureDef]:
    rank = {d: i for i, d in enumerate(DOMAIN_ORDER)}
    return sorted(features, key=lambda f: (rank[f.domain_group], f.key))


def vector_layout(catalog: FeatureCatalog, grid: IntervalGrid,
                  representation: "Representation | str") -> tuple[Column, ...]:
    """Canonical column order: domain order, then feature key, then level/interval."""
    rep = Representation.parse(representation)
    cols: list[Column] = []
    for f in _domain_sorted(catalog.features):
        if f.is_static:
            for i, lvl in enumerate(f.levels):
                cols.append(Column(f"{f.key}_{slugify(lvl) or 'x'}", f.name, "level", i))
        elif f.is_count:
            for i, band in enumerate(f.bands):
                cols.append(Column(f"{f.key}_{slugify(band.replace('+', 'plus'))}", f.name, "band", i))
        elif rep is Representation.STATIC:
            cols.append(Column(f.key, f.name, "any", 0))
        else:
            for i, lab in enumerate(grid.labels):
                cols.append(Column(f"{f.key}_{lab}", f.name, "interval", i))
    names = [c.name for c in cols]
    if len(set(names)) != len(names):
        raise RepresentError("column name collision in catalog layout")
    return tuple(cols)


def _band_indices(totals: np.ndarray, bands: Sequence[str]) -> np.ndarray:
    uniq, inv = np.unique(totals, return_inverse=True)
    lookup = []
    for u in uniq:
        b = band_of(float(u), bands)
        if b is None:
            raise RepresentError(f"count {u} falls in no band of {bands}")
        lookup.append(bands.index(b))
    return np.asarray(lookup, dtype=np.int64)[inv]


def design_matrix(cohort: CohortProfiles, representation: "Representation | str",
                  dtype=np.uint8) -> tuple[tuple[str, ...], np.ndarray]:
    """Dense ``(patients, columns)`` matrix in :func:`vector_layout` order."""
    rep = Representation.parse(representation)
    cat = cohort.catalog
    layout = vector_layout(cat, cohort.raw.grid, rep)
    n = len(cohort.patient_ids)
    X = np.zeros((n, len(layout)), dtype=dtype)
    rows = np.arange(n)
    static_pos = {f.name: i for i, f in enumerate(cat.static)}
    count_pos = {f.name: i for i, f in enumerate(cat.counts)}
    temp_pos = {f.name: i for i, f in enumerate(cat.temporal)}
    source = cohort.filled if rep is Representation.TIME_VARYING else cohort.raw
    temporal = source.temporal()

    start = 0
    while start < len(layout):
        col = layout[start]
        end = start
        while end < len(layout) and layout[end].feature == col.feature:
            end += 1
        if col.kind == "level":
            X[rows, start + cohort.static_levels[:, static_pos[col.feature]]] = 1
        elif col.kind == "band":
            f = cat[col.feature]
            totals = cohort.raw.window_totals[:, count_pos[col.feature]]
            X[rows, start + _band_indices(totals, f.bands)] = 1
        elif col.kind == "any":
            X[:, start] = temporal[:, temp_pos[col.feature], :].max(axis=1)
        else:
            X[:, start:end] = temporal[:, temp_pos[col.feature], :]
        start = end
    return tuple(c.name for c in layout), X


def _vector(profile: PatientProfile, rep: Representation) -> FeatureVector:
    cohort = CohortProfiles.from_profiles([profile])
    cohort._filled = CohortActivity(
        cohort.patient_ids, profile.grid, profile.catalog,
        profile.filled_matrix.values[None], profile.filled_matrix.window_totals[None], True,
    )
    names, X = design_matrix(cohort, rep, dtype=np.int64)
    return FeatureVector(tuple((n, int(v)) for n, v in zip(names, X[0])), rep)


def build_static(profile: PatientProfile) -> FeatureVector:
    """Any-occurrence indicators over the raw window plus banded counts."""
    return _vector(profile, Representation.STATIC)


def build_time_varying(profile: PatientProfile, with_fill: bool = True) -> FeatureVector:
    """Per-interval indicators from the filled (or raw) matrix."""
    return _vector(profile, Representation.TIME_VARYING if with_fill else Representation.TIME_VARYING_NO_FILL)


# --------------------------------------------------------------------------
# prompts

def task_sentence(window_months: int) -> str:
    if window_months not in WINDOWS:
        raise RepresentError(f"window_months must be one of {WINDOWS}, got {window_months!r}")
    return (f"Task: Given the patient information, predict yes if this patient will be "
            f"homeless in the next {window_months} months, no otherwise.")


def _periods(active: dict[str, np.ndarray], labels: Sequence[str], compress: bool) -> list[str]:
    """Group ``display -> per-interval activity`` into ``"Q1: a, b"`` period strings."""
    groups: dict[tuple[int, int], list[str]] = {}
    for display, row in active.items():
        idx = np.flatnonzero(row)
        if idx.size == 0:
            continue
        if compress:
            # maximal runs of consecutive active intervals
            breaks = np.flatnonzero(np.diff(idx) > 1)
            starts = np.concatenate([[idx[0]], idx[breaks + 1]])
            ends = np.concatenate([idx[breaks], [idx[-1]]])
            spans = list(zip(starts.tolist(), ends.tolist()))
        else:
            spans = [(int(i), int(i)) for i in idx]
        for span in spans:
            groups.setdefault(span, []).append(display)
    out = []
    for (a, b) in sorted(groups):
        label = labels[a] if a == b else f"{labels[a]}-{labels[b]}"
        out.append(f"{label}: {', '.join(sorted(groups[(a, b)]))}")
    return out


def render_prompt(profile: PatientProfile, window_months: int, with_fill: bool = True,
                  compress_domains: Sequence[str] = ("social_and_behavioral_factors",)) -> PromptDoc:
    """Render the patient as a domain-structured prompt with a terminal task sentence.

    Temporal features are shown from their first recorded interval onward;
    the fill extends them forward but backfilled intervals are not narrated.
    """
    task = task_sentence(window_months)
    cat = profile.catalog
    labels = profile.grid.labels
    n_temp = len(cat.temporal)
    raw = profile.raw_matrix.values
    shown = profile.filled_matrix.values if with_fill else raw
    lines = []
    for domain in DOMAIN_ORDER:
        feats = [f for f in cat.features if f.domain_group is domain]
        if not feats:
            continue
        name = DOMAIN_LABELS[domain]
        statics = [f"{f.display}: {profile.demographics[f.name]}" for f in feats if f.is_static]
        temporal: dict[str, np.ndarray] = {}
        counts: list[tuple[int, str]] = []
        for i, f in enumerate(cat.temporal):
            if f.domain_group is domain:
                first = np.flatnonzero(raw[i])
                row = shown[i].copy()
                row[: first[0] if first.size else row.size] = 0
                temporal[f.display] = row
        for j, f in enumerate(cat.counts):
            if f.domain_group is domain:
                for k, v in enumerate(raw[n_temp + j]):
                    if v > 0:
                        counts.append((k, f"{f.display}: {int(v)}"))
        periods = _periods(temporal, labels, name in compress_domains)
        if counts:
            by_iv: dict[int, list[str]] = {}
            for k, text in counts:
                by_iv.setdefault(k, []).append(text)
            periods += [f"{labels[k]}: {', '.join(sorted(v))}" for k, v in sorted(by_iv.items())]
        parts = []
        if statics:
            parts.append(", ".join(statics))
        parts.extend(periods)
        if parts:
            lines.append(f"{name}: {{{'; '.join(parts)}}}")
    body = ";\n".join(lines) + "." if lines else ""
    text = "Patient Information:\n" + body + "\n\n" + task
    return PromptDoc(text, window_months, profile.grid.granularity.value)


def write_prompts(records: Iterable[dict], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")


def profile_from_mapping(catalog: FeatureCatalog, raw: ActivityMatrix,
                         demographics: Mapping[str, object]) -> PatientProfile:
    """Build a profile accepting static attributes by feature name or key."""
    by_key = {f.key: f.name for f in catalog.static}
    demo = {by_key.get(k, k): v for k, v in demographics.items()}
    return PatientProfile(raw.patient_id, catalog, raw, demo)


# --------------------------------------------------------------------------
# cohort assembly and demographics files

def profiles_from_table(table: VisitTable, demographics: Mapping[str, Sequence],
                        catalog: FeatureCatalog, grid: IntervalGrid) -> CohortProfiles:
    """Aggregate a visit table and attach static attributes.

    ``demographics`` maps a static feature name or key to one raw value per
    patient, aligned with ``table.patient_ids``. Absent attributes are unknown.
    """
    by_key = {f.key: f.name for f in catalog.static}
    demo = {by_key.get(k, k): np.asarray(v, dtype=object) for k, v in demographics.items()}
    extra = set(demo) - {f.name for f in catalog.static}
    if extra:
        raise RepresentError(f"unknown static attribute(s): {sorted(extra)}")
    n = len(table.patient_ids)
    raw = aggregate_table(table, grid, catalog)
    levels = np.zeros((n, len(catalog.static)), dtype=np.int64)
    for j, f in enumerate(catalog.static):
        vals = demo.get(f.name)
        if vals is None:
            levels[:, j] = f.levels.index(UNKNOWN)
            continue
        if len(vals) != n:
            raise RepresentError(f"{f.name}: {len(vals)} values for {n} patients")
        uniq, inv = np.unique(vals.astype(str), return_inverse=True)
        levels[:, j] = np.array([f.levels.index(f.level_of(u)) for u in uniq], dtype=np.int64)[inv]
    return CohortProfiles(catalog, raw, levels)


def read_demographics(path: str | Path) -> tuple[list[str], dict[str, list[str]]]:
    """CSV with a ``patient_id`` column and one column per static attribute."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "patient_id" not in reader.fieldnames:
            raise RepresentError("demographics file needs a patient_id column")
        cols = [c for c in reader.fieldnames if c != "patient_id"]
        ids: list[str] = []
        out: dict[str, list[str]] = {c: [] for c in cols}
        for row in reader:
            ids.append(row["patient_id"])
            for c in cols:
                out[c].append(row[c] if row[c] not in (None, "") else UNKNOWN)
    if len(set(ids)) != len(ids):
        raise RepresentError("duplicate patient id in demographics file")
    return ids, out


def write_demographics(path: str | Path, patient_ids: Sequence[str],
                       demographics: Mapping[str, Sequence]) -> None:
    cols = list(demographics)
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", *cols])
        for i, pid in enumerate(patient_ids):
            w.writerow([pid, *(str(demographics[c][i]) for c in cols)])


def strata_keys(cohort: CohortProfiles, keys: Sequence[str] = ("gender", "age", "race")) -> np.ndarray:
    """Joined static levels per patient (default gender x age band x race)."""
    cat = cohort.catalog
    pos = {f.key: j for j, f in enumerate(cat.static)}
    missing = [k for k in keys if k not in pos]
    if missing:
        raise RepresentError(f"catalog lacks static attribute(s) {missing}")
    parts = []
    for k in keys:
        f = cat.static[pos[k]]
        parts.append(np.asarray(f.levels, dtype=object)[cohort.static_levels[:, pos[k]]])
    out = parts[0].astype(str)
    for p in parts[1:]:
        out = np.char.add(np.char.add(out, "|"), p.astype(str))
    return out


def toy_profile(granularity: str = "HalfYear") -> PatientProfile:
    """The shipped single-patient worked example on the toy catalog."""
    from importlib import resources

    from .catalog import toy_catalog

    doc = json.loads(resources.files("ehrpersist").joinpath("data").joinpath("toy_patient.json")
                     .read_text(encoding="utf-8"))
    cat = toy_catalog()
    visits = [VisitRecord(doc["patient_id"], v["date"], tuple(v.get("diagnosis_codes", ())),
                          tuple(v.get("stop_codes", ()))) for v in doc["visits"]]
    raw = aggregate(visits, IntervalGrid.year(granularity, doc["year"]), cat, doc["patient_id"])
    return profile_from_mapping(cat, raw, doc["demographics"])
