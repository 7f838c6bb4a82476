"""Predictor catalog: feature definitions, code patterns and persistence policies.

The catalog is a plain-text document (INI style, one section per predictor)
so the category definitions can be edited without touching code. See
``data/default.catalog`` for the shipped 79-predictor dictionary.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

__all__ = [
    "CatalogError",
    "PersistenceMode",
    "PersistencePolicy",
    "DomainGroup",
    "ValueKind",
    "CodePattern",
    "FeatureDef",
    "FeatureCatalog",
    "normalize_code",
    "match_code",
    "categorize_codes",
    "parse_catalog",
    "serialize_catalog",
    "load_catalog",
    "default_catalog",
    "toy_catalog",
]

UNKNOWN = "unknown"
_META_SECTION = "catalog"


class CatalogError(ValueError):
    """Raised for malformed or inconsistent catalog documents."""


class PersistenceMode(str, Enum):
    CHRONIC_PERSISTENT = "ChronicPersistent"
    RECURRENT_TIME_LIMITED = "RecurrentTimeLimited"
    EVER_HISTORY = "EverHistory"
    EPISODIC = "Episodic"

    @classmethod
    def parse(cls, text: str) -> "PersistenceMode":
        # accepts "Recurrent Time-Limited", "recurrent_time_limited", ...
        squashed = re.sub(r"[\s_\-]", "", text).lower()
        for mode in cls:
            if mode.value.lower() == squashed:
                return mode
        raise CatalogError(f"unknown persistence mode {text!r}")


class DomainGroup(str, Enum):
    DEMOGRAPHICS = "Demographics"
    SERVICE_UTILIZATION = "ServiceUtilization"
    MENTAL_HEALTH = "MentalHealth"
    PHYSICAL_HEALTH = "PhysicalHealth"
    SUBSTANCE_ABUSE = "SubstanceAbuse"
    SBFH = "SBFH"
    MILITARY_HISTORY = "MilitaryHistory"


# Fixed domain order used by prompts and by feature-vector blocks.
DOMAIN_ORDER: tuple[DomainGroup, ...] = (
    DomainGroup.DEMOGRAPHICS,
    DomainGroup.SERVICE_UTILIZATION,
    DomainGroup.MENTAL_HEALTH,
    DomainGroup.PHYSICAL_HEALTH,
    DomainGroup.SUBSTANCE_ABUSE,
    DomainGroup.MILITARY_HISTORY,
    DomainGroup.SBFH,
)


class ValueKind(str, Enum):
    BINARY = "Binary"
    COUNT = "Count"
    CATEGORICAL = "Categorical"


COUNT_AGGREGATIONS = ("visits", "days", "visn")


@dataclass(frozen=True)
class PersistencePolicy:
    mode: PersistenceMode
    timeout_quarters: int | None = None

    def __post_init__(self) -> None:
        if self.mode is PersistenceMode.RECURRENT_TIME_LIMITED:
            if self.timeout_quarters is None:
                raise CatalogError("RecurrentTimeLimited requires timeout_quarters")
            if int(self.timeout_quarters) < 1:
                raise CatalogError("timeout_quarters must be >= 1")
        elif self.timeout_quarters is not None:
            raise CatalogError(f"{self.mode.value} does not take a timeout")


def normalize_code(code: str) -> str:
    """Uppercase and strip a code token; the decimal point is kept."""
    return code.strip().upper()


@dataclass(frozen=True)
class CodePattern:
    """An ICD-10 or stop-code stem, optionally ending in the wildcard ``%``."""

    pattern: str

    def __post_init__(self) -> None:
        text = normalize_code(self.pattern)
        if not text or text == "%":
            raise CatalogError("empty code pattern")
        if text.count("%") > 1 or ("%" in text and not text.endswith("%")):
            raise CatalogError(f"wildcard must be single and terminal: {self.pattern!r}")
        object.__setattr__(self, "pattern", text)

    @property
    def is_wildcard(self) -> bool:
        return self.pattern.endswith("%")

    @property
    def stem(self) -> str:
        return self.pattern.rstrip("%")

    @property
    def is_bare_stem(self) -> bool:
        return not self.is_wildcard and "." not in self.pattern

    def __str__(self) -> str:
        return self.pattern


def match_code(pattern: CodePattern | str, code: str) -> bool:
    """Return True if ``code`` falls under ``pattern``.

    Exact equality always matches. A trailing ``%`` makes the stem a plain
    prefix. A bare category stem without a dot (``F12``) also covers codes
    extending it at a dot boundary (``F12.10``) but not ``F120``.
    """
    if not isinstance(pattern, CodePattern):
        pattern = CodePattern(pattern)
    code = normalize_code(code)
    if pattern.is_wildcard:
        return code.startswith(pattern.stem)
    if code == pattern.pattern:
        return True
    return pattern.is_bare_stem and code.startswith(pattern.pattern + ".")


@dataclass(frozen=True)
class FeatureDef:
    name: str
    domain_group: DomainGroup
    value_kind: ValueKind
    code_patterns: tuple[CodePattern, ...] = ()
    stop_code_patterns: tuple[CodePattern, ...] = ()
    policy: PersistencePolicy | None = None
    temporal: bool = False
    key: str = ""
    display: str = ""
    levels: tuple[str, ...] = ()
    bands: tuple[str, ...] = ()
    count: str | None = None

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise CatalogError("feature name must be non-empty")
        if not self.key:
            object.__setattr__(self, "key", slugify(self.name))
        if not self.display:
            object.__setattr__(self, "display", self.name)
        if self.temporal and self.policy is None:
            raise CatalogError(f"temporal feature {self.name!r} has no persistence policy")
        if not self.temporal and self.policy is not None:
            raise CatalogError(f"static feature {self.name!r} must not carry a policy")
        if self.temporal and self.value_kind is not ValueKind.BINARY:
            raise CatalogError(f"temporal feature {self.name!r} must be Binary")
        if self.value_kind is ValueKind.COUNT:
            if self.count not in COUNT_AGGREGATIONS:
                raise CatalogError(f"count feature {self.name!r} needs count = visits|days|visn")
            if not self.bands:
                object.__setattr__(self, "bands", DEFAULT_COUNT_BANDS)
        elif self.count is not None:
            raise CatalogError(f"only Count features take an aggregation: {self.name!r}")
        for band in self.bands:
            _parse_band(band)
        if self.is_static:
            levels = self.levels or (tuple(self.bands) + (UNKNOWN,) if self.bands else ())
            if self.value_kind is ValueKind.BINARY and not levels:
                levels = ("yes", "no", UNKNOWN)
            if UNKNOWN not in levels:
                raise CatalogError(f"static feature {self.name!r} must declare an 'unknown' level")
            object.__setattr__(self, "levels", tuple(levels))

    @property
    def is_static(self) -> bool:
        """Level-valued profile attribute (demographics, military history, ADI...)."""
        return not self.temporal and self.value_kind is not ValueKind.COUNT

    @property
    def is_count(self) -> bool:
        return self.value_kind is ValueKind.COUNT

    def level_of(self, value: object) -> str:
        """Map a raw profile value onto one of the declared levels."""
        if value is None or (isinstance(value, str) and not value.strip()):
            return UNKNOWN
        if self.bands:
            try:
                number = float(value)
            except (TypeError, ValueError):
                text = str(value).strip()
                if text in self.levels:
                    return text
                return UNKNOWN
            return band_of(number, self.bands) or UNKNOWN
        text = str(value).strip()
        if text in self.levels:
            return text
        lowered = {lvl.lower(): lvl for lvl in self.levels}
        return lowered.get(text.lower(), UNKNOWN)


DEFAULT_COUNT_BANDS = ("0", "1-2", "3-5", "6-11", "12+")


def _parse_band(band: str) -> tuple[float, float]:
    text = band.strip()
    m = re.fullmatch(r"(\d+(?:\.\d+)?)\+", text)
    if m:
        return float(m.group(1)), float("inf")
    m = re.fullmatch(r"(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)", text)
    if m:
        lo, hi = float(m.group(1)), float(m.group(2))
        if hi < lo:
            raise CatalogError(f"empty band {band!r}")
        return lo, hi
    m = re.fullmatch(r"\d+(?:\.\d+)?", text)
    if m:
        return float(text), float(text)
    raise CatalogError(f"malformed band {band!r}")


def band_of(value: float, bands: Sequence[str]) -> str | None:
    """Return the first inclusive band containing ``value``."""
    for band in bands:
        lo, hi = _parse_band(band)
        if lo <= value <= hi:
            return band
    return None


def slugify(text: str) -> str:
    return re.sub(r"[^0-9a-z]+", "_", text.lower()).strip("_")


@dataclass(frozen=True)
class FeatureCatalog:
    features: tuple[FeatureDef, ...]
    version: str = "1"

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", tuple(self.features))
        names = [f.name for f in self.features]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise CatalogError(f"duplicate feature name(s): {sorted(dup)}")
        keys = [f.key for f in self.features]
        dup = {k for k in keys if keys.count(k) > 1}
        if dup:
            raise CatalogError(f"duplicate feature key(s): {sorted(dup)}")

    def __getitem__(self, name: str) -> FeatureDef:
        return self._by_name[name]

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __len__(self) -> int:
        return len(self.features)

    @cached_property
    def _by_name(self) -> dict[str, FeatureDef]:
        return {f.name: f for f in self.features}

    @cached_property
    def temporal(self) -> tuple[FeatureDef, ...]:
        return tuple(f for f in self.features if f.temporal)

    @cached_property
    def counts(self) -> tuple[FeatureDef, ...]:
        return tuple(f for f in self.features if f.is_count)

    @cached_property
    def static(self) -> tuple[FeatureDef, ...]:
        return tuple(f for f in self.features if f.is_static)

    @cached_property
    def matrix_rows(self) -> tuple[FeatureDef, ...]:
        """Rows of an activity matrix: temporal binaries then utilization counts."""
        return self.temporal + self.counts

    @cached_property
    def _index(self) -> "_CodeIndex":
        return _CodeIndex(self.matrix_rows)

    def categorize(self, codes: Iterable[str], stop_codes: Iterable[str] = ()) -> frozenset[str]:
        rows = self.matrix_rows
        hits = self._index.lookup(tuple(codes), tuple(stop_codes))
        return frozenset(rows[i].name for i in hits)

    def row_hits(self, codes: tuple[str, ...], stop_codes: tuple[str, ...]) -> tuple[int, ...]:
        """Indices into ``matrix_rows`` matched by a visit's codes (memoized)."""
        return self._index.lookup(codes, stop_codes)


class _CodeIndex:
    """Dictionary index giving O(len(code)) lookups for the three match rules."""

    def __init__(self, rows: Sequence[FeatureDef]) -> None:
        self.exact = ({}, {})
        self.bare = ({}, {})
        self.wild = ({}, {})
        for i, feat in enumerate(rows):
            for slot, patterns in enumerate((feat.code_patterns, feat.stop_code_patterns)):
                for p in patterns:
                    if p.is_wildcard:
                        self.wild[slot].setdefault(p.stem, set()).add(i)
                    else:
                        self.exact[slot].setdefault(p.pattern, set()).add(i)
                        if p.is_bare_stem:
                            self.bare[slot].setdefault(p.pattern, set()).add(i)
        self._cache: dict[tuple, tuple[int, ...]] = {}

    def _one(self, slot: int, code: str, out: set[int]) -> None:
        code = normalize_code(code)
        out.update(self.exact[slot].get(code, ()))
        head, dot, _ = code.partition(".")
        if dot:
            out.update(self.bare[slot].get(head, ()))
        wild = self.wild[slot]
        if wild:
            for end in range(len(code) + 1):
                out.update(wild.get(code[:end], ()))

    def lookup(self, codes: tuple[str, ...], stop_codes: tuple[str, ...]) -> tuple[int, ...]:
        key = (codes, stop_codes)
        hit = self._cache.get(key)
        if hit is None:
            out: set[int] = set()
            for c in codes:
                self._one(0, c, out)
            for c in stop_codes:
                self._one(1, c, out)
            hit = tuple(sorted(out))
            if len(self._cache) < 200_000:
                self._cache[key] = hit
        return hit


def categorize_codes(
    codes: Iterable[str], stop_codes: Iterable[str], catalog: FeatureCatalog
) -> frozenset[str]:
    """Names of all features whose patterns match any supplied code."""
    return catalog.categorize(codes, stop_codes)


# --------------------------------------------------------------------------
# document format

_KNOWN_KEYS = {
    "group", "value_kind", "mode", "timeout_quarters", "codes", "stop_codes",
    "temporal", "key", "display", "levels", "bands", "count",
}


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in re.split(r"[,\n]", text) if t.strip()]


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("yes", "true", "1"):
        return True
    if lowered in ("no", "false", "0"):
        return False
    raise CatalogError(f"not a boolean: {text!r}")


def _enum(cls, text: str, what: str):
    try:
        return cls(text.strip())
    except ValueError:
        raise CatalogError(f"unknown {what} {text!r}") from None


def parse_catalog(source: str) -> FeatureCatalog:
    """Parse a catalog document into a validated :class:`FeatureCatalog`."""
    parser = configparser.ConfigParser(
        interpolation=None,
        strict=True,
        delimiters=("=",),
        comment_prefixes=("#",),
        inline_comment_prefixes=None,
        empty_lines_in_values=False,
        default_section="__defaults__",
    )
    try:
        parser.read_string(source)
    except configparser.DuplicateSectionError as exc:
        raise CatalogError(f"duplicate feature name {exc.section!r}") from exc
    except configparser.Error as exc:
        raise CatalogError(f"malformed catalog document: {exc}") from exc

    version = "1"
    features: list[FeatureDef] = []
    for section in parser.sections():
        body = parser[section]
        if section == _META_SECTION:
            version = body.get("version", version)
            continue
        unknown = set(body) - _KNOWN_KEYS
        if unknown:
            raise CatalogError(f"{section}: unknown field(s) {sorted(unknown)}")
        if "group" not in body or "value_kind" not in body:
            raise CatalogError(f"{section}: group and value_kind are required")
        policy = None
        if "mode" in body:
            mode = PersistenceMode.parse(body["mode"])
            timeout = body.get("timeout_quarters")
            if timeout is not None:
                try:
                    timeout = int(timeout)
                except ValueError:
                    raise CatalogError(f"{section}: timeout_quarters must be an integer") from None
            policy = PersistencePolicy(mode, timeout)
        elif "timeout_quarters" in body:
            raise CatalogError(f"{section}: timeout_quarters without mode")
        temporal = _parse_bool(body["temporal"]) if "temporal" in body else policy is not None
        features.append(
            FeatureDef(
                name=section,
                domain_group=_enum(DomainGroup, body["group"], "domain group"),
                value_kind=_enum(ValueKind, body["value_kind"], "value kind"),
                code_patterns=tuple(CodePattern(c) for c in _split_list(body.get("codes", ""))),
                stop_code_patterns=tuple(
                    CodePattern(c) for c in _split_list(body.get("stop_codes", ""))
                ),
                policy=policy,
                temporal=temporal,
                key=body.get("key", ""),
                display=body.get("display", ""),
                levels=tuple(_split_list(body.get("levels", ""))),
                bands=tuple(_split_list(body.get("bands", ""))),
                count=body.get("count"),
            )
        )
    if not features:
        raise CatalogError("catalog declares no features")
    return FeatureCatalog(tuple(features), version)


def _wrap(key: str, items: Sequence[str], width: int = 76) -> str:
    lines, cur = [], f"{key} ="
    for i, item in enumerate(items):
        piece = f" {item}" + ("," if i < len(items) - 1 else "")
        if len(cur) + len(piece) > width and cur != f"{key} =":
            lines.append(cur)
            cur = "    " + piece.strip()
        else:
            cur += piece
    lines.append(cur)
    return "\n".join(lines)


def serialize_catalog(catalog: FeatureCatalog) -> str:
    """Render a catalog back to its document form (parses to an equal catalog)."""
    out = io.StringIO()
    out.write(f"[{_META_SECTION}]\nversion = {catalog.version}\n\n")
    for f in catalog.features:
        out.write(f"[{f.name}]\n")
        out.write(f"group = {f.domain_group.value}\n")
        out.write(f"value_kind = {f.value_kind.value}\n")
        out.write(f"key = {f.key}\n")
        out.write(f"display = {f.display}\n")
        out.write(f"temporal = {'yes' if f.temporal else 'no'}\n")
        if f.policy is not None:
            out.write(f"mode = {f.policy.mode.value}\n")
            if f.policy.timeout_quarters is not None:
                out.write(f"timeout_quarters = {f.policy.timeout_quarters}\n")
        if f.count is not None:
            out.write(f"count = {f.count}\n")
        if f.bands:
            out.write(_wrap("bands", f.bands) + "\n")
        if f.levels and not (f.bands and f.levels == f.bands + (UNKNOWN,)):
            out.write(_wrap("levels", f.levels) + "\n")
        if f.code_patterns:
            out.write(_wrap("codes", [p.pattern for p in f.code_patterns]) + "\n")
        if f.stop_code_patterns:
            out.write(_wrap("stop_codes", [p.pattern for p in f.stop_code_patterns]) + "\n")
        out.write("\n")
    return out.getvalue()


def load_catalog(path: str | Path) -> FeatureCatalog:
    return parse_catalog(Path(path).read_text(encoding="utf-8"))


def _packaged(name: str) -> str:
    return resources.files("ehrpersist").joinpath("data").joinpath(name).read_text(encoding="utf-8")


def default_catalog() -> FeatureCatalog:
    """The shipped 79-predictor catalog."""
    return parse_catalog(_packaged("default.catalog"))


def toy_catalog() -> FeatureCatalog:
    """Four-condition catalog behind the single-patient worked example."""
    return parse_catalog(_packaged("toy.catalog"))
