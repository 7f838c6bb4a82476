"""Command-line entry point: ``ehrpersist <command> [--config run.json] [flags]``.

Every command writes its artifacts into ``--out`` together with a
``manifest_<command>.json`` recording the resolved configuration, its hash,
the seeds, library versions and the sha256 of each artifact. No timestamps
are recorded, so rerunning a manifest reproduces every byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .catalog import FeatureCatalog, default_catalog, load_catalog
from .eval import TIER_FRACTIONS, curve_points, evaluate
from .fairness import fairness_report, format_report
from .pipeline import (
    ARMS,
    DEFAULT_GRID,
    ScoreSet,
    Split,
    downsample_train,
    grid_search,
    ingest_scores,
    predict,
    run_ablation,
    split,
    write_scores,
)
from .represent import (
    WINDOWS,
    CohortProfiles,
    Representation,
    design_matrix,
    profile_from_mapping,
    profiles_from_table,
    read_demographics,
    render_prompt,
    strata_keys,
    toy_profile,
    write_demographics,
)
from .synth import CohortSpec, generate_cohort, reference_spec
from .timeline import Granularity, IntervalGrid, VisitTable, read_visits, write_visits

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
COMMANDS = ("synth", "features", "prompts", "split", "train", "ingest", "evaluate", "fairness", "ablate")
FAIRNESS_GROUPINGS = {"Race": "race", "AgeBand": "age", "Ethnicity": "ethnicity"}


class ConfigError(ValueError):
    """Invalid configuration or a missing upstream artifact."""


@dataclass(frozen=True)
class RunConfig:
    output_dir: str = "out"
    catalog: str | None = None
    visits: str | None = None
    demographics: str | None = None
    labels: str | None = None
    scores: str | None = None
    split_file: str | None = None
    spec: str | None = None
    granularity: str = "Quarter"
    representation: str = "time_varying"
    windows: tuple[int, ...] = WINDOWS
    year: int = 2016
    split_seed: int = 0
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    n_patients: int = 200_000
    bootstrap_iterations: int = 2000
    grid: tuple[tuple[float, float], ...] = DEFAULT_GRID
    tiers: tuple[float, ...] = TIER_FRACTIONS
    max_iter: int = 2000
    subset: str = "test"
    model_name: str = "elastic_net"
    toy: bool = False
    prompt_format: str | None = None

    def validate(self) -> "RunConfig":
        for name in ("catalog", "visits", "demographics", "labels", "scores", "split_file", "spec"):
            path = getattr(self, name)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"{name}: no such file {path!r}")
        if not self.windows:
            raise ConfigError("windows must be non-empty")
        bad = [w for w in self.windows if w not in WINDOWS]
        if bad:
            raise ConfigError(f"windows must be drawn from {WINDOWS}, got {bad}")
        Granularity.parse(self.granularity)
        Representation.parse(self.representation)
        if self.bootstrap_iterations < 1 or self.max_iter < 1 or self.n_patients < 1:
            raise ConfigError("iterations, max_iter and n_patients must be positive")
        if not self.grid or any(c <= 0 or not 0 <= l <= 1 for c, l in self.grid):
            raise ConfigError("grid needs (C > 0, 0 <= l1_ratio <= 1) pairs")
        if any(not 0 < p < 1 for p in self.tiers):
            raise ConfigError("tier fractions must lie in (0, 1)")
        if self.subset not in ("test", "all"):
            raise ConfigError("subset must be 'test' or 'all'")
        if self.prompt_format not in (None, "text", "jsonl"):
            raise ConfigError("prompt format must be 'text' or 'jsonl'")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _coerce(name: str, value):
    """Normalise JSON/flag values onto RunConfig field types."""
    if value is None:
        return None
    if name in ("windows", "seeds"):
        if isinstance(value, str):
            value = [v for v in value.replace(" ", "").split(",") if v]
        return tuple(int(v) for v in value)
    if name == "tiers":
        if isinstance(value, str):
            value = value.split(",")
        return tuple(float(v) for v in value)
    if name == "grid":
        if isinstance(value, str):
            value = DEFAULT_GRID if value == "default" else json.loads(value)
        return tuple((float(c), float(l)) for c, l in value)
    if name == "granularity":
        return Granularity.parse(value).value
    if name == "representation":
        return Representation.parse(value).value
    return value


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the JSON file, then flag overrides (flags win)."""
    known = {f.name for f in fields(RunConfig)}
    merged: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path!r} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path!r}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        merged.update(data)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        merged = {k: _coerce(k, v) for k, v in merged.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return replace(RunConfig(), **merged).validate()


# --------------------------------------------------------------------------
# artifact helpers

class _Run:
    """Collects artifacts written by one command and emits its manifest."""

    def __init__(self, command: str, cfg: RunConfig):
        self.command, self.cfg = command, cfg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, str] = {}

    @property
    def manifest_name(self) -> str:
        return f"manifest_{self.command}.json"

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        return self.record(path)

    def write_json(self, name: str, payload: dict) -> Path:
        payload = {"manifest": self.manifest_name, **payload}
        return self.write_text(name, json.dumps(payload, indent=2, sort_keys=True) + "\n")

    def write_with(self, name: str, writer: Callable[[Path], None]) -> Path:
        path = self.out / name
        writer(path)
        return self.record(path)

    def record(self, path: Path) -> Path:
        self.artifacts[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()
        return path

    def finish(self) -> Path:
        import numba
        import scipy

        manifest = {
            "command": self.command,
            "config": json.loads(self.cfg.to_json()),
            "config_sha256": self.cfg.sha256,
            "seeds": {"split_seed": self.cfg.split_seed, "seed": self.cfg.seed, "seeds": list(self.cfg.seeds)},
            "versions": {"ehrpersist": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "numba": numba.__version__, "python": platform.python_version()},
            "artifacts": dict(sorted(self.artifacts.items())),
        }
        path = self.out / self.manifest_name
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path


def _catalog(cfg: RunConfig) -> FeatureCatalog:
    return load_catalog(cfg.catalog) if cfg.catalog else default_catalog()


def _grid(cfg: RunConfig) -> IntervalGrid:
    return IntervalGrid.year(cfg.granularity, cfg.year)


def _need(cfg: RunConfig, name: str, fallback: str | None = None) -> str:
    """Explicit path from the config, else an upstream artifact in the output dir."""
    value = getattr(cfg, name)
    if value:
        return value
    if fallback is not None and (Path(cfg.output_dir) / fallback).exists():
        return str(Path(cfg.output_dir) / fallback)
    hint = f" (or run the step producing {fallback})" if fallback else ""
    raise ConfigError(f"missing input: {name}{hint}")


def read_labels(path: str | Path) -> dict[int, dict[str, int]]:
    """``patient_id,window,label`` CSV to ``{window: {patient_id: label}}``."""
    out: dict[int, dict[str, int]] = {}
    with Path(path).open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"patient_id", "window", "label"} <= set(reader.fieldnames):
            raise ConfigError("labels file needs patient_id,window,label columns")
        for lineno, row in enumerate(reader, 2):
            w, y = int(row["window"]), int(row["label"])
            if y not in (0, 1):
                raise ConfigError(f"labels line {lineno}: label must be 0 or 1")
            bucket = out.setdefault(w, {})
            if row["patient_id"] in bucket:
                raise ConfigError(f"labels line {lineno}: duplicate patient for window {w}")
            bucket[row["patient_id"]] = y
    return out


def _window_labels(labels: dict[int, dict[str, int]], w: int, ids: Sequence[str]) -> np.ndarray:
    if w not in labels:
        raise ConfigError(f"labels file has no {w}-month window")
    try:
        return np.array([labels[w][p] for p in ids], dtype=np.int64)
    except KeyError as exc:
        raise ConfigError(f"no {w}-month label for patient {exc.args[0]!r}") from None


def read_split(path: str | Path) -> dict[str, Split]:
    with Path(path).open(encoding="utf-8", newline="") as fh:
        return {r["patient_id"]: Split(r["split"]) for r in csv.DictReader(fh)}


def _load_cohort(cfg: RunConfig) -> tuple[CohortProfiles, dict[str, list[str]]]:
    cat = _catalog(cfg)
    ids, demo = read_demographics(_need(cfg, "demographics", "demographics.csv"))
    visits = read_visits(_need(cfg, "visits", "visits.jsonl"))
    table = VisitTable.from_records(visits, ids)
    return profiles_from_table(table, demo, cat, _grid(cfg)), demo


def _split_for(cfg: RunConfig, ids: Sequence[str], run: _Run | None = None) -> dict[str, Split]:
    """Existing split file if any, else a fresh split (written when ``run`` is given)."""
    path = cfg.split_file or (Path(cfg.output_dir) / "split.csv")
    if Path(path).exists():
        assignment = read_split(path)
        missing = [p for p in ids if p not in assignment]
        if missing:
            raise ConfigError(f"split file lacks patient {missing[0]!r}")
        return assignment
    sp = split(ids, cfg.split_seed)
    if run is not None:
        run.write_text("split.csv", sp.to_csv())
    return sp.as_dict()


# --------------------------------------------------------------------------
# commands

def cmd_synth(cfg: RunConfig, run: _Run) -> None:
    if cfg.spec:
        spec = CohortSpec.from_json(Path(cfg.spec).read_text(encoding="utf-8"))
        spec = replace(spec, seed=cfg.seed)
    else:
        spec = reference_spec(cfg.n_patients, cfg.seed)
    cohort = generate_cohort(spec, _catalog(cfg))
    ids = [str(p) for p in cohort.patient_ids]
    run.write_with("visits.jsonl", lambda p: write_visits(cohort.visits.records(), p))
    run.write_with("demographics.csv", lambda p: write_demographics(p, ids, cohort.demographics))

    def labels(path: Path) -> None:
        with path.open("w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["patient_id", "window", "label"])
            w.writerows(cohort.label_rows())

    run.write_with("labels.csv", labels)
    run.write_text("cohort_spec.json", spec.to_json() + "\n")
    prev = {str(w): float(y.mean()) for w, y in cohort.labels.items()}
    run.write_json("synth_summary.json", {"n_patients": len(ids), "prevalence": prev})


def cmd_features(cfg: RunConfig, run: _Run) -> None:
    cohort, _ = _load_cohort(cfg)
    names, X = design_matrix(cohort, cfg.representation)
    run.write_with("features.npy", lambda p: np.save(p, np.ascontiguousarray(X)))
    run.write_text("columns.txt", "\n".join(names) + "\n")
    run.write_text("patients.txt", "\n".join(map(str, cohort.patient_ids)) + "\n")


def cmd_prompts(cfg: RunConfig, run: _Run) -> None:
    with_fill = Representation.parse(cfg.representation) is not Representation.TIME_VARYING_NO_FILL
    if cfg.toy:
        profiles = [toy_profile(cfg.granularity)]
    else:
        cohort, demo = _load_cohort(cfg)
        raw = cohort.raw
        profiles = [profile_from_mapping(cohort.catalog, raw.patient(i), {k: v[i] for k, v in demo.items()})
                    for i in range(len(raw.patient_ids))]
    fmt = cfg.prompt_format or ("text" if cfg.toy else "jsonl")
    for w in cfg.windows:
        docs = [(p.patient_id, render_prompt(p, w, with_fill)) for p in profiles]
        if fmt == "text":
            run.write_text(f"prompts_{w}m.txt", "\n\n".join(d.text for _, d in docs))
        else:
            run.write_text(f"prompts_{w}m.jsonl", "".join(
                json.dumps(d.to_record(pid), sort_keys=True, ensure_ascii=False) + "\n" for pid, d in docs))


def _ids_from_inputs(cfg: RunConfig) -> list[str]:
    if cfg.demographics or (Path(cfg.output_dir) / "demographics.csv").exists():
        return read_demographics(_need(cfg, "demographics", "demographics.csv"))[0]
    labels = read_labels(_need(cfg, "labels", "labels.csv"))
    return sorted({p for bucket in labels.values() for p in bucket})


def cmd_split(cfg: RunConfig, run: _Run) -> None:
    run.write_text("split.csv", split(_ids_from_inputs(cfg), cfg.split_seed).to_csv())


def cmd_train(cfg: RunConfig, run: _Run) -> None:
    cohort, _ = _load_cohort(cfg)
    ids = [str(p) for p in cohort.patient_ids]
    labels = read_labels(_need(cfg, "labels", "labels.csv"))
    assignment = _split_for(cfg, ids, run)
    part = np.array([assignment[p].value for p in ids])
    names, X = design_matrix(cohort, cfg.representation)
    strata = strata_keys(cohort)
    for w in cfg.windows:
        y = _window_labels(labels, w, ids)
        tr = np.flatnonzero(part == Split.TRAIN.value)
        keep, report = downsample_train(y[tr], strata[tr], cfg.seed)
        tr = tr[keep]
        va = part == Split.VALIDATION.value
        best, board = grid_search(X[tr], y[tr], X[va], y[va], cfg.grid, names, cfg.max_iter)
        best = replace(best, granularity=cfg.granularity, representation=cfg.representation)
        run.write_text(f"model_{w}m.txt", best.to_text())
        rows = ["C,l1_ratio,val_pr_auc,converged,iterations,nonzero"]
        rows += [f"{r.C!r},{r.l1_ratio!r},{r.val_pr_auc!r},{int(r.converged)},{r.iterations},{r.nonzero}"
                 for r in board]
        run.write_text(f"leaderboard_{w}m.csv", "\n".join(rows) + "\n")
        s = predict(best, X, names)
        scores = ScoreSet(dict(zip(ids, s.tolist())), "NativeBaseline")
        run.write_with(f"scores_{w}m.csv", lambda p: write_scores(scores, p))
        run.write_json(f"downsample_{w}m.json", {k: v for k, v in asdict(report).items()})


def cmd_ingest(cfg: RunConfig, run: _Run) -> None:
    if len(cfg.windows) != 1:
        raise ConfigError("ingest takes exactly one window")
    labels = read_labels(_need(cfg, "labels", "labels.csv"))
    known = {p for bucket in labels.values() for p in bucket}
    scores = ingest_scores(Path(_need(cfg, "scores")), known, cfg.model_name)
    run.write_with(f"scores_{cfg.windows[0]}m.csv", lambda p: write_scores(scores, p))


def _scored(cfg: RunConfig, w: int) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Scored patients in the evaluation subset with aligned scores and labels."""
    if cfg.scores and len(cfg.windows) == 1:
        path = cfg.scores
    else:
        path = Path(cfg.output_dir) / f"scores_{w}m.csv"
        if not path.exists():
            raise ConfigError(f"missing input: {path.name} (run train or ingest first, or pass --scores)")
    scores = ingest_scores(Path(path), provenance=cfg.model_name)
    labels = read_labels(_need(cfg, "labels", "labels.csv"))
    ids = sorted(scores.scores)
    if cfg.subset == "test":
        split_path = Path(cfg.split_file or Path(cfg.output_dir) / "split.csv")
        if not split_path.exists():
            raise ConfigError("evaluating the test subset needs a split (run split or pass --split-file)")
        assignment = read_split(split_path)
        ids = [p for p in ids if assignment.get(p) is Split.TEST]
        if not ids:
            raise ConfigError("no scored patients in the test split")
    return ids, scores.aligned(ids), _window_labels(labels, w, ids)


def cmd_evaluate(cfg: RunConfig, run: _Run) -> None:
    for w in cfg.windows:
        ids, s, y = _scored(cfg, w)
        report = evaluate(s, y, cfg.tiers, cfg.bootstrap_iterations, cfg.seed, w, cfg.model_name)
        run.write_json(f"report_{w}m.json", report.to_dict())
        run.write_text(f"report_{w}m.txt", report.to_table())
        run.write_text(f"curves_{w}m.csv", curve_points(s, y))


def cmd_fairness(cfg: RunConfig, run: _Run) -> None:
    cat = _catalog(cfg)
    demo_ids, demo = read_demographics(_need(cfg, "demographics", "demographics.csv"))
    by_key = {f.key: f for f in cat.static}
    col_for = {}
    for col in demo:
        f = by_key.get(col) or next((g for g in cat.static if g.name == col), None)
        if f is not None:
            col_for[f.key] = (f, dict(zip(demo_ids, demo[col])))
    for w in cfg.windows:
        ids, s, y = _scored(cfg, w)
        groupings = {}
        for label, key in FAIRNESS_GROUPINGS.items():
            if key in col_for:
                f, values = col_for[key]
                groupings[label] = [f.level_of(values.get(p, "unknown")) for p in ids]
        if not groupings:
            raise ConfigError("demographics file has none of the race/age/ethnicity attributes")
        report = fairness_report(s, y, groupings, cfg.bootstrap_iterations, cfg.seed)
        run.write_json(f"fairness_{w}m.json", report)
        run.write_text(f"fairness_{w}m.txt", format_report(report))


def cmd_ablate(cfg: RunConfig, run: _Run) -> None:
    results = []
    synthetic = bool(cfg.spec) or not (cfg.visits or (Path(cfg.output_dir) / "visits.jsonl").exists())
    base = None
    if synthetic:
        base = (CohortSpec.from_json(Path(cfg.spec).read_text(encoding="utf-8")) if cfg.spec
                else reference_spec(cfg.n_patients, 0))
        base = replace(base, n_patients=cfg.n_patients)
    else:
        cohort, _ = _load_cohort(cfg)
        labels = read_labels(_need(cfg, "labels", "labels.csv"))
        ids = [str(p) for p in cohort.patient_ids]
        strata = strata_keys(cohort)
    for seed in cfg.seeds:
        if synthetic:
            gen = generate_cohort(replace(base, seed=seed), _catalog(cfg))
            cohort = gen.profiles(_catalog(cfg), _grid(cfg))
            strata = strata_keys(cohort)
        for w in cfg.windows:
            y = gen.labels[w] if synthetic else _window_labels(labels, w, ids)
            arms = run_ablation(cohort, y, strata, seed, cfg.grid, ARMS, cfg.max_iter)
            results.append({"seed": seed, "window": w, "arms": [asdict(a) for a in arms]})
    summary = ablation_summary(results)
    run.write_json("ablation.json", {"runs": results, "summary": summary,
                                     "source": "synthetic" if synthetic else "files"})
    run.write_text("ablation.txt", format_ablation(results, summary))


def ablation_summary(results: list[dict]) -> dict:
    """Per window: seeds where fill beats no-fill and each time-varying arm beats static."""
    out = {}
    for w in sorted({r["window"] for r in results}):
        rows = [{a["representation"]: a["test_pr_auc"] for a in r["arms"]} for r in results if r["window"] == w]
        out[str(w)] = {
            "seeds": len(rows),
            "fill_beats_no_fill": sum(r["time_varying"] > r["time_varying_no_fill"] for r in rows),
            "fill_beats_static": sum(r["time_varying"] > r["static"] for r in rows),
            "no_fill_beats_static": sum(r["time_varying_no_fill"] > r["static"] for r in rows),
            "mean_test_pr_auc": {a: float(np.mean([r[a] for r in rows])) for a in ARMS},
        }
    return out


def format_ablation(results: list[dict], summary: dict) -> str:
    head = ("Window", "Seed", "Static (%)", "TV fill (%)", "TV no fill (%)")
    body = []
    for r in results:
        v = {a["representation"]: a["test_pr_auc"] for a in r["arms"]}
        body.append((f"{r['window']}m", str(r["seed"]), *(f"{v[a] * 100:.2f}" for a in ARMS)))
    widths = [max(len(x[i]) for x in [head] + body) for i in range(len(head))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(row, widths)).rstrip() for row in [head] + body]
    for w, s in summary.items():
        lines.append(f"{w}m: fill>no-fill {s['fill_beats_no_fill']}/{s['seeds']}, "
                     f"fill>static {s['fill_beats_static']}/{s['seeds']}, "
                     f"no-fill>static {s['no_fill_beats_static']}/{s['seeds']}")
    return "\n".join(lines) + "\n"


HANDLERS: dict[str, Callable[[RunConfig, _Run], None]] = {
    "synth": cmd_synth, "features": cmd_features, "prompts": cmd_prompts, "split": cmd_split,
    "train": cmd_train, "ingest": cmd_ingest, "evaluate": cmd_evaluate, "fairness": cmd_fairness,
    "ablate": cmd_ablate,
}


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its keys")
    common.add_argument("--out", dest="output_dir", help="output directory (default: out)")
    common.add_argument("--catalog", help="feature catalog file (default: shipped catalog)")
    common.add_argument("--visits", help="visit file (.jsonl or .csv)")
    common.add_argument("--demographics", help="patient_id plus static attribute columns (CSV)")
    common.add_argument("--labels", help="patient_id,window,label CSV")
    common.add_argument("--scores", help="patient_id,score CSV")
    common.add_argument("--split-file", dest="split_file", help="patient_id,split CSV")
    common.add_argument("--spec", help="cohort spec JSON for synth/ablate")
    common.add_argument("--granularity", choices=["Quarter", "HalfYear"])
    common.add_argument("--representation", choices=[r.value for r in Representation])
    common.add_argument("--windows", help="comma-separated prediction windows in months")
    common.add_argument("--year", type=int, help="observation year (default 2016)")
    common.add_argument("--split-seed", dest="split_seed", type=int)
    common.add_argument("--seed", type=int, help="generator / bootstrap / downsampling seed")
    common.add_argument("--seeds", help="comma-separated seeds for ablate")
    common.add_argument("--n-patients", dest="n_patients", type=int)
    common.add_argument("--iterations", dest="bootstrap_iterations", type=int, help="bootstrap iterations")
    common.add_argument("--grid", help="JSON list of [C, l1_ratio] pairs, or 'default'")
    common.add_argument("--tiers", help="comma-separated top-P fractions")
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--subset", choices=["test", "all"], help="patients to evaluate")
    common.add_argument("--model-name", dest="model_name")
    common.add_argument("--toy", action="store_true", default=None, help="use the shipped worked example")
    common.add_argument("--format", dest="prompt_format", choices=["text", "jsonl"])

    parser = argparse.ArgumentParser(prog="ehrpersist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    helps = {
        "synth": "generate a synthetic cohort with planted risk structure",
        "features": "build the design matrix for one representation",
        "prompts": "render patient prompts",
        "split": "patient-level train/validation/test split",
        "train": "grid-searched elastic-net baseline and its scores",
        "ingest": "validate an external score file",
        "evaluate": "metrics, risk tiers and bootstrap CIs per window",
        "fairness": "subgroup PR-AUC, reliability, heterogeneity tests",
        "ablate": "static vs time-varying with and without fill",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        cfg = load_config(args.config, overrides)
        run = _Run(args.command, cfg)
        HANDLERS[args.command](cfg, run)
        run.finish()
    except (ValueError, FileNotFoundError) as exc:
        print(f"ehrpersist {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"ehrpersist {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
