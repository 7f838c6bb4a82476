"""Synthetic cohorts with planted persistence dynamics and a known risk model.

Each patient owns a fixed block of uniforms from a counter-based Philox
stream keyed by the cohort seed, so patient ``i`` is the same no matter how
the cohort is chunked. Per feature, a latent quarterly process (chronic,
time-limited, ever, episodic) decides when the condition is truly active;
each active quarter is recorded with probability ``record_prob``, producing
a visit. Labels come from a logistic model on the *latent* state, with one
shared uniform per patient across windows so cumulative labels are monotone.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, Mapping

import numpy as np
from scipy import optimize, stats
from scipy.special import expit

from .catalog import UNKNOWN, FeatureCatalog, default_catalog
from .represent import CohortProfiles, profiles_from_table
from .timeline import IntervalGrid, VisitTable

__all__ = [
    "SynthError",
    "FeatureProcess",
    "CohortSpec",
    "GeneratedCohort",
    "OracleAUC",
    "generate_cohort",
    "oracle_auc",
    "calibrate_intercept",
    "reference_spec",
    "TARGET_PREVALENCE",
]

DYNAMICS = ("chronic", "time_limited", "ever", "episodic")
N_QUARTERS = 4
UTIL_SLOTS = 6  # utilization visits per (feature, quarter) are capped here
TARGET_PREVALENCE = {3: 0.0032, 6: 0.0063, 9: 0.0092, 12: 0.0119}
STRATA_ATTRS = ("Gender", "Age", "Race", "Ethnicity")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureProcess:
    """Latent quarterly process for one temporal feature.

    ``baseline`` is the probability of being active at window start (for
    time-limited processes the remaining duration is uniform on 1..duration);
    ``onset_hazard`` is the per-quarter onset probability while inactive.
    """

    dynamics: str
    onset_hazard: float
    baseline: float = 0.0
    duration: int | None = None
    record_prob: float = 1.0

    def __post_init__(self) -> None:
        if self.dynamics not in DYNAMICS:
            raise SynthError(f"unknown dynamics {self.dynamics!r}")
        for name in ("onset_hazard", "baseline", "record_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthError(f"{name} must lie in [0, 1]")
        if self.dynamics == "time_limited":
            if self.duration is None or self.duration < 1:
                raise SynthError("time_limited dynamics need duration >= 1")
        elif self.duration is not None:
            raise SynthError(f"{self.dynamics} dynamics take no duration")


@dataclass(frozen=True)
class CohortSpec:
    n_patients: int
    prevalence_targets: Mapping[int, float]
    strata_mix: Mapping[str, Mapping[str, float]]
    event_process: Mapping[str, FeatureProcess]
    true_coefficients: Mapping[str, float] = field(default_factory=dict)
    true_intercept_per_window: Mapping[int, float] | None = None
    seed: int = 0
    utilization_rates: Mapping[str, float] = field(default_factory=dict)
    year: int = 2016

    def __post_init__(self) -> None:
        if self.n_patients < 1:
            raise SynthError("n_patients must be positive")
        targets = {int(k): float(v) for k, v in self.prevalence_targets.items()}
        if not targets:
            raise SynthError("at least one prevalence target is required")
        ordered = [targets[w] for w in sorted(targets)]
        if any(not 0 < t < 1 for t in ordered):
            raise SynthError("prevalence targets must lie in (0, 1)")
        if any(b < a for a, b in zip(ordered, ordered[1:])):
            raise SynthError("infeasible targets: cumulative prevalence must be non-decreasing in window")
        object.__setattr__(self, "prevalence_targets", dict(sorted(targets.items())))
        if self.true_intercept_per_window is not None:
            b = {int(k): float(v) for k, v in self.true_intercept_per_window.items()}
            if set(b) != set(targets):
                raise SynthError("intercepts must cover exactly the target windows")
            object.__setattr__(self, "true_intercept_per_window", dict(sorted(b.items())))
        procs = {k: (v if isinstance(v, FeatureProcess) else FeatureProcess(**v))
                 for k, v in self.event_process.items()}
        object.__setattr__(self, "event_process", procs)
        for attr, mix in self.strata_mix.items():
            total = sum(mix.values())
            if any(p < 0 for p in mix.values()) or not math.isclose(total, 1.0, abs_tol=1e-9):
                raise SynthError(f"strata_mix[{attr!r}] must be a probability distribution")
        if not 0 <= int(self.seed) < 2**64:
            raise SynthError("seed must be a 64-bit unsigned integer")

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["event_process"] = {k: asdict(v) for k, v in self.event_process.items()}
        for key in ("prevalence_targets", "true_intercept_per_window"):
            if d[key] is not None:
                d[key] = {str(k): v for k, v in d[key].items()}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Mapping) -> "CohortSpec":
        return cls(**dict(d))

    @classmethod
    def from_json(cls, text: str) -> "CohortSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class GeneratedCohort:
    """Generated visits, static attributes, labels and the ground truth behind them."""

    patient_ids: np.ndarray
    visits: VisitTable
    demographics: dict[str, np.ndarray]
    labels: dict[int, np.ndarray]
    latent: np.ndarray
    eta: np.ndarray
    truth: CohortSpec
    features: tuple[str, ...]

    def label_rows(self) -> Iterator[tuple[str, int, int]]:
        for w, y in self.labels.items():
            for pid, v in zip(self.patient_ids, y):
                yield str(pid), w, int(v)

    def profiles(self, catalog: FeatureCatalog, grid: IntervalGrid) -> CohortProfiles:
        return profiles_from_table(self.visits, self.demographics, catalog, grid)

    def strata(self) -> np.ndarray:
        """Gender x age band x race key per patient, for training downsampling."""
        band = _age_band(self.demographics["Age"]).astype(str)
        gender = self.demographics["Gender"].astype(str)
        race = self.demographics["Race"].astype(str)
        return np.char.add(np.char.add(np.char.add(np.char.add(gender, "|"), band), "|"), race)


_AGE_BANDS = ("18-29", "30-39", "40-49", "50-59", "60-69", "70-79", "80-100")
_AGE_LO = np.array([18, 30, 40, 50, 60, 70, 80])


# --------------------------------------------------------------------------
# uniform block layout

@dataclass(frozen=True)
class _Layout:
    n_static: int
    n_feat: int
    n_util: int

    # per patient: label U, age-within-band U, one U per static attribute,
    # per feature [base, dur, onset x4, record x4, date x4],
    # per utilization feature and quarter [count, date x SLOTS, visn x SLOTS]
    @property
    def label(self) -> int:
        return 0

    @property
    def age(self) -> int:
        return 1

    def static(self, j: int) -> int:
        return 2 + j

    def feat(self, f: int) -> int:
        return 2 + self.n_static + 14 * f

    def util(self, c: int, q: int) -> int:
        return 2 + self.n_static + 14 * self.n_feat + (c * N_QUARTERS + q) * (1 + 2 * UTIL_SLOTS)

    @property
    def width(self) -> int:
        raw = 2 + self.n_static + 14 * self.n_feat + self.n_util * N_QUARTERS * (1 + 2 * UTIL_SLOTS)
        return raw + (-raw) % 4  # whole Philox counter blocks


def _uniform_block(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    bitgen = np.random.Philox(key=int(seed))
    bitgen.advance(start * width // 4)
    return np.random.Generator(bitgen).random((stop - start, width))


def _static_mix(spec: CohortSpec, catalog: FeatureCatalog) -> list[tuple[str, tuple[str, ...], np.ndarray]]:
    """(name, levels, cumulative probs) for every static attribute that is drawn."""
    out = []
    for f in catalog.static:
        if f.name in spec.strata_mix:
            mix = spec.strata_mix[f.name]
            levels = tuple(mix)
            probs = np.array([mix[l] for l in levels], dtype=float)
        else:
            levels = tuple(l for l in f.levels if l != UNKNOWN) + (UNKNOWN,)
            k = len(levels) - 1
            probs = np.array([0.97 / k] * k + [0.03])
        out.append((f.name, levels, np.cumsum(probs)))
    return out


def _draw_levels(u: np.ndarray, levels: tuple[str, ...], cum: np.ndarray) -> np.ndarray:
    idx = np.minimum(np.searchsorted(cum, u, side="right"), len(levels) - 1)
    return np.asarray(levels, dtype=object)[idx]


def _simulate_latent(U: np.ndarray, lay: _Layout, procs: list[FeatureProcess]) -> tuple[np.ndarray, np.ndarray]:
    """Latent activity and recording, both ``(m, features, quarters)`` bool."""
    m = U.shape[0]
    latent = np.zeros((m, len(procs), N_QUARTERS), dtype=bool)
    record = np.zeros_like(latent)
    for f, p in enumerate(procs):
        o = lay.feat(f)
        u_base, u_dur = U[:, o], U[:, o + 1]
        u_on = U[:, o + 2:o + 6]
        u_rec = U[:, o + 6:o + 10]
        if p.dynamics in ("chronic", "ever"):
            active = u_base < p.baseline
            for q in range(N_QUARTERS):
                active = active | (u_on[:, q] < p.onset_hazard)
                latent[:, f, q] = active
        elif p.dynamics == "episodic":
            latent[:, f, :] = u_on < p.onset_hazard
        else:
            d = p.duration
            rem = np.where(u_base < p.baseline, 1 + np.floor(u_dur * d).astype(np.int64), 0)
            for q in range(N_QUARTERS):
                if q > 0:
                    rem = np.maximum(rem - 1, 0)
                start = (rem == 0) & (u_on[:, q] < p.onset_hazard)
                rem = np.where(start, d, rem)
                latent[:, f, q] = rem > 0
        record[:, f, :] = latent[:, f, :] & (u_rec < p.record_prob)
    return latent, record


def _linear_predictor(spec: CohortSpec, names: list[str], latent: np.ndarray,
                      demo: Mapping[str, np.ndarray]) -> np.ndarray:
    eta = np.zeros(latent.shape[0])
    index = {n: i for i, n in enumerate(names)}
    for key, coef in spec.true_coefficients.items():
        if "=" in key:
            attr, level = key.split("=", 1)
            if attr not in demo:
                raise SynthError(f"coefficient on unknown attribute {attr!r}")
            values = demo[attr]
            if attr == "Age":
                values = _age_band(values)
            eta += coef * (values.astype(str) == level)
            continue
        name, _, q = key.partition("@")
        if name not in index:
            raise SynthError(f"coefficient on feature without a process: {name!r}")
        qi = N_QUARTERS - 1 if not q else int(q.strip().upper().lstrip("Q")) - 1
        if not 0 <= qi < N_QUARTERS:
            raise SynthError(f"bad quarter in coefficient key {key!r}")
        eta += coef * latent[:, index[name], qi]
    return eta


def _age_band(ages: np.ndarray) -> np.ndarray:
    """Band label per age; non-numeric or under-18 ages map to unknown."""
    a = np.array([float(x) if str(x).lstrip("-").isdigit() else -1.0 for x in np.asarray(ages).ravel()])
    idx = np.searchsorted(_AGE_LO, a, side="right") - 1
    bands = np.asarray(_AGE_BANDS + (UNKNOWN,), dtype=object)
    return bands[np.where(idx >= 0, idx, len(_AGE_BANDS))]


def calibrate_intercept(eta: np.ndarray, target: float) -> float:
    """Intercept b with mean(sigmoid(b + eta)) == target, by bisection."""
    if not 0 < target < 1:
        raise SynthError("target prevalence must lie in (0, 1)")
    f = lambda b: float(expit(b + eta).mean()) - target
    return float(optimize.bisect(f, -60.0, 60.0, xtol=1e-13, maxiter=500))


def _representative_code(catalog: FeatureCatalog, name: str, stop: bool) -> str:
    feat = catalog[name]
    patterns = feat.stop_code_patterns if stop else feat.code_patterns
    best: tuple[int, str] | None = None
    for p in patterns:
        code = p.stem if p.is_wildcard else p.pattern
        hits = catalog.categorize((), (code,)) if stop else catalog.categorize((code,), ())
        if name in hits and (best is None or len(hits) < best[0]):
            best = (len(hits), code)
    if best is None:
        raise SynthError(f"no code maps to {name!r}")
    # overlapping families (e.g. cocaine within drug abuse) fall back to the most specific code
    return best[1]


def generate_cohort(spec: CohortSpec, catalog: FeatureCatalog | None = None,
                    chunk: int = 20_000) -> GeneratedCohort:
    """Generate visits, demographics and cumulative-window labels for ``spec``."""
    catalog = catalog or default_catalog()
    names = list(spec.event_process)
    procs = [spec.event_process[n] for n in names]
    for n in names:
        if n not in catalog or not catalog[n].temporal:
            raise SynthError(f"event process for non-temporal feature {n!r}")
    util_names = list(spec.utilization_rates)
    for n in util_names:
        if n not in catalog or catalog[n].count != "visits":
            raise SynthError(f"utilization rate for non visit-count feature {n!r}")
    mixes = _static_mix(spec, catalog)
    lay = _Layout(len(mixes), len(procs), len(util_names))
    n = spec.n_patients
    dx_codes = [_representative_code(catalog, nm, False) for nm in names]
    stop_codes = [_representative_code(catalog, nm, True) for nm in util_names]
    q_start = np.array([dt.date(spec.year, 3 * q + 1, 1).toordinal() for q in range(N_QUARTERS)]
                       + [dt.date(spec.year + 1, 1, 1).toordinal()])
    q_len = np.diff(q_start)
    visn_levels = catalog["VISN"].levels[:-1] if "VISN" in catalog else ("1",)

    latent = np.zeros((n, len(procs), N_QUARTERS), dtype=bool)
    u_label = np.empty(n)
    demo = {name: np.empty(n, dtype=object) for name, _, _ in mixes}
    ages = np.empty(n, dtype=np.int64)
    v_pat, v_day, v_visn, v_dx, v_stop = [], [], [], [], []

    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        U = _uniform_block(spec.seed, lo, hi, lay.width)
        pid = np.arange(lo, hi)
        u_label[lo:hi] = U[:, lay.label]
        for j, (name, levels, cum) in enumerate(mixes):
            demo[name][lo:hi] = _draw_levels(U[:, lay.static(j)], levels, cum)
        # integer age uniform within the drawn band
        band = demo["Age"][lo:hi] if "Age" in demo else np.full(hi - lo, UNKNOWN, dtype=object)
        lo_age = np.array([int(b.split("-")[0]) if b != UNKNOWN else -1 for b in band])
        hi_age = np.array([int(b.split("-")[1]) if b != UNKNOWN else -1 for b in band])
        ages[lo:hi] = np.where(lo_age >= 0, lo_age + np.floor(U[:, lay.age] * (hi_age - lo_age + 1)), -1)
        home_visn = demo["VISN"][lo:hi] if "VISN" in demo else np.full(hi - lo, visn_levels[0], dtype=object)

        lat, rec = _simulate_latent(U, lay, procs)
        latent[lo:hi] = lat
        for f in range(len(procs)):
            o = lay.feat(f)
            pi, qi = np.nonzero(rec[:, f, :])
            day = q_start[qi] + np.floor(U[pi, o + 10 + qi] * q_len[qi]).astype(np.int64)
            v_pat.append(pid[pi]); v_day.append(day); v_visn.append(home_visn[pi])
            v_dx.append(np.full(pi.size, f, np.int64)); v_stop.append(np.full(pi.size, -1, np.int64))
        for c, uname in enumerate(util_names):
            lam = spec.utilization_rates[uname]
            for q in range(N_QUARTERS):
                o = lay.util(c, q)
                cnt = np.minimum(stats.poisson.ppf(U[:, o], lam).astype(np.int64), UTIL_SLOTS)
                for s in range(UTIL_SLOTS):
                    pi = np.flatnonzero(cnt > s)
                    day = q_start[q] + np.floor(U[pi, o + 1 + s] * q_len[q]).astype(np.int64)
                    away = U[pi, o + 1 + UTIL_SLOTS + s] < 0.05
                    alt = np.asarray(visn_levels, dtype=object)[
                        np.floor(U[pi, o + 1 + UTIL_SLOTS + s] / 0.05 * len(visn_levels)).astype(np.int64)
                        % len(visn_levels)]
                    v_pat.append(pid[pi]); v_day.append(day)
                    v_visn.append(np.where(away, alt, home_visn[pi]))
                    v_dx.append(np.full(pi.size, -1, np.int64)); v_stop.append(np.full(pi.size, c, np.int64))

    if "Age" in demo:
        demo["Age"] = np.where(ages >= 0, ages.astype(str), UNKNOWN).astype(object)
    vp, vd = np.concatenate(v_pat), np.concatenate(v_day)
    vv = np.concatenate(v_visn).astype(object)
    vdx, vst = np.concatenate(v_dx), np.concatenate(v_stop)
    order = np.lexsort((vst, vdx, vd, vp))
    vp, vd, vv, vdx, vst = vp[order], vd[order], vv[order], vdx[order], vst[order]
    has_dx, has_st = np.flatnonzero(vdx >= 0), np.flatnonzero(vst >= 0)
    patient_ids = np.array([f"P{i:07d}" for i in range(n)], dtype=object)
    table = VisitTable(
        patient_ids=patient_ids, visit_patient=vp, visit_day=vd, visit_visn=vv,
        dx_visit=has_dx, dx_code=np.asarray(dx_codes, dtype=object)[vdx[has_dx]] if has_dx.size else np.zeros(0, object),
        stop_visit=has_st,
        stop_code=np.asarray(stop_codes, dtype=object)[vst[has_st]] if has_st.size else np.zeros(0, object),
    )

    eta = _linear_predictor(spec, names, latent, {**demo, "Age": ages})
    intercepts = spec.true_intercept_per_window
    if intercepts is None:
        intercepts = {w: calibrate_intercept(eta, t) for w, t in spec.prevalence_targets.items()}
    labels = {w: (u_label < expit(b + eta)).astype(np.uint8) for w, b in intercepts.items()}
    truth = replace(spec, true_intercept_per_window=intercepts)
    return GeneratedCohort(patient_ids, table, demo, labels, latent.astype(np.uint8), eta, truth, tuple(names))


# --------------------------------------------------------------------------
# oracle

@dataclass(frozen=True)
class OracleAUC:
    roc_auc: float
    pr_auc: float
    roc_se: float
    pr_se: float

    def __iter__(self):
        return iter((self.roc_auc, self.pr_auc))


def oracle_auc(spec: CohortSpec, n_mc: int = 100_000, window: int | None = None,
               seed: int | None = None, batches: int = 10) -> OracleAUC:
    """Monte-Carlo AUCs of the Bayes scorer ``sigmoid(b + eta)`` on latent truth.

    Outcomes are integrated out: each simulated patient contributes weight
    ``r`` as a positive and ``1 - r`` as a negative, leaving only sampling
    error in ``eta``. Standard errors come from ``batches`` batch means.
    """
    from .eval import pr_auc_weighted, roc_auc_weighted

    if n_mc < 10_000:
        raise SynthError("n_mc must be at least 10,000")
    window = max(spec.prevalence_targets) if window is None else int(window)
    if window not in spec.prevalence_targets:
        raise SynthError(f"no target for window {window}")
    mc_seed = (int(spec.seed) ^ 0x9E3779B97F4A7C15) % 2**64 if seed is None else seed
    cohort_spec = replace(spec, n_patients=n_mc, seed=mc_seed, utilization_rates={})
    names = list(spec.event_process)
    procs = [spec.event_process[nm] for nm in names]
    cat = default_catalog()
    mixes = _static_mix(cohort_spec, cat)
    lay = _Layout(len(mixes), len(procs), 0)
    U = _uniform_block(mc_seed, 0, n_mc, lay.width)
    demo = {name: _draw_levels(U[:, lay.static(j)], levels, cum) for j, (name, levels, cum) in enumerate(mixes)}
    latent, _ = _simulate_latent(U, lay, procs)
    if "Age" in demo:
        demo["Age"] = np.array([int(b.split("-")[0]) if b != UNKNOWN else -1 for b in demo["Age"]])
    eta = _linear_predictor(spec, names, latent, demo)
    if spec.true_intercept_per_window is not None:
        b = spec.true_intercept_per_window[window]
    else:
        b = calibrate_intercept(eta, spec.prevalence_targets[window])
    r = expit(b + eta)
    roc = float(roc_auc_weighted(eta, r, 1 - r))
    pr = float(pr_auc_weighted(eta, r, 1 - r))
    parts = np.array_split(np.arange(n_mc), batches)
    rocs = [float(roc_auc_weighted(eta[p], r[p], 1 - r[p])) for p in parts]
    prs = [float(pr_auc_weighted(eta[p], r[p], 1 - r[p])) for p in parts]
    se = lambda v: float(np.std(v, ddof=1) / math.sqrt(batches))
    return OracleAUC(roc, pr, se(rocs), se(prs))


# --------------------------------------------------------------------------
# reference spec

def reference_spec(n_patients: int = 200_000, seed: int = 0,
                   prevalence_targets: Mapping[int, float] | None = None) -> CohortSpec:
    """Shipped cohort spec with VA-like strata and planted persistence.

    Chronic conditions are recorded intermittently (fill recovers their
    current state); time-limited SBFH/substance episodes last three quarters
    (onset plus a two-quarter tail); labels depend on activity in the last
    quarter of the window.
    """
    tl = lambda h, r, b=0.0: FeatureProcess("time_limited", h, b, 3, r)
    ch = lambda h, b, r: FeatureProcess("chronic", h, b, None, r)
    process = {
        "Opioid Use Disorder": ch(0.006, 0.03, 0.45),
        "Alcohol Use Disorder": ch(0.006, 0.06, 0.45),
        "Psychoses": ch(0.004, 0.03, 0.45),
        "Bipolar Disorder": ch(0.004, 0.03, 0.45),
        "Hypertension": ch(0.01, 0.35, 0.6),
        "Diabetes": ch(0.006, 0.2, 0.6),
        "Housing Problems": tl(0.012, 0.5, 0.01),
        "Employment Or Financial Problems": tl(0.01, 0.5, 0.01),
        "Legal Problems": tl(0.006, 0.5, 0.005),
        "Non Specific Psychosocial Needs": tl(0.01, 0.5, 0.01),
        "Drug Abuse": tl(0.01, 0.5, 0.01),
        "Food Insecurity": tl(0.005, 0.5, 0.005),
        "Depression": tl(0.04, 0.5, 0.04),
        "Anxiety Disorder": tl(0.04, 0.5, 0.04),
        "Posttraumatic Stress Disorder": tl(0.03, 0.5, 0.03),
        "Pain": FeatureProcess("time_limited", 0.08, 0.08, 2, 0.6),
        "Violence Problems": FeatureProcess("episodic", 0.005, 0.0, None, 0.8),
        "Influenza": FeatureProcess("episodic", 0.02, 0.0, None, 0.8),
        "Solid Tumor Without Metastasis": FeatureProcess("ever", 0.005, 0.05, None, 0.5),
    }
    coefs = {
        "Opioid Use Disorder": 1.2,
        "Alcohol Use Disorder": 0.9,
        "Psychoses": 0.9,
        "Bipolar Disorder": 0.7,
        "Hypertension": -0.2,
        "Housing Problems": 2.5,
        "Employment Or Financial Problems": 1.3,
        "Legal Problems": 1.3,
        "Non Specific Psychosocial Needs": 1.0,
        "Drug Abuse": 1.0,
        "Food Insecurity": 1.0,
        "Depression": 0.5,
        "Anxiety Disorder": 0.3,
        "Posttraumatic Stress Disorder": 0.4,
        "Pain": 0.2,
        "Violence Problems": 0.8,
        "Solid Tumor Without Metastasis": -0.3,
        "Age=18-29": 0.3, "Age=30-39": 0.3, "Age=40-49": 0.4, "Age=50-59": 0.5,
        "Age=70-79": -0.8, "Age=80-100": -1.5,
        "Gender=male": 0.2,
        "Race=Black": 0.5,
    }
    mix = {
        "Gender": {"male": 0.9, "female": 0.1},
        "Age": {"18-29": 0.06, "30-39": 0.09, "40-49": 0.11, "50-59": 0.16, "60-69": 0.25,
                "70-79": 0.22, "80-100": 0.11},
        "Race": {"White": 0.72, "Black": 0.16, "Asian": 0.02, "American Indian": 0.01,
                 "Native Hawaiian": 0.01, "unknown": 0.08},
        "Ethnicity": {"Not Hispanic": 0.87, "Hispanic": 0.07, "unknown": 0.06},
    }
    util = {"Primary Care Visits": 0.9, "Mental Health Visits": 0.4,
            "Specialty Care Visits": 0.5, "Emergency / Urgent-care Visits": 0.15}
    return CohortSpec(
        n_patients=n_patients,
        prevalence_targets=dict(prevalence_targets or TARGET_PREVALENCE),
        strata_mix=mix,
        event_process=process,
        true_coefficients=coefs,
        seed=seed,
        utilization_rates=util,
    )
