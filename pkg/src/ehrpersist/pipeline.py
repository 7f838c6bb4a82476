"""Patient-level splitting, training downsampling, elastic-net training and score ingestion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np
from scipy import sparse
from scipy.special import expit

from .eval import pr_auc, roc_auc

__all__ = [
    "PipelineError",
    "Split",
    "SplitAssignment",
    "DownsampleReport",
    "ModelParams",
    "ScoreSet",
    "FitResult",
    "split",
    "downsample_train",
    "train_elastic_net",
    "objective",
    "smooth_objective_grad",
    "predict",
    "grid_search",
    "DEFAULT_GRID",
    "ingest_scores",
    "write_scores",
    "AblationArm",
    "run_ablation",
]

FRACTIONS = (0.92, 0.03, 0.05)
DEFAULT_C = (0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0)
DEFAULT_L1 = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0)
DEFAULT_GRID = tuple((c, l) for c in DEFAULT_C for l in DEFAULT_L1)


class PipelineError(ValueError):
    pass


class Split(str, Enum):
    TRAIN = "Train"
    VALIDATION = "Validation"
    TEST = "Test"


@dataclass(frozen=True)
class SplitAssignment:
    patient_ids: tuple[str, ...]
    assignment: tuple[Split, ...]
    seed: int
    fractions: tuple[float, float, float] = FRACTIONS

    def ids(self, which: Split | str) -> tuple[str, ...]:
        which = Split(which)
        return tuple(p for p, s in zip(self.patient_ids, self.assignment) if s is which)

    def mask(self, which: Split | str) -> np.ndarray:
        which = Split(which)
        return np.array([s is which for s in self.assignment])

    def as_dict(self) -> dict[str, Split]:
        return dict(zip(self.patient_ids, self.assignment))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["patient_id", "split"])
        for p, s in sorted(zip(self.patient_ids, self.assignment)):
            w.writerow([p, s.value])
        return buf.getvalue()


def split(patient_ids: Sequence, seed: int = 0, fractions: tuple[float, float, float] = FRACTIONS) -> SplitAssignment:
    """Patient-level train/validation/test partition.

    Ids are sorted first so the result depends only on the id set and seed;
    test and validation sizes are ``round(f * n)``, training takes the rest.
    """
    ids = [str(p) for p in patient_ids]
    n = len(ids)
    if n < 100:
        raise PipelineError(f"need at least 100 patients to split, got {n}")
    if len(set(ids)) != n:
        raise PipelineError("duplicate patient ids")
    if not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise PipelineError("split fractions must sum to 1")
    order = np.array(sorted(ids), dtype=object)
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
    shuffled = order[perm]
    n_test = int(np.floor(fractions[2] * n + 0.5))
    n_val = int(np.floor(fractions[1] * n + 0.5))
    label = {}
    for i, p in enumerate(shuffled):
        label[p] = Split.TEST if i < n_test else Split.VALIDATION if i < n_test + n_val else Split.TRAIN
    return SplitAssignment(tuple(ids), tuple(label[p] for p in ids), seed, fractions)


@dataclass(frozen=True)
class DownsampleReport:
    n_input: int
    n_retained: int
    positives: int
    negatives_retained: int
    strata: int
    strata_without_positives: int
    strata_short_of_negatives: int

    @property
    def global_ratio(self) -> float:
        """Retained negatives per retained positive."""
        return self.negatives_retained / self.positives if self.positives else float("nan")


def downsample_train(labels: Sequence[int], strata: Sequence, seed: int = 0) -> tuple[np.ndarray, DownsampleReport]:
    """Within each stratum keep every positive and an equal number of negatives.

    Returns sorted positions (into the inputs) of retained patients. Strata
    with no positives contribute nobody; strata with fewer negatives than
    positives keep all of their negatives.
    """
    y = np.asarray(labels).astype(np.int64)
    st = np.asarray(strata).astype(str)
    if y.shape != st.shape:
        raise PipelineError("labels and strata differ in length")
    keys, inv = np.unique(st, return_inverse=True)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    keep = [np.flatnonzero(y == 1)]
    no_pos = short = neg_kept = 0
    for s in range(keys.size):
        members = np.flatnonzero(inv == s)
        pos = int(y[members].sum())
        negs = members[y[members] == 0]
        if pos == 0:
            no_pos += 1
            continue
        if negs.size < pos:
            short += 1
        take = rng.choice(negs, size=min(pos, negs.size), replace=False) if negs.size else negs
        keep.append(take)
        neg_kept += take.size
    idx = np.sort(np.concatenate(keep))
    report = DownsampleReport(int(y.size), int(idx.size), int(y.sum()), int(neg_kept),
                              int(keys.size), no_pos, short)
    return idx, report


# --------------------------------------------------------------------------
# elastic net

@dataclass(frozen=True)
class ModelParams:
    weights: Mapping[str, float]
    intercept: float
    C: float
    l1_ratio: float
    max_iter: int
    granularity: str | None = None
    representation: str | None = None

    def coef_vector(self, names: Sequence[str]) -> np.ndarray:
        extra = set(self.weights) - set(names)
        if extra:
            raise PipelineError(f"model weights for unknown features: {sorted(extra)[:5]}")
        return np.array([self.weights.get(n, 0.0) for n in names])

    def to_text(self) -> str:
        """Versioned audit artifact: header lines then ``name<TAB>weight``."""
        lines = ["# ehrpersist-model v1", f"C\t{self.C!r}", f"l1_ratio\t{self.l1_ratio!r}",
                 f"max_iter\t{self.max_iter}", f"granularity\t{self.granularity or ''}",
                 f"representation\t{self.representation or ''}", f"intercept\t{self.intercept!r}"]
        lines += [f"w:{k}\t{v!r}" for k, v in self.weights.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModelParams":
        rows = [l.split("\t", 1) for l in text.splitlines() if l and not l.startswith("#")]
        head = {k: v for k, v in rows if not k.startswith("w:")}
        weights = {k[2:]: float(v) for k, v in rows if k.startswith("w:")}
        return cls(weights, float(head["intercept"]), float(head["C"]), float(head["l1_ratio"]),
                   int(head["max_iter"]), head.get("granularity") or None, head.get("representation") or None)


@dataclass
class FitResult:
    params: ModelParams
    converged: bool
    iterations: int
    loss_trace: np.ndarray


def _as_csc(X) -> sparse.csc_matrix:
    if sparse.issparse(X):
        return sparse.csc_matrix(X, dtype=np.float64)
    return sparse.csc_matrix(np.asarray(X, dtype=np.float64))


def objective(w: np.ndarray, b: float, X, y, C: float, l1_ratio: float) -> float:
    """Mean logistic loss + (1/C) * [l1 * |w|_1 + (1 - l1)/2 * |w|_2^2]."""
    m = np.asarray(X @ w).ravel() + b
    y = np.asarray(y, dtype=float)
    loss = np.mean(np.logaddexp(0.0, m) - y * m)
    return float(loss + (l1_ratio * np.abs(w).sum() + 0.5 * (1 - l1_ratio) * np.dot(w, w)) / C)


def smooth_objective_grad(w: np.ndarray, b: float, X, y, C: float, l1_ratio: float) -> tuple[float, np.ndarray, float]:
    """Value and gradient (w, b) of the differentiable part (loss + L2 term)."""
    X = X if sparse.issparse(X) else np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    m = np.asarray(X @ w).ravel() + b
    r = expit(m) - y
    val = np.mean(np.logaddexp(0.0, m) - y * m) + 0.5 * (1 - l1_ratio) * np.dot(w, w) / C
    gw = np.asarray(X.T @ r).ravel() / n + (1 - l1_ratio) * w / C
    return float(val), gw, float(r.sum() / n)


@numba.njit(cache=True)
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@numba.njit(cache=True)
def _softplus(z):
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


@numba.njit(cache=True)
def _penalty(w, lam1, lam2):
    pen = 0.0
    for j in range(w.size):
        pen += lam1 * abs(w[j]) + 0.5 * lam2 * w[j] * w[j]
    return pen


@numba.njit(cache=True)
def _mean_loss(m, y):
    loss = 0.0
    for i in range(y.size):
        loss += _softplus(m[i]) - y[i] * m[i]
    return loss / y.size


@numba.njit(cache=True)
def _cd_solve(indptr, indices, data, y, w, b, active, lam1, lam2, max_iter, tol, trace):
    """Proximal Newton with coordinate-descent inner solves.

    Each outer step minimizes a second-order model of the mean logistic loss
    plus the exact elastic-net penalty by cyclic coordinate updates, then
    backtracks along the step until the true objective decreases (Armijo),
    so the recorded trace is monotone. Stops when max |step| < tol.
    """
    n = y.size
    p = w.size
    m = np.full(n, b)
    for j in range(p):
        for k in range(indptr[j], indptr[j + 1]):
            m[indices[k]] += w[j] * data[k]
    prob = np.empty(n)
    wt = np.empty(n)
    grad = np.empty(p)
    curv = np.empty(p)
    d = np.empty(p)
    r = np.empty(n)
    f_old = _mean_loss(m, y) + _penalty(w, lam1, lam2)
    it = 0
    converged = False
    while it < max_iter:
        for i in range(n):
            prob[i] = _sigmoid(m[i])
            wt[i] = max(prob[i] * (1.0 - prob[i]), 1e-10)
        gb = 0.0
        hb = 0.0
        for i in range(n):
            gb += prob[i] - y[i]
            hb += wt[i]
        gb /= n
        hb /= n
        for j in range(p):
            g = 0.0
            h = 0.0
            for k in range(indptr[j], indptr[j + 1]):
                i = indices[k]
                g += (prob[i] - y[i]) * data[k]
                h += wt[i] * data[k] * data[k]
            grad[j] = g / n
            curv[j] = h / n + 1e-12
            d[j] = 0.0
        for i in range(n):
            r[i] = 0.0
        db = 0.0
        # inner coordinate descent on the quadratic model
        for sweep in range(50):
            inner = 0.0
            gq = gb
            for i in range(n):
                gq += wt[i] * r[i] / n
            step = -gq / hb
            if step != 0.0:
                db += step
                for i in range(n):
                    r[i] += step
                inner = abs(step)
            for j in range(p):
                if not active[j]:
                    continue
                gq = grad[j]
                for k in range(indptr[j], indptr[j + 1]):
                    gq += wt[indices[k]] * data[k] * r[indices[k]] / n
                h = curv[j]
                cur = w[j] + d[j]
                z = h * cur - gq
                if z > lam1:
                    v = (z - lam1) / (h + lam2)
                elif z < -lam1:
                    v = (z + lam1) / (h + lam2)
                else:
                    v = 0.0
                delta = v - cur
                if delta != 0.0:
                    d[j] += delta
                    for k in range(indptr[j], indptr[j + 1]):
                        r[indices[k]] += delta * data[k]
                    if abs(delta) > inner:
                        inner = abs(delta)
            if inner < 0.1 * tol:
                break
        # Armijo backtracking on the composite objective
        pred = gb * db
        for j in range(p):
            pred += grad[j] * d[j]
        wn = w + d
        pred += _penalty(wn, lam1, lam2) - _penalty(w, lam1, lam2)
        t = 1.0
        mn = np.empty(n)
        accepted = False
        for _ in range(60):
            for i in range(n):
                mn[i] = m[i] + t * r[i]
            for j in range(p):
                wn[j] = w[j] + t * d[j]
            f_new = _mean_loss(mn, y) + _penalty(wn, lam1, lam2)
            if f_new <= f_old + 1e-4 * t * pred or f_new <= f_old and t < 1e-6:
                accepted = True
                break
            t *= 0.5
        max_step = abs(t * db)
        if accepted and f_new <= f_old:
            for j in range(p):
                if abs(t * d[j]) > max_step:
                    max_step = abs(t * d[j])
                w[j] = wn[j]
            b += t * db
            for i in range(n):
                m[i] = mn[i]
            f_old = f_new
        else:
            max_step = 0.0
        trace[it] = f_old
        it += 1
        if max_step < tol:
            converged = True
            break
    return b, it, converged


def train_elastic_net(features, labels, C: float, l1_ratio: float, max_iter: int = 2000,
                      names: Sequence[str] | None = None, tol: float = 1e-6) -> FitResult:
    """Fit penalized logistic regression; intercept unpenalized.

    Coordinates whose column is constant are fixed at zero: the intercept
    absorbs them at no penalty, so zero is optimal. ``max_iter`` bounds the
    outer (Newton) iterations; running out is reported through
    ``FitResult.converged`` with the partial solution returned.
    """
    if not C > 0:
        raise PipelineError("C must be positive")
    if not 0 <= l1_ratio <= 1:
        raise PipelineError("l1_ratio must lie in [0, 1]")
    y = np.asarray(labels, dtype=np.float64).ravel()
    if not np.isin(y, (0.0, 1.0)).all():
        raise PipelineError("labels must be binary")
    Xc = _as_csc(features)
    n, p = Xc.shape
    if y.size != n:
        raise PipelineError("features and labels differ in length")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    if len(names) != p:
        raise PipelineError("names must match feature columns")
    sq = np.asarray(Xc.multiply(Xc).sum(axis=0)).ravel()
    mean = np.asarray(Xc.sum(axis=0)).ravel() / n
    constant = np.isclose(sq / n, mean**2, rtol=0, atol=1e-14)
    active = ~constant & (sq > 0)
    rate = min(max(y.mean(), 1e-12), 1 - 1e-12)
    b0 = math.log(rate / (1 - rate))
    w = np.zeros(p)
    trace = np.zeros(max_iter)
    b, iters, conv = _cd_solve(Xc.indptr.astype(np.int64), Xc.indices.astype(np.int64), Xc.data,
                               y, w, b0, active, l1_ratio / C, (1 - l1_ratio) / C,
                               int(max_iter), float(tol), trace)
    params = ModelParams(dict(zip(names, (float(v) for v in w))), float(b), float(C), float(l1_ratio), int(max_iter))
    return FitResult(params, bool(conv), int(iters), trace[:iters].copy())


def predict(params: ModelParams, features, names: Sequence[str]) -> np.ndarray:
    """Probability scores; a monotone function of the linear predictor."""
    w = params.coef_vector(names)
    m = np.asarray(features @ w if sparse.issparse(features) else np.asarray(features, dtype=float) @ w).ravel()
    return expit(m + params.intercept)


@dataclass(frozen=True)
class LeaderboardRow:
    C: float
    l1_ratio: float
    val_pr_auc: float
    converged: bool
    iterations: int
    nonzero: int


def grid_search(train_X, train_y, val_X, val_y, grid: Iterable[tuple[float, float]] = DEFAULT_GRID,
                names: Sequence[str] | None = None, max_iter: int = 2000
                ) -> tuple[ModelParams, list[LeaderboardRow]]:
    """Fit every (C, l1_ratio) and keep the best validation PR-AUC.

    Ties go to the smaller C, then the smaller l1_ratio.
    """
    grid = list(grid)
    if not grid:
        raise PipelineError("empty hyperparameter grid")
    names = tuple(names) if names is not None else None
    board, fits = [], []
    for C, l1 in grid:
        fit = train_elastic_net(train_X, train_y, C, l1, max_iter, names)
        nm = tuple(fit.params.weights)
        score = pr_auc(predict(fit.params, val_X, nm), val_y)
        board.append(LeaderboardRow(float(C), float(l1), score, fit.converged, fit.iterations,
                                    int(sum(v != 0 for v in fit.params.weights.values()))))
        fits.append(fit.params)
    best = min(range(len(grid)), key=lambda i: (-board[i].val_pr_auc, board[i].C, board[i].l1_ratio))
    return fits[best], board


# --------------------------------------------------------------------------
# external scores

@dataclass(frozen=True)
class ScoreSet:
    scores: Mapping[str, float]
    provenance: str = "NativeBaseline"

    def aligned(self, patient_ids: Sequence[str]) -> np.ndarray:
        missing = [p for p in patient_ids if p not in self.scores]
        if missing:
            raise PipelineError(f"{len(missing)} patients lack scores, e.g. {missing[0]!r}")
        return np.array([self.scores[p] for p in patient_ids], dtype=float)


def ingest_scores(path_or_text: str | Path, cohort_ids: Iterable[str] | None = None,
                  provenance: str = "External") -> ScoreSet:
    """Read and validate a ``patient_id,score`` CSV file (or CSV text)."""
    text = Path(path_or_text).read_text(encoding="utf-8") if (
        isinstance(path_or_text, Path) or "\n" not in str(path_or_text)) else str(path_or_text)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"patient_id", "score"} <= set(reader.fieldnames):
        raise PipelineError("score file needs a 'patient_id,score' header")
    known = set(map(str, cohort_ids)) if cohort_ids is not None else None
    out: dict[str, float] = {}
    for lineno, row in enumerate(reader, 2):
        pid = row["patient_id"].strip()
        try:
            s = float(row["score"])
        except (TypeError, ValueError):
            raise PipelineError(f"line {lineno}: score is not a number") from None
        if not math.isfinite(s) or not 0.0 <= s <= 1.0:
            raise PipelineError(f"line {lineno}: score {s} out of range [0, 1]")
        if pid in out:
            raise PipelineError(f"line {lineno}: duplicate patient id {pid!r}")
        if known is not None and pid not in known:
            raise PipelineError(f"line {lineno}: unknown patient id {pid!r}")
        out[pid] = s
    return ScoreSet(out, provenance)


def write_scores(scores: ScoreSet, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "score"])
        for pid in sorted(scores.scores):
            w.writerow([pid, repr(float(scores.scores[pid]))])


# --------------------------------------------------------------------------
# representation ablation

ARMS = ("static", "time_varying", "time_varying_no_fill")


@dataclass(frozen=True)
class AblationArm:
    representation: str
    C: float
    l1_ratio: float
    val_pr_auc: float
    test_pr_auc: float
    test_roc_auc: float
    n_features: int


def run_ablation(cohort, labels, strata, seed: int = 0,
                 grid: Iterable[tuple[float, float]] = DEFAULT_GRID,
                 arms: Sequence[str] = ARMS, max_iter: int = 2000) -> list[AblationArm]:
    """Grid-searched elastic net per representation on one shared split.

    Every arm sees the same split, the same downsampled training rows and
    the same grid; only the design matrix differs.
    """
    from .represent import design_matrix

    y = np.asarray(labels).astype(np.int64)
    sp = split(cohort.patient_ids, seed)
    tr = np.flatnonzero(sp.mask(Split.TRAIN))
    keep, _ = downsample_train(y[tr], np.asarray(strata)[tr], seed)
    tr = tr[keep]
    va, te = sp.mask(Split.VALIDATION), sp.mask(Split.TEST)
    grid = list(grid)
    out = []
    for arm in arms:
        names, X = design_matrix(cohort, arm)
        best, board = grid_search(X[tr], y[tr], X[va], y[va], grid, names, max_iter)
        row = next(r for r in board if r.C == best.C and r.l1_ratio == best.l1_ratio)
        s = predict(best, X[te], names)
        out.append(AblationArm(arm, best.C, best.l1_ratio, row.val_pr_auc,
                               pr_auc(s, y[te]), roc_auc(s, y[te]), len(names)))
    return out
