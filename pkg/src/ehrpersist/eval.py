"""Discrimination metrics, risk tiers and stratified bootstrap intervals.

Every metric has an unweighted form taking ``(scores, labels)`` and a
weighted kernel taking separate positive/negative weights per item. The
bootstrap expresses each stratified resample as integer count weights, which
gives the same answer as materializing the resample but in one vectorized
pass over a fixed sort order.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "MetricError",
    "TIER_FRACTIONS",
    "BootstrapCI",
    "TierMetrics",
    "MetricReport",
    "roc_auc",
    "pr_auc",
    "roc_auc_weighted",
    "pr_auc_weighted",
    "tier_metrics",
    "tier_metric",
    "bootstrap_ci",
    "evaluate",
    "curve_points",
]

TIER_FRACTIONS = (0.005, 0.01, 0.05, 0.10, 0.25, 0.50, 0.75)


class MetricError(ValueError):
    pass


def _check(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    if not np.all(np.isfinite(s)):
        raise MetricError("scores must be finite")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0/1")
    return s, y.astype(np.int8)


def _groups(scores: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Descending sort order and the start offset of each equal-score group."""
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    starts = np.flatnonzero(np.concatenate([[True], s[1:] != s[:-1]]))
    return order, starts


def roc_auc_weighted(scores, pos_w, neg_w) -> np.ndarray:
    """Mann-Whitney AUC with item weights; ``pos_w``/``neg_w`` may be ``(B, n)``."""
    s = np.asarray(scores, dtype=float)
    order, starts = _groups(s)
    wp = np.atleast_2d(np.asarray(pos_w, dtype=float))[:, order]
    wn = np.atleast_2d(np.asarray(neg_w, dtype=float))[:, order]
    gp = np.add.reduceat(wp, starts, axis=1)
    gn = np.add.reduceat(wn, starts, axis=1)
    # negatives strictly below each group, in descending order = total - cumulative
    tot_n = gn.sum(axis=1, keepdims=True)
    below = tot_n - np.cumsum(gn, axis=1)
    num = (gp * (below + 0.5 * gn)).sum(axis=1)
    den = gp.sum(axis=1) * tot_n[:, 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = num / den
    return out if np.ndim(pos_w) > 1 else out[0]


def pr_auc_weighted(scores, pos_w, neg_w) -> np.ndarray:
    """Average precision with equal-score groups collapsed into single steps."""
    s = np.asarray(scores, dtype=float)
    order, starts = _groups(s)
    wp = np.atleast_2d(np.asarray(pos_w, dtype=float))[:, order]
    wn = np.atleast_2d(np.asarray(neg_w, dtype=float))[:, order]
    gp = np.add.reduceat(wp, starts, axis=1)
    gn = np.add.reduceat(wn, starts, axis=1)
    tp = np.cumsum(gp, axis=1)
    fp = np.cumsum(gn, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        prec = np.where(tp + fp > 0, tp / (tp + fp), 0.0)
        out = (gp * prec).sum(axis=1) / tp[:, -1]
    return out if np.ndim(pos_w) > 1 else out[0]


def roc_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative (ties count 1/2)."""
    s, y = _check(scores, labels)
    if y.all() or not y.any():
        raise MetricError("roc_auc needs both classes")
    return float(roc_auc_weighted(s, y, 1 - y))


def pr_auc(scores, labels) -> float:
    s, y = _check(scores, labels)
    if not y.any():
        raise MetricError("pr_auc needs at least one positive")
    return float(pr_auc_weighted(s, y, 1 - y))


roc_auc.weighted = roc_auc_weighted
pr_auc.weighted = pr_auc_weighted


@dataclass(frozen=True)
class TierMetrics:
    fraction: float
    flagged: int
    threshold: float
    sensitivity: float
    specificity: float
    ppv: float
    oe_ratio: float


def _tier_k(P: float, n: int) -> int:
    if not 0 < P < 1:
        raise MetricError(f"tier fraction must lie in (0, 1), got {P}")
    k = int(np.floor(P * n + 0.5))
    if k < 1:
        raise MetricError(f"top {P:g} of {n} flags nobody")
    return k


def _tier_from_counts(P, k, thr, flagged_pos, total_pos, total_neg, n):
    flagged_neg = k - flagged_pos
    sens = flagged_pos / total_pos
    spec = (total_neg - flagged_neg) / total_neg
    ppv = flagged_pos / k
    return sens, spec, ppv, ppv / (total_pos / n)


def tier_metrics(scores, labels, P: float, patient_ids: Sequence | None = None) -> TierMetrics:
    """Metrics for the top ``round(P*n)`` patients.

    Ties at the cut are broken by ascending patient id (by input position
    when no ids are given), so the flagged set always has exactly k members.
    """
    s, y = _check(scores, labels)
    n = s.size
    pos = int(y.sum())
    if pos == 0 or pos == n:
        raise MetricError("tier metrics need both classes")
    k = _tier_k(P, n)
    if patient_ids is None:
        order = np.argsort(-s, kind="stable")
    else:
        order = np.lexsort((np.asarray(patient_ids), -s))
    top = order[:k]
    sens, spec, ppv, oe = _tier_from_counts(P, k, s[top[-1]], int(y[top].sum()), pos, n - pos, n)
    return TierMetrics(P, k, float(s[top[-1]]), float(sens), float(spec), float(ppv), float(oe))


_TIER_FIELDS = ("sensitivity", "specificity", "ppv", "oe_ratio")


def _tier_weighted(scores, pos_w, neg_w, P: float, which: str) -> np.ndarray:
    s = np.asarray(scores, dtype=float)
    order = np.argsort(-s, kind="stable")
    wp = np.atleast_2d(np.asarray(pos_w, dtype=float))[:, order]
    wn = np.atleast_2d(np.asarray(neg_w, dtype=float))[:, order]
    tp_tot, tn_tot = wp.sum(axis=1), wn.sum(axis=1)
    n = tp_tot + tn_tot
    k = np.floor(P * n + 0.5)
    w = wp + wn
    cum_before = np.cumsum(w, axis=1) - w
    # fraction of each item's multiplicity that falls inside the top k
    take = np.clip(k[:, None] - cum_before, 0, w)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(w > 0, take / w, 0.0)
    fpos = (frac * wp).sum(axis=1)
    sens, spec, ppv, oe = _tier_from_counts(P, k, None, fpos, tp_tot, tn_tot, n)
    out = {"sensitivity": sens, "specificity": spec, "ppv": ppv, "oe_ratio": oe}[which]
    return out if np.ndim(pos_w) > 1 else out[0]


def tier_metric(P: float, which: str) -> Callable:
    """Scalar metric ``f(scores, labels)`` for one tier field, bootstrap-ready."""
    if which not in _TIER_FIELDS:
        raise MetricError(f"unknown tier field {which!r}")

    def metric(scores, labels):
        return getattr(tier_metrics(scores, labels, P), which)

    metric.weighted = lambda s, wp, wn: _tier_weighted(s, wp, wn, P, which)
    metric.__name__ = f"{which}@{P:g}"
    return metric


@dataclass(frozen=True)
class BootstrapCI:
    point: float
    lower: float
    upper: float
    iterations: int = 2000

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _replicate_counts(rng: np.random.Generator, n_pos: int, n_neg: int) -> tuple[np.ndarray, np.ndarray]:
    cp = np.bincount(rng.integers(0, n_pos, n_pos), minlength=n_pos)
    cn = np.bincount(rng.integers(0, n_neg, n_neg), minlength=n_neg)
    return cp, cn


def bootstrap_replicates(metric: Callable, scores, labels, iterations: int = 2000,
                         seed: int = 0, chunk: int = 200) -> np.ndarray:
    """Metric values over stratified resamples (positives and negatives separately)."""
    s, y = _check(scores, labels)
    pos_idx, neg_idx = np.flatnonzero(y == 1), np.flatnonzero(y == 0)
    if pos_idx.size == 0 or neg_idx.size == 0:
        raise MetricError("stratified bootstrap needs both classes")
    children = np.random.SeedSequence(seed).spawn(iterations)
    out = np.empty(iterations)
    weighted = getattr(metric, "weighted", None)
    if weighted is None:
        for b, child in enumerate(children):
            rng = np.random.default_rng(child)
            rp = pos_idx[rng.integers(0, pos_idx.size, pos_idx.size)]
            rn = neg_idx[rng.integers(0, neg_idx.size, neg_idx.size)]
            idx = np.sort(np.concatenate([rp, rn]))
            out[b] = metric(s[idx], y[idx])
        return out
    # item-ordered weights reproduce the position-ordered resample exactly
    for lo in range(0, iterations, chunk):
        hi = min(lo + chunk, iterations)
        wp = np.zeros((hi - lo, s.size))
        wn = np.zeros((hi - lo, s.size))
        for r, child in enumerate(children[lo:hi]):
            cp, cn = _replicate_counts(np.random.default_rng(child), pos_idx.size, neg_idx.size)
            wp[r, pos_idx] = cp
            wn[r, neg_idx] = cn
        out[lo:hi] = weighted(s, wp, wn)
    return out


def bootstrap_ci(metric: Callable, scores, labels, iterations: int = 2000, seed: int = 0) -> BootstrapCI:
    """Nearest-rank 2.5/97.5 percentile interval of a stratified bootstrap."""
    reps = bootstrap_replicates(metric, scores, labels, iterations, seed)
    lo, hi = np.percentile(reps, [2.5, 97.5], method="inverted_cdf")
    return BootstrapCI(float(metric(scores, labels)), float(lo), float(hi), iterations)


@dataclass
class MetricReport:
    n: int
    events: int
    roc_auc: BootstrapCI
    pr_auc: BootstrapCI
    tiers: list[dict] = field(default_factory=list)
    window_months: int | None = None
    model: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        """Aligned text table: one row per tier, metrics as percent (CI)."""
        def pct(ci, scale=100.0):
            return f"{ci['point'] * scale:.2f} ({ci['lower'] * scale:.2f}, {ci['upper'] * scale:.2f})"

        head = (f"model={self.model or '-'} window={self.window_months or '-'}m n={self.n} events={self.events}\n"
                f"ROC-AUC (%) {pct(asdict(self.roc_auc))}\nPR-AUC (%)  {pct(asdict(self.pr_auc))}\n")
        rows = [("Top-P", "Sensitivity (%)", "Specificity (%)", "PPV (%)", "O/E")]
        for t in self.tiers:
            rows.append((f"{t['fraction'] * 100:g}%", pct(t["sensitivity"]), pct(t["specificity"]),
                         pct(t["ppv"]), pct(t["oe_ratio"], 1.0)))
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        return head + "\n".join(lines) + "\n"


def evaluate(scores, labels, tiers: Sequence[float] = TIER_FRACTIONS, iterations: int = 2000,
             seed: int = 0, window_months: int | None = None, model: str = "") -> MetricReport:
    """Full report: AUCs and every tier field, each with a bootstrap CI.

    All metrics share the same replicate seeds, so intervals are computed on
    identical resamples.
    """
    s, y = _check(scores, labels)
    report = MetricReport(
        n=int(s.size), events=int(y.sum()),
        roc_auc=bootstrap_ci(roc_auc, s, y, iterations, seed),
        pr_auc=bootstrap_ci(pr_auc, s, y, iterations, seed),
        window_months=window_months, model=model,
    )
    for P in tiers:
        tm = tier_metrics(s, y, P)
        row = {"fraction": P, "flagged": tm.flagged, "threshold": tm.threshold}
        for which in _TIER_FIELDS:
            row[which] = asdict(bootstrap_ci(tier_metric(P, which), s, y, iterations, seed))
        report.tiers.append(row)
    return report


def curve_points(scores, labels) -> str:
    """CSV of ROC and PR points at every distinct threshold (descending)."""
    s, y = _check(scores, labels)
    order, starts = _groups(s)
    ys = y[order]
    ends = np.concatenate([starts[1:], [s.size]]) - 1
    tp = np.cumsum(ys)[ends]
    fp = np.cumsum(1 - ys)[ends]
    P, N = max(int(y.sum()), 1), max(int((1 - y).sum()), 1)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "tpr", "fpr", "precision", "recall"])
    for i, e in enumerate(ends):
        w.writerow([repr(float(s[order[e]])), tp[i] / P, fp[i] / N, tp[i] / (tp[i] + fp[i]), tp[i] / P])
    return buf.getvalue()
