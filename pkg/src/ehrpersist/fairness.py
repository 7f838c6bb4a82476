"""Subgroup performance, reliability flags, heterogeneity tests and gap summaries."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .eval import BootstrapCI, bootstrap_ci, pr_auc

__all__ = [
    "FairnessError",
    "SubgroupResult",
    "HeterogeneityTest",
    "FairnessSummary",
    "is_reliable",
    "subgroup_metrics",
    "fit_logistic",
    "lrt_heterogeneity",
    "bh_fdr",
    "fairness_summary",
    "fairness_report",
    "format_report",
]

MIN_EVENTS = 20
MAX_CI_WIDTH = 0.12
CLIP = 1e-6


class FairnessError(ValueError):
    pass


@dataclass(frozen=True)
class SubgroupResult:
    grouping: str
    level: str
    n: int
    events: int
    pr_auc: float | None
    ci: BootstrapCI | None
    reliable: bool


@dataclass(frozen=True)
class HeterogeneityTest:
    grouping: str
    lrt_statistic: float
    df: int
    p_value: float
    q_fdr: float | None = None
    levels: tuple[str, ...] = ()
    merged: tuple[str, ...] = ()


@dataclass(frozen=True)
class FairnessSummary:
    grouping: str
    max_gap: float
    worst_group: float
    worst_level: str
    reliable_levels: tuple[str, ...]
    excluded_levels: tuple[str, ...]


def is_reliable(events: int, n: int, ci: BootstrapCI | None) -> bool:
    """At least 20 events and 20 non-events, and a CI no wider than 0.12."""
    if ci is None:
        return False
    return events >= MIN_EVENTS and n - events >= MIN_EVENTS and ci.upper - ci.lower <= MAX_CI_WIDTH


def subgroup_metrics(scores, labels, groups: Sequence, grouping: str = "Race",
                     iterations: int = 2000, seed: int = 0) -> list[SubgroupResult]:
    """Per-level PR-AUC with a stratified bootstrap CI and reliability flag."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(np.int64)
    g = np.asarray(groups).astype(str)
    if g.size == 0:
        raise FairnessError("empty grouping")
    if not (s.size == y.size == g.size):
        raise FairnessError("scores, labels and groups differ in length")
    out = []
    for level in np.unique(g):
        sel = g == level
        n, ev = int(sel.sum()), int(y[sel].sum())
        if ev == 0:
            out.append(SubgroupResult(grouping, str(level), n, ev, None, None, False))
            continue
        auc = pr_auc(s[sel], y[sel])
        ci = bootstrap_ci(pr_auc, s[sel], y[sel], iterations, seed) if ev < n else None
        out.append(SubgroupResult(grouping, str(level), n, ev, auc, ci, is_reliable(ev, n, ci)))
    return out


def fit_logistic(Z: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Maximum-likelihood logistic fit by IRLS with step halving; returns (beta, loglik)."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float)

    def loglik(beta):
        eta = Z @ beta
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    beta = np.zeros(Z.shape[1])
    rate = np.clip(y.mean(), 1e-12, 1 - 1e-12)
    beta[0] = np.log(rate / (1 - rate))
    ll = loglik(beta)
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(Z @ beta)))
        W = p * (1 - p)
        H = Z.T @ (Z * W[:, None])
        step = np.linalg.solve(H + 1e-12 * np.eye(Z.shape[1]), Z.T @ (y - p))
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 or t < 1e-10:
                break
            t *= 0.5
        done = abs(ll_new - ll) < tol
        beta, ll = cand, ll_new
        if done:
            break
    return beta, ll


def _separated(x: np.ndarray, y: np.ndarray) -> bool:
    """Single class, or the two classes are split by a threshold on x."""
    pos, neg = x[y == 1], x[y == 0]
    if pos.size == 0 or neg.size == 0:
        return True
    return bool(neg.max() <= pos.min() or pos.max() <= neg.min())


def lrt_heterogeneity(scores, labels, groups: Sequence, grouping: str = "Race") -> HeterogeneityTest:
    """Likelihood-ratio test for level-specific recalibration.

    Null: ``logit P(y) = a + b * logit(score)``. Alternative: ``a_k`` and
    ``b_k`` per level, giving ``df = 2(k - 1)``. Levels with a single class
    or complete separation are merged into one ``"other"`` level.
    """
    s = np.clip(np.asarray(scores, dtype=float), CLIP, 1 - CLIP)
    x = np.log(s / (1 - s))
    y = np.asarray(labels).astype(float)
    g = np.asarray(groups).astype(str)
    levels = list(np.unique(g))
    merged = [lv for lv in levels if _separated(x[g == lv], y[g == lv])]
    if merged:
        g = np.where(np.isin(g, merged), "other", g)
        levels = list(np.unique(g))
        if "other" in levels and _separated(x[g == "other"], y[g == "other"]) and len(levels) > 1:
            # fold a still-degenerate remainder into the largest level
            sizes = {lv: int((g == lv).sum()) for lv in levels if lv != "other"}
            big = max(sizes, key=lambda k: (sizes[k], k))
            g = np.where(g == "other", big, g)
            levels = list(np.unique(g))
    if len(levels) < 2:
        raise FairnessError("need at least two usable levels for the heterogeneity test")
    _, ll0 = fit_logistic(np.column_stack([np.ones_like(x), x]), y)
    ll1 = 0.0
    for lv in levels:
        sel = g == lv
        _, ll = fit_logistic(np.column_stack([np.ones(sel.sum()), x[sel]]), y[sel])
        ll1 += ll
    stat = max(0.0, 2.0 * (ll1 - ll0))
    df = 2 * (len(levels) - 1)
    return HeterogeneityTest(grouping, float(stat), df, float(stats.chi2.sf(stat, df)), None,
                             tuple(str(l) for l in levels), tuple(merged))


def bh_fdr(p_values: Sequence[float]) -> list[float]:
    """Benjamini-Hochberg step-up adjusted q-values, returned in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return []
    if np.any((p < 0) | (p > 1)) or not np.all(np.isfinite(p)):
        raise FairnessError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum(np.minimum.accumulate(ranked[::-1])[::-1], 1.0)
    q = np.empty(m)
    q[order] = q_sorted
    return q.tolist()


def fairness_summary(results: Sequence[SubgroupResult]) -> FairnessSummary:
    """Max PR-AUC gap and worst-group PR-AUC over reliable levels only."""
    if not results:
        raise FairnessError("no subgroup results")
    reliable = [r for r in results if r.reliable and r.pr_auc is not None]
    if not reliable:
        raise FairnessError("no reliable levels")
    values = [r.pr_auc for r in reliable]
    worst = min(reliable, key=lambda r: (r.pr_auc, r.level))
    return FairnessSummary(
        grouping=results[0].grouping,
        max_gap=float(max(values) - min(values)),
        worst_group=float(worst.pr_auc),
        worst_level=worst.level,
        reliable_levels=tuple(r.level for r in reliable),
        excluded_levels=tuple(r.level for r in results if not r.reliable),
    )


def fairness_report(scores, labels, groupings: dict[str, Sequence], iterations: int = 2000,
                    seed: int = 0) -> dict:
    """Per-level tables, summaries and LRTs with BH q-values across groupings."""
    tables, summaries, tests = {}, {}, []
    for name, groups in groupings.items():
        res = subgroup_metrics(scores, labels, groups, name, iterations, seed)
        tables[name] = res
        try:
            summaries[name] = fairness_summary(res)
        except FairnessError:
            summaries[name] = None
        try:
            tests.append(lrt_heterogeneity(scores, labels, groups, name))
        except FairnessError:
            pass
    qs = bh_fdr([t.p_value for t in tests])
    tests = [HeterogeneityTest(t.grouping, t.lrt_statistic, t.df, t.p_value, q, t.levels, t.merged)
             for t, q in zip(tests, qs)]
    return {
        "subgroups": {k: [asdict(r) for r in v] for k, v in tables.items()},
        "summaries": {k: (asdict(v) if v else None) for k, v in summaries.items()},
        "heterogeneity": [asdict(t) for t in tests],
        "note": "gap and worst-group use reliable levels only; unreliable levels are listed under excluded_levels",
    }


def format_report(report: dict) -> str:
    """Aligned text tables mirroring per-level and per-grouping fairness columns."""
    lines = []
    for name, rows in report["subgroups"].items():
        lines.append(f"[{name}]")
        head = ("Level", "N", "Events", "PR-AUC (%)", "Reliable")
        body = []
        for r in rows:
            if r["pr_auc"] is None:
                auc = "-"
            elif r["ci"] is None:
                auc = f"{r['pr_auc'] * 100:.2f}"
            else:
                auc = f"{r['pr_auc'] * 100:.2f} ({r['ci']['lower'] * 100:.2f}, {r['ci']['upper'] * 100:.2f})"
            body.append((r["level"], str(r["n"]), str(r["events"]), auc, "yes" if r["reliable"] else "no"))
        widths = [max(len(x[i]) for x in [head] + body) for i in range(5)]
        for row in [head] + body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        lines.append("")
    qmap = {t["grouping"]: t for t in report["heterogeneity"]}
    head = ("Grouping", "Gap (%)", "Worst (%)", "LRT q-FDR")
    body = []
    for name, s in report["summaries"].items():
        t = qmap.get(name)
        body.append((name, f"{s['max_gap'] * 100:.2f}" if s else "-",
                     f"{s['worst_group'] * 100:.2f}" if s else "-",
                     f"{t['q_fdr']:.3g}" if t else "-"))
    widths = [max(len(x[i]) for x in [head] + body) for i in range(4)]
    for row in [head] + body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
