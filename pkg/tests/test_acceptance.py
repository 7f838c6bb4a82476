"""Acceptance suite: one PASS/FAIL line per primary criterion.

Each test prints its verdict (also repeated in the terminal summary) and
fails when the criterion is not met. Criteria 7 and 10 take minutes.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy import stats
from scipy.special import expit

from oracles import GOLDEN, STAGE4, TINY_X, TINY_Y, lattice_minimum, pr_sweep, roc_pairs

from ehrpersist.catalog import default_catalog, toy_catalog
from ehrpersist.eval import TIER_FRACTIONS, BootstrapCI, bootstrap_ci, pr_auc, roc_auc, tier_metrics
from ehrpersist.fairness import SubgroupResult, bh_fdr, fairness_summary, lrt_heterogeneity
from ehrpersist.pipeline import (
    Split,
    downsample_train,
    objective,
    run_ablation,
    smooth_objective_grad,
    split,
    train_elastic_net,
)
from ehrpersist.represent import build_time_varying, render_prompt, toy_profile
from ehrpersist.synth import TARGET_PREVALENCE, generate_cohort, reference_spec
from ehrpersist.timeline import IntervalGrid, VisitRecord, aggregate, apply_persistence, convert_timeout


def test_c01_toy_golden(criterion):
    t0 = time.perf_counter()
    visits = [VisitRecord("001", "2016-02-10", ("F41.1", "J10.1", "Z65.3")),
              VisitRecord("001", "2016-04-22", ("F41.9",)),
              VisitRecord("001", "2016-09-15", ("C50.911",))]
    raw = aggregate(visits, IntervalGrid.year("HalfYear"), toy_catalog())
    filled = apply_persistence(raw)
    profile = toy_profile("HalfYear")
    vec = build_time_varying(profile)
    prompt = render_prompt(profile, 3).text
    elapsed = time.perf_counter() - t0
    checks = {
        "raw": raw.as_dict() == {"Anxiety": (1, 0), "Cancer": (0, 1), "Influenza": (1, 0), "Legal Problems": (1, 0)},
        "filled": filled.as_dict() == {"Anxiety": (1, 1), "Cancer": (1, 1), "Influenza": (1, 0),
                                        "Legal Problems": (1, 1)},
        "vector": [(n, vec[n]) for n, _ in STAGE4] == STAGE4,
        "prompt": prompt == GOLDEN.read_text(encoding="utf-8"),
        "runtime": elapsed < 1.0,
    }
    criterion(1, all(checks.values()), f"stages {checks} in {elapsed:.3f}s")


def test_c02_timeout_conversion(criterion):
    table = {T: convert_timeout(T, "HalfYear") for T in range(1, 9)}
    ok = table[2] == 1 and all(2 * h >= T and 2 * h <= T + 1 and h >= 1 for T, h in table.items())
    ok = ok and all(convert_timeout(T, "Quarter") == T for T in range(1, 9))
    criterion(2, ok, f"(T=2, HalfYear) -> {table[2]}; HalfYear table {table}")


def test_c03_tier_identity(criterion):
    worst, n = 0.0, 2000  # P * n is an integer for every tier
    for seed in range(300):
        rng = np.random.default_rng(seed)
        y = (rng.random(n) < 0.02).astype(int)
        if y.sum() == 0:
            continue
        s = rng.random(n) + 0.5 * y
        for P in TIER_FRACTIONS:
            tm = tier_metrics(s, y, P)
            assert tm.flagged == round(P * n)
            worst = max(worst, abs(tm.oe_ratio - tm.sensitivity / P))
    criterion(3, worst <= 1e-12, f"max |O/E - sens/P| = {worst:.2e} over 300 cohorts x {len(TIER_FRACTIONS)} tiers")


def test_c04_metric_oracles(criterion):
    rng = np.random.default_rng(2024)
    worst, done = 0.0, 0
    while done < 1000:
        size = int(rng.integers(2, 13))
        s = rng.integers(0, 6, size).astype(float)
        y = rng.integers(0, 2, size)
        if not 0 < y.sum() < size:
            continue
        worst = max(worst, abs(roc_auc(s, y) - roc_pairs(s, y)), abs(pr_auc(s, y) - pr_sweep(s, y)))
        done += 1
    y = np.array([1, 0, 0, 1, 0, 0, 0, 1, 0, 0])
    const = pr_auc(np.full(10, 0.4), y)
    ok = worst <= 1e-12 and const == pytest.approx(0.3, abs=1e-15)
    criterion(4, ok, f"max deviation {worst:.2e} over 1000 instances; constant scorer PR-AUC {const} (prevalence 0.3)")


def test_c05_elastic_net(criterion):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 5))
    y = (rng.random(80) < 0.4).astype(float)
    w, b = rng.normal(size=5), 0.3
    _, gw, _ = smooth_objective_grad(w, b, X, y, 0.7, 0.4)
    f = lambda v: smooth_objective_grad(v, b, X, y, 0.7, 0.4)[0]
    fd = np.array([(f(w + 1e-6 * e) - f(w - 1e-6 * e)) / 2e-6 for e in np.eye(5)])
    grad_rel = float(np.max(np.abs(gw - fd) / np.maximum(np.abs(fd), 1e-12)))
    best, fmin = lattice_minimum(1.0, 0.0)
    fit = train_elastic_net(TINY_X, TINY_Y, 1.0, 0.0, tol=1e-10)
    wt = fit.params.coef_vector(("x0", "x1"))
    gap = objective(wt, fit.params.intercept, TINY_X, TINY_Y, 1.0, 0.0) - fmin
    dist = float(np.max(np.abs(np.r_[wt, fit.params.intercept] - best)))
    w0 = train_elastic_net(X, y, 1e-8, 0.5).params.coef_vector([f"x{j}" for j in range(5)])
    elapsed = time.perf_counter() - t0
    ok = grad_rel <= 1e-5 and gap <= 1e-3 and dist <= 1e-3 and np.abs(w0).max() < 1e-6 and elapsed < 30
    criterion(5, ok, f"grad rel err {grad_rel:.1e}; solver - lattice objective {gap:.1e}, "
                     f"param dist {dist:.1e}; max |w| at C=1e-8 {np.abs(w0).max():.1e}; {elapsed:.1f}s")


def test_c06_split_downsample(criterion):
    t0 = time.perf_counter()
    c = generate_cohort(reference_spec(100_000, 6))
    y = c.labels[12].astype(int)
    strata = c.strata()
    sp = split(c.patient_ids, 6)
    sets = [set(sp.ids(s)) for s in Split]
    disjoint = not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    covered = sum(map(len, sets)) == len(c.patient_ids)
    tr = np.flatnonzero(sp.mask(Split.TRAIN))
    keep, _ = downsample_train(y[tr], strata[tr], 6)
    kept = tr[keep]
    all_pos = int(y[kept].sum()) == int(y[tr].sum())
    balanced = True
    for s in np.unique(strata[tr]):
        inside = strata[kept] == s
        pos = int(y[kept][inside].sum())
        avail = int(((strata[tr] == s) & (y[tr] == 0)).sum())
        balanced &= int((y[kept][inside] == 0).sum()) == min(pos, avail)
    untouched = not np.isin(kept, np.flatnonzero(~sp.mask(Split.TRAIN))).any()
    elapsed = time.perf_counter() - t0
    ok = disjoint and covered and all_pos and balanced and untouched and elapsed < 10
    criterion(6, ok, f"disjoint={disjoint} covered={covered} positives kept={all_pos} 1:1={balanced} "
                     f"val/test untouched={untouched}; {elapsed:.1f}s on 100,000 patients")


@pytest.mark.slow
def test_c07_bootstrap_coverage(criterion):
    mu, prevalence, n, cohorts = 1.0, 0.1, 5000, 500
    true_auc = float(stats.norm.cdf(mu / np.sqrt(2)))  # binormal, unit variances
    hits = 0
    t0 = time.perf_counter()
    for k, child in enumerate(np.random.SeedSequence(7).spawn(cohorts)):
        rng = np.random.default_rng(child)
        y = (rng.random(n) < prevalence).astype(int)
        s = rng.normal(size=n) + mu * y
        ci = bootstrap_ci(roc_auc, s, y, 2000, k)
        hits += ci.lower <= true_auc <= ci.upper
    rate = hits / cohorts
    elapsed = time.perf_counter() - t0
    criterion(7, 0.93 <= rate <= 0.97, f"coverage {rate:.3f} ({hits}/{cohorts}) of true AUC {true_auc:.4f}; "
                                       f"{elapsed:.0f}s")


def test_c08_lrt_calibration(criterion):
    sims, rejections = 1000, 0
    for child in np.random.SeedSequence(8).spawn(sims):
        rng = np.random.default_rng(child)
        n = 4000
        g = rng.choice(["A", "B", "C"], n, p=[0.6, 0.3, 0.1])
        s = expit(rng.normal(-2.5, 1.0, n))
        y = (rng.random(n) < s).astype(int)
        rejections += lrt_heterogeneity(s, y, g).p_value < 0.05
    rate = rejections / sims
    bh = bh_fdr([0.2, 0.001, 0.04, 0.01])
    bh_ok = bh == pytest.approx([0.2, 0.004, 0.04 * 4 / 3, 0.02], abs=1e-15)
    criterion(8, 0.035 <= rate <= 0.065 and bh_ok,
              f"type-I error {rate:.3f} over {sims} null simulations; BH example {bh} matches={bh_ok}")


def test_c09_fairness_arithmetic(criterion):
    # reconstructed fixture: only the summary row is published, so the level values are chosen
    # to share its extremes; the unreliable level would otherwise set both statistics
    levels = [("Black", 33963, 811, 0.1098), ("Unknown", 14447, 139, 0.0506), ("White", 159938, 1537, 0.0654),
              ("Native Hawaiian", 1862, 19, 0.1281)]
    results = []
    for name, n, ev, auc in levels:
        ci = BootstrapCI(auc, auc - 0.01, auc + 0.01)
        reliable = ev >= 20 and n - ev >= 20 and ci.width <= 0.12
        results.append(SubgroupResult("Race", name, n, ev, auc, ci, reliable))
    summary = fairness_summary(results)
    gap, worst = f"{100 * summary.max_gap:.2f}%", f"{100 * summary.worst_group:.2f}%"
    ok = gap == "5.92%" and worst == "5.06%" and summary.excluded_levels == ("Native Hawaiian",)
    criterion(9, ok, f"gap {gap} (expected 5.92%), worst-group {worst} (expected 5.06%), "
                     f"excluded {summary.excluded_levels}")


@pytest.mark.slow
def test_c10_directional_ablation(criterion):
    t0 = time.perf_counter()
    cat_grid = IntervalGrid.year("Quarter")
    cat = default_catalog()
    fill_wins = tv_wins = nofill_wins = 0
    rows = []
    for seed in range(10):
        c = generate_cohort(reference_spec(200_000, seed, {12: 0.01}))
        arms = {a.representation: a.test_pr_auc
                for a in run_ablation(c.profiles(cat, cat_grid), c.labels[12], c.strata(), seed)}
        fill_wins += arms["time_varying"] > arms["time_varying_no_fill"]
        tv_wins += arms["time_varying"] > arms["static"]
        nofill_wins += arms["time_varying_no_fill"] > arms["static"]
        rows.append(arms)
    elapsed = time.perf_counter() - t0
    means = {k: round(float(np.mean([r[k] for r in rows])), 4) for k in rows[0]}
    ok = fill_wins >= 8 and tv_wins >= 8 and nofill_wins >= 8 and elapsed < 600
    criterion(10, ok, f"fill > no-fill {fill_wins}/10, TV > static {tv_wins}/10, "
                      f"TV-no-fill > static {nofill_wins}/10; mean test PR-AUC {means}; {elapsed:.0f}s")


def test_c11_prevalence(criterion):
    c = generate_cohort(reference_spec(200_000, 11))
    got = {w: float(c.labels[w].mean()) for w in sorted(c.labels)}
    rel = {w: abs(got[w] / TARGET_PREVALENCE[w] - 1) for w in got}
    ok = set(got) == set(TARGET_PREVALENCE) and max(rel.values()) <= 0.15
    criterion(11, ok, "prevalence " + ", ".join(f"{w}m {100 * got[w]:.3f}% (rel err {rel[w]:.1%})" for w in got))
