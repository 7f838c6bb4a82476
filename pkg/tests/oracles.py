"""Independent reference implementations used as test oracles."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ehrpersist.catalog import PersistenceMode


def roc_pairs(s, y):
    """Mann-Whitney by enumerating every positive/negative pair."""
    pos = [a for a, l in zip(s, y) if l == 1]
    neg = [b for b, l in zip(s, y) if l == 0]
    total = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return total / (len(pos) * len(neg))


def pr_sweep(s, y):
    """Step-wise AP from a sweep over every distinct threshold."""
    P = sum(y)
    ap, prev_recall = 0.0, 0.0
    for t in sorted(set(s), reverse=True):
        flagged = [l for a, l in zip(s, y) if a >= t]
        tp = sum(flagged)
        recall = tp / P
        ap += (recall - prev_recall) * (tp / len(flagged))
        prev_recall = recall
    return ap


def fill_oracle(row, mode, tail):
    """Cell-by-cell reading of the four persistence rules."""
    n = len(row)
    out = [0] * n
    for t in range(n):
        if mode is PersistenceMode.EPISODIC:
            out[t] = row[t]
        elif mode is PersistenceMode.EVER_HISTORY:
            out[t] = int(any(row))
        elif mode is PersistenceMode.CHRONIC_PERSISTENT:
            out[t] = int(any(row[: t + 1]))
        else:
            out[t] = int(any(row[s] for s in range(max(0, t - tail), t + 1)))
    return out


GOLDEN = Path(__file__).parent / "golden" / "toy_prompt_3m.txt"

# the worked example's feature listing, in its printed order
STAGE4 = [("age_30_39", 1), ("sex_male", 1), ("anxiety_H1", 1), ("anxiety_H2", 1), ("cancer_H1", 1),
          ("cancer_H2", 1), ("influenza_H1", 1), ("influenza_H2", 0), ("legal_problems_H1", 1),
          ("legal_problems_H2", 1)]


# six points, two features; not separable so the unpenalized optimum is finite
TINY_X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, -1.0], [-1.0, 0.5], [0.0, 0.0]])
TINY_Y = np.array([1, 0, 1, 0, 1, 0])


def _reference_objective(W, B, C, l1):
    """Objective on a batch of (w, b) candidates, written out longhand."""
    m = W @ TINY_X.T + B[:, None]
    loss = np.mean(np.log1p(np.exp(-np.abs(m))) + np.maximum(m, 0) - TINY_Y * m, axis=1)
    pen = l1 * np.abs(W).sum(axis=1) + 0.5 * (1 - l1) * (W**2).sum(axis=1)
    return loss + pen / C


def lattice_minimum(C, l1):
    """Coarse-to-fine exhaustive search over (w1, w2, b)."""
    center, half, step = np.zeros(3), 4.0, 0.05
    for _ in range(4):
        axes = [np.arange(c - half, c + half + step / 2, step) for c in center]
        g = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
        vals = _reference_objective(g[:, :2], g[:, 2], C, l1)
        center = g[np.argmin(vals)]
        half, step = 4 * step, step / 10
    return center, float(vals.min())
