"""Knockoff-aware selection thresholds.

Interactions: the labeled score set gamma mixes original-original (OO),
one-knockoff (D) and two-knockoff (DD) pairs; knockoff-involving pairs act
as negative controls, and the threshold is the smallest score at which

    (#{>= t, at least one knockoff} - 2 #{>= t, two knockoffs}) / #{>= t} <= q.

Features: the classic knockoff+ threshold over signed statistics W_j.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, ContractViolation
from .importance import pair_class

CLASSES = ("OO", "D", "DD")


@dataclass
class LabeledScore:
    """One unordered augmented-feature pair; indices are 0-based, i < j.

    ``klass`` stores the finest class ("D" means exactly one knockoff);
    the threshold's at-least-one-knockoff count is D + DD.
    """

    i: int
    j: int
    score: float
    klass: str


@dataclass
class SelectionResult:
    """Threshold scan outcome; ``threshold`` is None when no t qualifies."""

    threshold: float | None
    selected: list
    estimated_fdp: float | None
    q: float
    counts: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.threshold is not None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "selected": [list(pair) for pair in self.selected],
            "estimated_fdp": self.estimated_fdp,
            "q": self.q,
            "counts": self.counts,
        }


def build_gamma(S: np.ndarray) -> list:
    """Labeled pairs {(i, j) : i < j, j != i + p} from a calibrated matrix."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2:
        raise ContractViolation(f"expected a 2p x 2p matrix, got {S.shape}")
    if not np.array_equal(S, S.T):
        raise ContractViolation("score matrix must be symmetric")
    if np.any(S < 0):
        raise ContractViolation("scores must be nonnegative")
    p = S.shape[0] // 2
    gamma = []
    for i in range(2 * p):
        for j in range(i + 1, 2 * p):
            if j == i + p:
                continue  # a feature paired with its own knockoff carries no signal
            gamma.append(LabeledScore(i=i, j=j, score=float(S[i, j]),
                                      klass=pair_class(i, j, p)))
    return gamma


def interaction_threshold(gamma, q: float) -> SelectionResult:
    """Smallest score t whose knockoff-based FDP estimate is <= q."""
    if not 0 < q < 1:
        raise ConfigurationError("q must lie in (0, 1)")
    scores = np.array([g.score for g in gamma], dtype=float)
    if scores.size and not np.all(np.isfinite(scores)):
        raise ContractViolation("scores must be finite")
    if scores.size and np.any(scores < 0):
        raise ContractViolation("scores must be nonnegative")
    klasses = np.array([g.klass for g in gamma])
    candidates = np.unique(scores[scores > 0])

    threshold = None
    est_at_t = None
    for t in candidates:
        at_or_above = scores >= t
        n_total = int(at_or_above.sum())
        if n_total == 0:
            continue
        n_any_ko = int(np.sum(at_or_above & (klasses != "OO")))
        n_dd = int(np.sum(at_or_above & (klasses == "DD")))
        est = (n_any_ko - 2 * n_dd) / n_total
        if est <= q:
            threshold = float(t)
            est_at_t = est
            break

    if threshold is None:
        return SelectionResult(threshold=None, selected=[], estimated_fdp=None,
                               q=q, counts={k: 0 for k in CLASSES})
    at_t = scores >= threshold
    counts = {k: int(np.sum(at_t & (klasses == k))) for k in CLASSES}
    selected = sorted((g.i, g.j) for g in gamma
                      if g.klass == "OO" and g.score >= threshold)
    return SelectionResult(threshold=threshold, selected=selected,
                           estimated_fdp=est_at_t, q=q, counts=counts)


def knockoff_stats(s1d: np.ndarray) -> np.ndarray:
    """W_j = |s1d_j| - |s1d_{j+p}|; antisymmetric under feature/knockoff swap."""
    s1d = np.asarray(s1d, dtype=float)
    if s1d.ndim != 1 or s1d.shape[0] % 2:
        raise ContractViolation("s1d must be a length-2p vector")
    if not np.all(np.isfinite(s1d)):
        raise ContractViolation("s1d must be finite")
    p = s1d.shape[0] // 2
    return np.abs(s1d[:p]) - np.abs(s1d[p:])


def feature_threshold(W: np.ndarray, q: float) -> SelectionResult:
    """Knockoff+ threshold: min t with (1 + #{W <= -t}) / #{W >= t} <= q."""
    if not 0 < q < 1:
        raise ConfigurationError("q must lie in (0, 1)")
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise ContractViolation("W must be finite")
    candidates = np.unique(np.abs(W[W != 0]))

    for t in candidates:
        n_sel = int(np.sum(W >= t))
        if n_sel == 0:
            continue
        ratio = (1 + int(np.sum(W <= -t))) / n_sel
        if ratio <= q:
            selected = sorted(int(j) for j in np.flatnonzero(W >= t))
            return SelectionResult(threshold=float(t), selected=selected,
                                   estimated_fdp=ratio, q=q,
                                   counts={"selected": n_sel})
    return SelectionResult(threshold=None, selected=[], estimated_fdp=None,
                           q=q, counts={"selected": 0})


def write_selection_csv(path, gamma, result: SelectionResult):
    """Per-pair export: 1-based indices, class, score, selected flag."""
    selected = set(result.selected)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "class", "score", "selected"])
        for g in sorted(gamma, key=lambda g: (-g.score, g.i, g.j)):
            flag = int((g.i, g.j) in selected)
            writer.writerow([g.i + 1, g.j + 1, g.klass, repr(float(g.score)), flag])


def write_selection_json(path, result: SelectionResult):
    with open(path, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
