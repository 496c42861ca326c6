"""Rank-based tests for comparing methods over independent runs."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import chi2, norm, rankdata

EXACT_MAX_N = 16


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p: float
    adjusted_p: float
    n: tuple[int, ...]
    method: str = ""

    def adjusted(self, m: int) -> "TestResult":
        return TestResult(self.statistic, self.p, min(1.0, self.p * m), self.n, self.method)


def _sample(x, name) -> np.ndarray:
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _u_from_ranks(ranks_a, n_a) -> float:
    return float(np.sum(ranks_a) - n_a * (n_a + 1) / 2.0)


def mann_whitney_u(sample_a, sample_b) -> TestResult:
    """Two-sided Mann-Whitney U test; ``statistic`` is U of ``sample_a``.

    Combined samples of at most 16 observations get the exact permutation
    p-value (enumerating every split of the pooled midranks); larger ones use
    the tie-corrected normal approximation with continuity correction.
    """
    a = _sample(sample_a, "sample_a")
    b = _sample(sample_b, "sample_b")
    n_a, n_b = a.size, b.size
    ranks = rankdata(np.concatenate([a, b]))
    u = _u_from_ranks(ranks[:n_a], n_a)
    mean = n_a * n_b / 2.0
    if n_a + n_b <= EXACT_MAX_N:
        obs = abs(u - mean)
        hits = 0
        total = 0
        tol = 1e-9
        for idx in itertools.combinations(range(n_a + n_b), n_a):
            total += 1
            uu = _u_from_ranks(ranks[list(idx)], n_a)
            if abs(uu - mean) >= obs - tol:
                hits += 1
        p = hits / total
        kind = "exact"
    else:
        n = n_a + n_b
        _, counts = np.unique(ranks, return_counts=True)
        tie = float(np.sum(counts ** 3 - counts))
        var = n_a * n_b / 12.0 * ((n + 1) - tie / (n * (n - 1)))
        if var <= 0:
            p = 1.0
        else:
            z = (abs(u - mean) - 0.5) / math.sqrt(var)
            p = float(min(1.0, 2.0 * norm.sf(max(z, 0.0))))
        kind = "normal"
    p = min(1.0, max(0.0, p))
    return TestResult(u, p, p, (n_a, n_b), kind)


def kruskal_wallis(groups: Sequence) -> TestResult:
    """Kruskal-Wallis H with tie correction; p from chi-squared with k - 1 dof."""
    if len(groups) < 2:
        raise ValueError(f"need at least 2 groups, got {len(groups)}")
    gs = [_sample(g, f"group {i}") for i, g in enumerate(groups)]
    sizes = [g.size for g in gs]
    ranks = rankdata(np.concatenate(gs))
    n = ranks.size
    h = 0.0
    start = 0
    for k in sizes:
        r = ranks[start:start + k]
        h += r.sum() ** 2 / k
        start += k
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)
    _, counts = np.unique(ranks, return_counts=True)
    c = 1.0 - float(np.sum(counts ** 3 - counts)) / (n ** 3 - n) if n > 1 else 0.0
    if c <= 0:
        return TestResult(0.0, 1.0, 1.0, tuple(sizes), "kruskal")
    h /= c
    h = max(h, 0.0)
    p = float(chi2.sf(h, len(gs) - 1))
    return TestResult(h, p, p, tuple(sizes), "kruskal")


def bonferroni(p_values: Sequence[float], m: int | None = None) -> list[float]:
    """Multiply each p-value by the number of comparisons, capping at 1."""
    ps = [float(p) for p in p_values]
    for p in ps:
        if not 0.0 <= p <= 1.0 or math.isnan(p):
            raise ValueError(f"p-value {p} outside [0, 1]")
    m = len(ps) if m is None else m
    if m < 1 and ps:
        raise ValueError("number of comparisons must be at least 1")
    return [min(1.0, p * m) for p in ps]


def pairwise_table(columns: dict[str, Sequence[float]]) -> tuple[TestResult, dict]:
    """Kruskal-Wallis over all columns plus Bonferroni-adjusted pairwise U tests.

    The table maps ``(row, col)`` name pairs (row after col in input order)
    to adjusted results, i.e. the lower triangle.
    """
    names = list(columns)
    if len(names) < 2:
        raise ValueError(f"need at least 2 columns, got {len(names)}")
    kw = kruskal_wallis([columns[k] for k in names])
    pairs = [(names[i], names[j]) for i in range(len(names)) for j in range(i)]
    m = len(pairs)
    table = {}
    for r, c in pairs:
        table[(r, c)] = mann_whitney_u(columns[r], columns[c]).adjusted(m)
    return kw, table


def format_table(kw: TestResult, table: dict, names: Sequence[str]) -> str:
    lines = [f"Kruskal-Wallis H = {kw.statistic:.6g}, p = {kw.p:.6g} (n = {list(kw.n)})", ""]
    width = max(8, *(len(n) for n in names)) + 2
    lines.append(" " * width + "".join(n.rjust(width) for n in names[:-1]))
    for i, r in enumerate(names[1:], start=1):
        cells = [f"{table[(r, c)].adjusted_p:.4g}".rjust(width) for c in names[:i]]
        lines.append(r.ljust(width) + "".join(cells))
    return "\n".join(lines) + "\n"
