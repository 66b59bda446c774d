"""Expected validation cost of tree-formed against linear logs.

Bad leaves are modelled as ``k`` i.i.d. uniform draws from the ``N = 2^d``
leaves, each colouring its path to the root.  The number of distinct
coloured nodes at a level of ``N`` nodes after ``k`` draws has expectation
``N (1 - (1 - 1/N)^k)``; summing over the inner levels gives the expected
number of bad inner nodes, i.e. the hash operations diagnostic validation
performs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np


class UnboundedChoicesError(ValueError):
    """Covering every leaf (f = 1) needs unboundedly many draws."""


@dataclass(frozen=True)
class CostParams:
    h: float = 1.0
    c: float = 0.0

    def __post_init__(self):
        if self.h <= 0 or self.c < 0:
            raise ValueError("need h > 0 and c >= 0")

    @property
    def lam(self) -> float:
        return self.c / self.h

    @classmethod
    def from_lambda(cls, lam: float, h: float = 1.0) -> "CostParams":
        return cls(h, lam * h)


@dataclass(frozen=True)
class FailureScenario:
    depth: int
    fraction: float
    draws: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must lie in [0, 1]")
        if self.draws < 0:
            raise ValueError("draw count must be non-negative")


def expected_colored(N: int, k: float) -> float:
    if N < 1 or k < 0:
        raise ValueError("need N >= 1 and k >= 0")
    if k == 0:
        return 0.0
    if N == 1:
        return 1.0
    return -N * math.expm1(k * math.log1p(-1.0 / N))


def choices_for_fraction(d: int, f: float) -> float:
    """Draws whose expected leaf coverage is the fraction ``f``."""
    if not 0.0 <= f <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if f == 1.0:
        raise UnboundedChoicesError("f = 1 needs infinitely many draws")
    if f == 0.0:
        return 0.0
    return math.log1p(-f) / math.log1p(-(2.0**-d))


def expected_bad_inner_draws(d: int, k: float) -> float:
    return sum(expected_colored(2**level, k) for level in range(d))


def expected_bad_inner(d: int, f: float) -> float:
    """Expected bad inner nodes when a fraction ``f`` of leaves is bad.

    At ``f = 1`` this is the limit ``2^d - 1``: every inner node is bad.
    """
    if f == 1.0:
        return float(2**d - 1)
    return expected_bad_inner_draws(d, choices_for_fraction(d, f))


@dataclass
class MonteCarloResult:
    mean: float
    stderr: float
    trials: int


def monte_carlo_bad_inner(
    d: int,
    k: float,
    trials: int,
    seed: Optional[int] = 0,
    chunk: int = 1000,
) -> MonteCarloResult:
    """Sample the colouring process directly.

    A fractional ``k`` is realised by drawing ``floor(k)`` or ``floor(k) + 1``
    leaves per trial, the latter with probability ``k - floor(k)``.  The
    stream is fully determined by ``seed``; trials are generated in fixed
    chunks in trial order.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if k < 0:
        raise ValueError("draw count must be non-negative")
    rng = np.random.default_rng(seed)
    base = int(math.floor(k))
    frac = k - base
    counts = np.empty(trials, dtype=np.int64)
    lowest = 2 ** (d - 1)  # nodes on the level just above the leaves
    for start in range(0, trials, chunk):
        m = min(chunk, trials - start)
        extra = rng.random(m) < frac if frac > 0 else np.zeros(m, dtype=bool)
        width = base + 1
        leaves = rng.integers(0, 2**d, size=(m, width))
        keep = np.ones((m, width), dtype=bool)
        keep[:, base] = extra
        rows = np.broadcast_to(np.arange(m)[:, None], (m, width))
        marks = np.zeros((m, lowest), dtype=bool)
        marks[rows[keep], (leaves[keep] >> 1)] = True
        total = marks.sum(axis=1)
        while marks.shape[1] > 1:
            marks = marks[:, 0::2] | marks[:, 1::2]
            total += marks.sum(axis=1)
        counts[start:start + m] = total
    mean = float(counts.mean())
    stderr = float(counts.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return MonteCarloResult(mean, stderr, trials)


def tree_validation_cost(d: int, f: float, params: CostParams) -> float:
    return (expected_bad_inner(d, f) + 1) * (2 * params.c + params.h)


def linear_validation_cost(d: int, params: CostParams) -> float:
    return 2**d * (params.h + params.c) + params.h


def efficiency_bound(lam: float) -> float:
    """Largest ``(E_inner + 1) / 2^d`` for which the tree wins: ``(λ+1)/(2λ+1)``."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    return (lam + 1) / (2 * lam + 1)


def lambda_for_bound(bound: float) -> float:
    """Inverse of :func:`efficiency_bound` on ``(1/2, 1]``."""
    if not 0.5 < bound <= 1.0:
        raise ValueError("bound must lie in (0.5, 1]")
    return (1 - bound) / (2 * bound - 1)


def breakeven_fraction(d: int, lam: float, tol: float = 1e-4) -> float:
    """Largest bad-leaf fraction at which tree validation is no costlier."""
    bound = efficiency_bound(lam)

    def excess(f: float) -> float:
        return (expected_bad_inner(d, f) + 1) / 2**d - bound

    if excess(1.0) <= 0:
        return 1.0
    if excess(0.0) > 0:
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class CostRow:
    d: int
    f: float
    e_inner: float
    fraction: float
    tree_cost: float
    linear_cost: float


CSV_HEADER = ["d", "f", "e_inner", "fraction", "tree_cost", "linear_cost"]


def f_grid(step: float = 0.05) -> List[float]:
    count = int(round(1 / step))
    return [round(i * step, 10) for i in range(count + 1)]


def emit_cost_table(
    depths: Iterable[int], fractions: Sequence[float], params: CostParams
) -> List[CostRow]:
    rows = []
    for d in depths:
        for f in fractions:
            e = expected_bad_inner(d, f)
            rows.append(
                CostRow(
                    d,
                    f,
                    e,
                    e / (2**d - 1),
                    tree_validation_cost(d, f, params),
                    linear_validation_cost(d, params),
                )
            )
    return rows


def rows_to_csv(rows: Iterable[CostRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([r.d, repr(r.f), repr(r.e_inner), repr(r.fraction), repr(r.tree_cost), repr(r.linear_cost)])
    return buf.getvalue()
