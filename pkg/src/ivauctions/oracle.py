"""Brute-force ground truth for the mechanisms.

Exhaustive search over all monotone deterministic allocations certifies the
impossibility instances (no monotone table can beat the claimed ratio), exact
averages over all n! bidder orderings certify the randomized bounds, and the
closed forms for the no-crossing construction are checked against direct
enumeration.  Everything here is independent of the mechanism implementations
it is used to judge.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from itertools import permutations
from typing import Iterator, Optional, Sequence

import numpy as np

from .mechanisms import NO_WINNER, AllocationTable, lazy_winner
from .model import (
    INFINITE,
    CapExceeded,
    ValidationError,
    ValuationInstance,
)

DEFAULT_TABLE_CAP = 10_000_000


def optimal_welfare(v: ValuationInstance, s: Sequence[int]) -> float:
    """Highest value at the profile; the per-profile benchmark every ratio is against."""
    return float(v.values_at(v.space.validate_profile(s)).max())


@dataclass(frozen=True)
class SearchReport:
    """Result of the exhaustive monotone-table search.

    ``tables_scanned`` counts partial-table extension attempts (DFS nodes);
    ``monotone_count`` counts the complete monotone tables, all of which are
    visited.  The witness, when present, is monotone and attains
    ``best_ratio`` exactly.
    """

    best_ratio: float
    witness_table: Optional[AllocationTable]
    tables_scanned: int
    monotone_count: int

    def to_json(self) -> dict:
        return {
            "best_ratio": "INFINITE" if math.isinf(self.best_ratio) else self.best_ratio,
            "tables_scanned": self.tables_scanned,
            "monotone_count": self.monotone_count,
            "has_witness": self.witness_table is not None,
        }


def _lower_neighbors(v: ValuationInstance) -> tuple[list[tuple[int, ...]], list[list[tuple[int, int]]]]:
    space = v.space
    profiles = list(space.profiles())
    neighbors = []
    for p in profiles:
        neigh = []
        for axis in range(space.n):
            if p[axis] >= 1:
                q = list(p)
                q[axis] -= 1
                neigh.append((axis, space.index_of(q)))
        neighbors.append(neigh)
    return profiles, neighbors


def _forced_winner(assignment: np.ndarray, neighbors: list[tuple[int, int]]) -> Optional[int]:
    """The only admissible winner at a cell, if a lower own-axis win forces one.

    Returns NO_WINNER when two different bidders are forced (dead end).
    """
    forced = None
    for axis, idx in neighbors:
        if assignment[idx] == axis:
            if forced is not None and forced != axis:
                return NO_WINNER
            forced = axis
    return forced


def enumerate_monotone_tables(v: ValuationInstance, cap: int = DEFAULT_TABLE_CAP) -> Iterator[np.ndarray]:
    """Yield every fully-assigned monotone winner table, by pruned extension.

    Profiles are filled in row-major order; a candidate winner at a profile is
    rejected exactly when some lower neighbor along a bidder's own axis was won
    by that bidder and the candidate differs, so only (and all) monotone tables
    are completed.
    """
    _, neighbor_idx = _lower_neighbors(v)
    count = len(neighbor_idx)
    n = v.space.n
    assignment = np.full(count, NO_WINNER, dtype=np.int32)
    yielded = 0

    def extend(pos: int):
        nonlocal yielded
        if pos == count:
            yielded += 1
            if yielded > cap:
                raise CapExceeded(
                    f"more than {cap} monotone tables; try a smaller instance or raise the cap"
                )
            yield assignment.copy()
            return
        forced = _forced_winner(assignment, neighbor_idx[pos])
        if forced == NO_WINNER:
            return
        candidates = range(n) if forced is None else (forced,)
        for w in candidates:
            assignment[pos] = w
            yield from extend(pos + 1)
        assignment[pos] = NO_WINNER

    yield from extend(0)


def best_monotone_ratio(v: ValuationInstance, cap: int = DEFAULT_TABLE_CAP) -> SearchReport:
    """Minimum worst-case welfare ratio over all monotone full-support tables.

    Depth-first extension over profiles in row-major order, pruning only
    non-monotone partial tables, with the running worst ratio carried along
    the path.  Every monotone table is visited, so the minimum is exact.
    """
    dense = v.tabulated().values
    space = v.space
    n = space.n
    flat_vals = dense.reshape(n, -1)
    flat_max = flat_vals.max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = flat_max[None, :] / flat_vals
    ratio_of = np.where(flat_max[None, :] == 0, 1.0, raw)  # 0/0 line := 1, x/0 := inf

    _, neighbor_idx = _lower_neighbors(v)
    count = len(neighbor_idx)
    assignment = np.full(count, NO_WINNER, dtype=np.int32)
    best = INFINITE
    best_table: Optional[np.ndarray] = None
    nodes = 0
    monotone = 0

    def extend(pos: int, worst: float):
        nonlocal best, best_table, nodes, monotone
        if pos == count:
            monotone += 1
            if monotone > cap:
                raise CapExceeded(
                    f"more than {cap} monotone tables; try a smaller instance or raise the cap"
                )
            if worst < best:
                best = worst
                best_table = assignment.copy()
            return
        forced = _forced_winner(assignment, neighbor_idx[pos])
        if forced == NO_WINNER:
            return
        candidates = range(n) if forced is None else (forced,)
        for w in candidates:
            nodes += 1
            assignment[pos] = w
            extend(pos + 1, max(worst, float(ratio_of[w, pos])))
        assignment[pos] = NO_WINNER

    extend(0, 1.0)
    witness = None
    if best_table is not None:
        witness = AllocationTable(space=space, winner=best_table.reshape(space.shape))
    return SearchReport(
        best_ratio=best,
        witness_table=witness,
        tables_scanned=nodes,
        monotone_count=monotone,
    )


def exact_random_hypergrid_stats(
    v: ValuationInstance, s: Sequence[int], c: Optional[float] = None
) -> tuple[float, dict[tuple[int, ...], float]]:
    """Average winner value at s over all n! orderings of the grid mechanism."""
    if v.n > 8:
        raise CapExceeded("n! enumeration limited to n <= 8; use the Monte Carlo path")
    p = v.space.validate_profile(s)
    per_pi: dict[tuple[int, ...], float] = {}
    for pi in permutations(range(v.n)):
        w = lazy_winner(v, pi, p, c=c)
        per_pi[pi] = v.value(w, p)
    mean = sum(per_pi.values()) / len(per_pi)
    return mean, per_pi


def monte_carlo_random_hypergrid(
    v: ValuationInstance,
    s: Sequence[int],
    samples: int,
    seed: int,
    c: Optional[float] = None,
) -> tuple[float, float]:
    """Seeded i.i.d. ordering draws; mean winner value at s with its standard error."""
    if samples < 1:
        raise ValidationError("need at least one sample")
    p = v.space.validate_profile(s)
    rng = random.Random(seed)
    order = list(range(v.n))
    total = 0.0
    total_sq = 0.0
    for _ in range(samples):
        rng.shuffle(order)
        w = lazy_winner(v, tuple(order), p, c=c)
        val = v.value(w, p)
        total += val
        total_sq += val * val
    mean = total / samples
    if samples == 1:
        return mean, 0.0
    var = max(0.0, (total_sq - samples * mean * mean) / (samples - 1))
    return mean, math.sqrt(var / samples)


def closed_form_rand_impossibility(n: int, epsilon: float) -> tuple[float, float, float]:
    """Closed forms for the product-indicator family under i.i.d. two-point signals.

    Returns (optimal expected welfare, the ceiling any monotone mechanism's
    expected welfare obeys, and the exactly enumerated expected welfare of the
    uniform random allocation).  The last two coincide at epsilon^(n-1).
    """
    if not 0 < epsilon < 1:
        raise ValidationError("epsilon must lie in (0, 1)")
    if n < 2:
        raise ValidationError("n must be >= 2")
    opt = epsilon**n + n * epsilon ** (n - 1) * (1 - epsilon)
    bound = epsilon ** (n - 1)

    from .instances import gen_rand_impossibility

    inst = gen_rand_impossibility(n)
    uniform = 0.0
    for p in inst.space.profiles():
        prob = 1.0
        for bit in p:
            prob *= epsilon if bit == 1 else 1 - epsilon
        uniform += prob * float(inst.values_at(p).sum()) / n
    return opt, bound, uniform
