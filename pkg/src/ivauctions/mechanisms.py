"""Allocation mechanisms: monotone coloring rules, payments, and verifiers.

Every mechanism here outputs a deterministic allocation that is monotone in
each bidder's own signal, which is exactly what makes it implementable with
the critical-signal payment (the winner pays her value at the smallest own
signal that still wins).  Ties in argmax comparisons always break to the
lowest bidder index, and "fails to alpha-approximate" always means the strict
inequality v_j > alpha * v_i, so every run is replayable.

The randomized mechanism draws a uniform bidder ordering with a seeded
generator and runs the deterministic grid mechanism for that ordering, so it
is universally truthful: each realized ordering yields a monotone rule.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .model import (
    INFINITE,
    SignalSpace,
    ValidationError,
    ValuationInstance,
    compute_c,
    validate_permutation,
)

NO_WINNER = -1

Rule = Callable[[tuple[int, ...]], Optional[int]]


class IncompatibleMechanism(ValidationError):
    """Mechanism preconditions (bidder count, signal sizes, finite c) not met."""


@dataclass(frozen=True)
class AllocationTable:
    """Winner for every profile of the grid; NO_WINNER entries mean the item is kept."""

    space: SignalSpace
    winner: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.winner, dtype=np.int32)
        if arr.shape != self.space.shape:
            raise ValidationError(f"winner shape {arr.shape} != {self.space.shape}")
        if arr.max(initial=NO_WINNER) >= self.space.n or arr.min(initial=0) < NO_WINNER:
            raise ValidationError("winner entries must be NO_WINNER or valid bidders")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "winner", arr)

    def winner_at(self, profile: Sequence[int]) -> Optional[int]:
        w = int(self.winner[self.space.validate_profile(profile)])
        return None if w == NO_WINNER else w

    def as_rule(self) -> Rule:
        return self.winner_at

    def to_json(self) -> dict:
        flat = self.winner.reshape(-1)
        return {
            "sizes": list(self.space.sizes),
            "winner": [None if w == NO_WINNER else int(w) + 1 for w in flat],
        }

    @staticmethod
    def from_json(obj: dict) -> "AllocationTable":
        space = SignalSpace(tuple(obj["sizes"]))
        flat = [NO_WINNER if w is None else int(w) - 1 for w in obj["winner"]]
        arr = np.asarray(flat, dtype=np.int32).reshape(space.shape)
        return AllocationTable(space=space, winner=arr)


@dataclass(frozen=True)
class Outcome:
    """Realized winner, payment, and the winner's critical signal for one profile."""

    winner: Optional[int]
    payment: float
    critical_signal: Optional[int]

    def __post_init__(self):
        if self.winner is None and self.payment != 0.0:
            raise ValidationError("no winner implies zero payment")
        if self.payment < 0:
            raise ValidationError("payments are nonnegative")

    def to_json(self) -> dict:
        return {
            "winner": None if self.winner is None else self.winner + 1,
            "payment": self.payment,
            "critical_signal": self.critical_signal,
        }


def identity_permutation(n: int) -> tuple[int, ...]:
    return tuple(range(n))


def random_permutation(n: int, seed: int) -> tuple[int, ...]:
    """Uniform ordering via seeded Fisher-Yates."""
    order = list(range(n))
    random.Random(seed).shuffle(order)
    return tuple(order)


def _argmax_lowest(values: np.ndarray) -> int:
    return int(np.argmax(values))  # argmax returns the first maximizer


def _required_c(v: ValuationInstance, c: Optional[float]) -> float:
    c = compute_c(v) if c is None else float(c)
    if not math.isfinite(c):
        raise IncompatibleMechanism(
            "instance has an infinite crossing constant; no approximation "
            "mechanism applies"
        )
    if c < 1:
        raise ValidationError("c must be >= 1")
    return c


def generalized_vcg(v: ValuationInstance) -> AllocationTable:
    """Allocate to the highest-valued bidder everywhere.

    Only sound when the crossing constant is 1: then the argmax bidder keeps
    the argmax as her signal grows, so the table is monotone and welfare is
    exact at every profile.
    """
    c = compute_c(v)
    if c != 1.0:
        raise IncompatibleMechanism(
            f"argmax allocation needs crossing constant 1, measured {c}; "
            "monotonicity is not guaranteed otherwise"
        )
    dense = v.tabulated().values
    winner = np.argmax(dense, axis=0).astype(np.int32)
    return AllocationTable(space=v.space, winner=winner)


def two_bidder_coloring(v: ValuationInstance, c: Optional[float] = None) -> AllocationTable:
    """Frontier walk for two bidders.

    Starting at (0,0), allocate the current cell to the argmax bidder,
    propagate along that bidder's axis, and advance the loser's signal.  The
    walk fills the grid exactly once and the result is monotone with a
    per-profile welfare ratio of at most the crossing constant.
    """
    if v.n != 2:
        raise IncompatibleMechanism(f"two-bidder walk needs n=2, got n={v.n}")
    _required_c(v, c)
    dense = v.tabulated().values
    k1, k2 = v.space.sizes
    winner = np.full(v.space.shape, NO_WINNER, dtype=np.int32)
    s = [0, 0]
    while s[0] <= k1 and s[1] <= k2:
        i = _argmax_lowest(dense[:, s[0], s[1]])
        j = 1 - i
        if i == 0:
            ray = winner[s[0] :, s[1]]
        else:
            ray = winner[s[0], s[1] :]
        assert np.all(ray == NO_WINNER), "walk revisited a colored cell"
        ray[...] = i
        s[j] += 1
    assert np.all(winner != NO_WINNER), "walk left the grid partially colored"
    return AllocationTable(space=v.space, winner=winner)


def high_if_possible(
    v: ValuationInstance, c: Optional[float] = None, order: str = "lex"
) -> AllocationTable:
    """Two-signal mechanism favoring bidders whose signal is already high.

    Profiles are processed by increasing number of high signals.  At an
    undetermined profile the best high bidder wins if the overall argmax is
    within a factor c of her value; otherwise the argmax bidder wins and the
    win is propagated to her high-signal neighbor.  High winners need no
    propagation, which is what keeps the allocation conflict-free.

    ``order`` picks the traversal inside one weight class ("lex" or "revlex");
    the output must not depend on it since same-weight cells are independent.
    """
    if any(k != 1 for k in v.space.sizes):
        raise IncompatibleMechanism("high-if-possible needs two signals per bidder")
    c = _required_c(v, c)
    dense = v.tabulated().values
    n = v.n
    profiles = sorted(
        v.space.profiles(),
        key=lambda p: (sum(p), p if order == "lex" else tuple(-x for x in p)),
    )
    winner = np.full(v.space.shape, NO_WINNER, dtype=np.int32)
    for p in profiles:
        if winner[p] != NO_WINNER:
            continue
        vals = dense[(slice(None),) + p]
        istar = _argmax_lowest(vals)
        high = [i for i in range(n) if p[i] == 1]
        if high:
            ih = high[int(np.argmax(vals[high]))]
            if vals[istar] <= c * vals[ih]:
                winner[p] = ih
                continue
        winner[p] = istar
        assert p[istar] == 0, "argmax with a high signal is itself a high bidder"
        q = list(p)
        q[istar] = 1
        tq = tuple(q)
        if winner[tq] != NO_WINNER and winner[tq] != istar:
            raise AssertionError(f"propagation conflict at {tq}")
        winner[tq] = istar
    return AllocationTable(space=v.space, winner=winner)


def hypergrid_coloring(
    v: ValuationInstance, pi: Sequence[int], c: Optional[float] = None
) -> AllocationTable:
    """Order-driven grid coloring: a deterministic (n-1)c-approximation.

    Bidders enter in the order ``pi``.  The first bidder tentatively wins its
    whole axis.  When bidder number j enters, its zero layer only re-checks the
    standing winners (there is nothing to copy from); each higher layer copies
    the winner from the layer below and reallocates to the entrant whenever the
    standing winner fails the (j-1)c test against the best of the first j
    bidders or the c test against the entrant itself.
    """
    order = validate_permutation(pi, v.n)
    c = _required_c(v, c)
    dense = v.tabulated().values
    shape = v.space.shape
    n = v.n
    winner = np.full(shape, NO_WINNER, dtype=np.int32)

    first_axis = order[0]
    idx = [0] * n
    for t in range(shape[first_axis]):
        idx[first_axis] = t
        winner[tuple(idx)] = first_axis

    for it in range(1, n):
        j = order[it]
        thresh = it * c  # iteration number it+1 uses the ((it+1)-1)c test
        prev_axes = order[:it]
        first = list(order[: it + 1])
        prev_shape = tuple(shape[a] for a in prev_axes)
        for sj in range(shape[j]):
            for combo in np.ndindex(*prev_shape):
                p = [0] * n
                for a, val in zip(prev_axes, combo):
                    p[a] = val
                p[j] = sj
                tp = tuple(p)
                if sj > 0:
                    p[j] = sj - 1
                    winner[tp] = winner[tuple(p)]
                    p[j] = sj
                w = int(winner[tp])
                vals = dense[(slice(None),) + tp]
                if max(vals[a] for a in first) > thresh * vals[w] or vals[j] > c * vals[w]:
                    winner[tp] = j
    return AllocationTable(space=v.space, winner=winner)


def lazy_winner(
    v: ValuationInstance, pi: Sequence[int], s: Sequence[int], c: Optional[float] = None
) -> int:
    """Winner of the grid coloring at one profile, without building the table.

    Follows the tentative winner along the chain of intermediate profiles.  At
    each iteration the entrant takes over iff the standing winner trips the
    reallocation test at any signal level up to the entrant's report; scanning
    those levels in ascending order and stopping at the first trigger matches
    the table exactly, because once the entrant wins a cell it keeps every
    higher cell on that line.  Runs in O(n^2 k) valuation evaluations.
    """
    order = validate_permutation(pi, v.n)
    p = v.space.validate_profile(s)
    c = _required_c(v, c)
    return _lazy_chain(v, order, p, c, trace=None)


def lazy_winner_trace(
    v: ValuationInstance, pi: Sequence[int], s: Sequence[int], c: Optional[float] = None
) -> tuple[int, list[tuple[int, tuple[int, ...]]]]:
    """Winner plus the per-iteration (tentative winner, intermediate profile) chain."""
    order = validate_permutation(pi, v.n)
    p = v.space.validate_profile(s)
    c = _required_c(v, c)
    trace: list[tuple[int, tuple[int, ...]]] = []
    w = _lazy_chain(v, order, p, c, trace=trace)
    return w, trace


def _lazy_chain(v, order, p, c, trace):
    n = v.n
    w = order[0]
    base = [0] * n
    base[order[0]] = p[order[0]]
    if trace is not None:
        trace.append((w, tuple(base)))
    first = np.fromiter(order, dtype=np.intp)
    last_profile = None  # one-deep cache: consecutive scans share a profile
    last_vals = None
    for it in range(1, n):
        j = order[it]
        thresh = it * c
        fa = first[: it + 1]
        for sj in range(p[j] + 1):
            base[j] = sj
            tp = tuple(base)
            if tp == last_profile:
                vals = last_vals
            else:
                vals = v.values_at(tp)
                last_profile, last_vals = tp, vals
            vw = vals[w]
            if vals[fa].max() > thresh * vw or vals[j] > c * vw:
                w = j
                break
        base[j] = p[j]
        if trace is not None:
            trace.append((w, tuple(base)))
    return w


def critical_signal(
    rule: Union[Rule, AllocationTable],
    v: ValuationInstance,
    i: int,
    s_minus_i: Sequence[int],
) -> Optional[int]:
    """Smallest own signal at which bidder i wins, or None if she never does.

    Binary search over the line, valid because winning is upward closed for a
    monotone rule.
    """
    win = _as_rule(rule)
    if not 0 <= i < v.n:
        raise ValidationError(f"bidder {i} out of range")
    line = list(s_minus_i)
    if len(line) != v.n - 1:
        raise ValidationError("s_minus_i must fix every other bidder's signal")
    k = v.space.sizes[i]

    def at(b: int) -> Optional[int]:
        p = line[:i] + [b] + line[i:]
        return win(tuple(p))

    if at(k) != i:
        return None
    lo, hi = 0, k
    while lo < hi:
        mid = (lo + hi) // 2
        if at(mid) == i:
            hi = mid
        else:
            lo = mid + 1
    return lo


def critical_signal_scan(
    rule: Union[Rule, AllocationTable],
    v: ValuationInstance,
    i: int,
    s_minus_i: Sequence[int],
) -> Optional[int]:
    """Linear-scan twin of critical_signal: first winning signal from below."""
    win = _as_rule(rule)
    line = list(s_minus_i)
    for b in range(v.space.sizes[i] + 1):
        p = line[:i] + [b] + line[i:]
        if win(tuple(p)) == i:
            return b
    return None


def outcome(
    rule: Union[Rule, AllocationTable], v: ValuationInstance, s: Sequence[int]
) -> Outcome:
    """Winner and critical-signal payment at one reported profile."""
    win = _as_rule(rule)
    p = v.space.validate_profile(s)
    w = win(p)
    if w is None:
        return Outcome(winner=None, payment=0.0, critical_signal=None)
    rest = [x for b, x in enumerate(p) if b != w]
    b_star = critical_signal(win, v, w, rest)
    assert b_star is not None, "winner must have a critical signal on her own line"
    paid = rest[:w] + [b_star] + rest[w:]
    return Outcome(winner=w, payment=v.value(w, tuple(paid)), critical_signal=b_star)


def random_hypergrid_outcome(
    v: ValuationInstance, s: Sequence[int], rng_seed: int, c: Optional[float] = None
) -> tuple[Outcome, tuple[int, ...]]:
    """Draw a uniform ordering from the seed, run the lazy grid rule, settle payment.

    Returns the outcome together with the realized ordering; replaying the same
    seed reproduces both.
    """
    pi = random_permutation(v.n, rng_seed)
    c = _required_c(v, c)
    rule = lambda p: lazy_winner(v, pi, p, c=c)
    return outcome(rule, v, s), pi


def check_allocation_monotone(table: AllocationTable) -> list[tuple[int, tuple[int, ...], tuple[int, ...]]]:
    """Violations (bidder, losing profile, winning profile below it).

    Empty iff whenever a bidder wins, she keeps winning as her own signal
    rises.  Adjacent layers suffice: one-step monotonicity composes.
    """
    w = table.winner
    violations = []
    for i in range(table.space.n):
        lower = np.take(w, range(0, w.shape[i] - 1), axis=i)
        upper = np.take(w, range(1, w.shape[i]), axis=i)
        bad = np.argwhere((lower == i) & (upper != i))
        for loc in bad:
            lo = tuple(int(x) for x in loc)
            hi = list(lo)
            hi[i] += 1
            violations.append((i, tuple(hi), lo))
    return violations


def welfare_ratio(
    rule: Union[Rule, AllocationTable], v: ValuationInstance
) -> tuple[float, np.ndarray]:
    """Per-profile max value over winner value, and the worst ratio.

    Conventions: 0/0 is 1; a positive max with a zero-valued (or absent)
    winner is INFINITE.
    """
    table = as_table(rule, v)
    dense = v.tabulated().values
    maxv = dense.max(axis=0)
    ratios = np.ones(v.space.shape, dtype=np.float64)
    flat_w = table.winner.reshape(-1)
    flat_max = maxv.reshape(-1)
    flat_ratio = ratios.reshape(-1)
    flat_vals = dense.reshape(v.n, -1)
    for idx in range(flat_w.size):
        w = flat_w[idx]
        m = flat_max[idx]
        if w == NO_WINNER:
            flat_ratio[idx] = 1.0 if m == 0 else INFINITE
            continue
        vw = flat_vals[w, idx]
        if m == 0:
            flat_ratio[idx] = 1.0
        elif vw == 0:
            flat_ratio[idx] = INFINITE
        else:
            flat_ratio[idx] = m / vw
    return float(ratios.max()), ratios


def check_expost_truthful(
    rule: Union[Rule, AllocationTable],
    v: ValuationInstance,
    payment: Union[str, Callable[[int, tuple[int, ...]], float]] = "critical",
    rel_tol: float = 1e-9,
) -> list[tuple[tuple[int, ...], int, int, float, float]]:
    """Profitable deviations (profile, bidder, misreport, truthful u, deviating u).

    Sweeps every profile, bidder, and misreport.  Utilities use true values
    with the rule's payments at the reported profile; individual-rationality
    failures are reported as deviations to the bidder's own signal.  With the
    default "critical" payment the winner pays her value at the first signal
    that wins on her line.
    """
    table = as_table(rule, v)
    dense = v.tabulated().values
    n = v.n
    scale = float(dense.max(initial=0.0))
    tol = rel_tol * max(scale, 1.0)
    violations = []

    for i in range(n):
        k = v.space.sizes[i]
        w_lines = np.moveaxis(table.winner, i, -1).reshape(-1, k + 1)
        v_lines = np.moveaxis(dense[i], i, -1).reshape(-1, k + 1)
        contexts = list(np.ndindex(*(sz for ax, sz in enumerate(v.space.shape) if ax != i)))
        for row, ctx in enumerate(contexts):
            wins = w_lines[row] == i
            if payment == "critical":
                b_star = int(np.argmax(wins)) if wins.any() else None
                pay = v_lines[row][b_star] if b_star is not None else 0.0
                pays = np.where(wins, pay, 0.0)
            else:
                pays = np.array(
                    [payment(i, _insert(ctx, i, b)) for b in range(k + 1)], dtype=np.float64
                )
            for true_s in range(k + 1):
                value = v_lines[row][true_s]
                utils = np.where(wins, value, 0.0) - pays
                truthful = utils[true_s]
                best = int(np.argmax(utils))
                if utils[best] > truthful + tol:
                    violations.append(
                        (
                            _insert(ctx, i, true_s),
                            i,
                            best,
                            float(truthful),
                            float(utils[best]),
                        )
                    )
                if wins[true_s] and truthful < -tol:
                    violations.append(
                        (_insert(ctx, i, true_s), i, true_s, float(truthful), 0.0)
                    )
    return violations


def check_expost_truthful_literal(
    rule: Union[Rule, AllocationTable], v: ValuationInstance, rel_tol: float = 1e-9
) -> list[tuple[tuple[int, ...], int, int, float, float]]:
    """Triple-loop deviation sweep using per-profile outcomes; cross-checks the fast path."""
    win = _as_rule(rule)
    scale = float(v.tabulated().values.max(initial=0.0))
    tol = rel_tol * max(scale, 1.0)
    violations = []
    for p in v.space.profiles():
        for i in range(v.n):
            value = v.value(i, p)
            truth = outcome(win, v, p)
            u_truth = (value - truth.payment) if truth.winner == i else 0.0
            if truth.winner == i and u_truth < -tol:
                violations.append((p, i, p[i], u_truth, 0.0))
            for b in range(v.space.sizes[i] + 1):
                if b == p[i]:
                    continue
                q = list(p)
                q[i] = b
                dev = outcome(win, v, tuple(q))
                u_dev = (value - dev.payment) if dev.winner == i else 0.0
                if u_dev > u_truth + tol:
                    violations.append((p, i, b, u_truth, u_dev))
    return violations


def _insert(ctx: tuple[int, ...], axis: int, value: int) -> tuple[int, ...]:
    return ctx[:axis] + (value,) + ctx[axis:]


def _as_rule(rule: Union[Rule, AllocationTable]) -> Rule:
    if isinstance(rule, AllocationTable):
        return rule.winner_at
    return rule


def as_table(rule: Union[Rule, AllocationTable], v: ValuationInstance) -> AllocationTable:
    """Materialize a winner function over the whole grid (subject to the profile cap)."""
    if isinstance(rule, AllocationTable):
        return rule
    winner = np.full(v.space.shape, NO_WINNER, dtype=np.int32)
    for p in v.space.profiles():
        w = rule(p)
        winner[p] = NO_WINNER if w is None else w
    return AllocationTable(space=v.space, winner=winner)


def check_hypergrid_internal_chain(
    v: ValuationInstance,
    pi: Sequence[int],
    s: Sequence[int],
    c: Optional[float] = None,
) -> None:
    """Assert the two internal invariants of the grid mechanism at one profile.

    The tentative winner's value never decreases along the iteration chain, and
    the top bidder's value never jumps between consecutive intermediate
    profiles by more than c^2 times the final winner's value.
    """
    c = _required_c(v, c)
    w, trace = lazy_winner_trace(v, pi, s, c=c)
    p = v.space.validate_profile(s)
    chain_vals = [v.value(b, q) for b, q in trace]
    for a, b in zip(chain_vals, chain_vals[1:]):
        if b < a - 1e-12 * max(1.0, abs(a)):
            raise AssertionError(
                f"tentative winner value decreased {a} -> {b} along {pi} at {p}"
            )
    vals = v.values_at(p)
    istar = _argmax_lowest(vals)
    bound = c * c * v.value(w, p)
    prev = v.value(istar, trace[0][1])
    start = v.value(istar, tuple([0] * v.n))
    if prev - start > bound + 1e-9 * max(1.0, bound):
        raise AssertionError("first iteration moved the top value by more than c^2 * winner")
    for _, q in trace[1:]:
        cur = v.value(istar, q)
        if cur - prev > bound + 1e-9 * max(1.0, bound):
            raise AssertionError(
                f"top bidder's value jumped {prev} -> {cur} > c^2 * winner value {bound}"
            )
        prev = cur
