"""Revenue via conditional monopoly reserves on top of any monotone rule.

Given a discrete prior over signal profiles, a bidder's winning (losing)
conditional monopoly reserve is the posted price maximizing price times
acceptance probability over her posterior, conditioned on her signal being at
or above (below) her critical signal on the line.  The reserve-backed
mechanism offers the base rule's winner her winning reserve with one
probability, and otherwise draws a uniform bidder subset, reruns the base rule
restricted to it, and offers that winner her reserve under the restricted
rule.  Expected revenue is evaluated exactly by enumerating profiles, internal
branches, subsets, and rule realizations whenever that enumeration is small,
and by seeded Monte Carlo otherwise.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Iterator, Optional, Sequence, Union

import numpy as np

from .mechanisms import (
    AllocationTable,
    Rule,
    critical_signal,
    high_if_possible,
    lazy_winner,
    outcome,
)
from .model import (
    SignalSpace,
    ValidationError,
    ValuationInstance,
    compute_c,
    restrict_bidders,
    validate_permutation,
)

PROB_TOL = 1e-12

WINNING = "winning"
LOSING = "losing"


class UndefinedReserve(ValidationError):
    """The conditioning event of a reserve quote has probability zero (or no critical signal)."""


@dataclass(frozen=True)
class JointPrior:
    """Discrete joint distribution over signal profiles.

    Either a product of per-bidder marginals or an explicit sparse atom list.
    Probabilities must be nonnegative and sum to 1 within 1e-12.
    """

    space: SignalSpace
    marginals: Optional[tuple[np.ndarray, ...]] = None
    atoms: Optional[dict[tuple[int, ...], float]] = None

    def __post_init__(self):
        if (self.marginals is None) == (self.atoms is None):
            raise ValidationError("prior needs exactly one of marginals or atoms")
        if self.marginals is not None:
            if len(self.marginals) != self.space.n:
                raise ValidationError(
                    f"need {self.space.n} marginals, got {len(self.marginals)}"
                )
            ms = []
            for i, m in enumerate(self.marginals):
                arr = np.asarray(m, dtype=np.float64)
                if arr.shape != (self.space.sizes[i] + 1,):
                    raise ValidationError(
                        f"marginal {i} must have {self.space.sizes[i] + 1} entries"
                    )
                if np.any(arr < 0):
                    raise ValidationError("probabilities must be nonnegative")
                if abs(float(arr.sum()) - 1.0) > PROB_TOL:
                    raise ValidationError(f"marginal {i} sums to {arr.sum()}, not 1")
                arr = arr.copy()
                arr.flags.writeable = False
                ms.append(arr)
            object.__setattr__(self, "marginals", tuple(ms))
        else:
            atoms = {}
            total = 0.0
            for profile, p in self.atoms.items():
                profile = self.space.validate_profile(profile)
                if p < 0:
                    raise ValidationError("probabilities must be nonnegative")
                atoms[profile] = atoms.get(profile, 0.0) + float(p)
                total += float(p)
            if abs(total - 1.0) > PROB_TOL:
                raise ValidationError(f"atom probabilities sum to {total}, not 1")
            object.__setattr__(self, "atoms", atoms)

    def prob(self, profile: Sequence[int]) -> float:
        p = self.space.validate_profile(profile)
        if self.marginals is not None:
            out = 1.0
            for i, s in enumerate(p):
                out *= float(self.marginals[i][s])
            return out
        return self.atoms.get(p, 0.0)

    def support(self) -> Iterator[tuple[tuple[int, ...], float]]:
        """Profiles with positive probability, in row-major order."""
        if self.atoms is not None:
            for p in sorted(self.atoms):
                if self.atoms[p] > 0:
                    yield p, self.atoms[p]
            return
        for p in self.space.profiles():
            pr = self.prob(p)
            if pr > 0:
                yield p, pr

    def line_probs(self, i: int, s_minus_i: Sequence[int]) -> np.ndarray:
        """Joint probabilities along bidder i's line at fixed s_minus_i."""
        line = list(s_minus_i)
        if len(line) != self.space.n - 1:
            raise ValidationError("s_minus_i must fix every other bidder's signal")
        out = np.empty(self.space.sizes[i] + 1, dtype=np.float64)
        for t in range(out.size):
            out[t] = self.prob(tuple(line[:i] + [t] + line[i:]))
        return out

    def to_json(self) -> dict:
        if self.marginals is not None:
            return {
                "kind": "product",
                "marginals": [[float(x) for x in m] for m in self.marginals],
            }
        return {
            "kind": "sparse",
            "atoms": [
                {"profile": list(p), "p": float(pr)} for p, pr in sorted(self.atoms.items())
            ],
        }

    @staticmethod
    def from_json(obj: dict, space: Optional[SignalSpace] = None) -> "JointPrior":
        kind = obj.get("kind")
        if kind == "product":
            marginals = [np.asarray(m, dtype=np.float64) for m in obj["marginals"]]
            sp = space or SignalSpace(tuple(len(m) - 1 for m in marginals))
            return JointPrior(space=sp, marginals=tuple(marginals))
        if kind == "sparse":
            atoms = {tuple(a["profile"]): float(a["p"]) for a in obj["atoms"]}
            if space is None:
                n = len(next(iter(atoms)))
                sizes = tuple(max(1, max(p[i] for p in atoms)) for i in range(n))
                space = SignalSpace(sizes)
            return JointPrior(space=space, atoms=atoms)
        raise ValidationError(f"unknown prior kind {kind!r}")


def uniform_product_prior(space: SignalSpace) -> JointPrior:
    return JointPrior(
        space=space,
        marginals=tuple(np.full(k + 1, 1.0 / (k + 1)) for k in space.sizes),
    )


@dataclass(frozen=True)
class ReserveQuote:
    """Optimal posted price for one bidder on one line, under one conditioning side.

    ``expected_revenue`` is price times the posterior acceptance probability;
    the price always sits on a support value of the bidder on that line, and
    ties in price * probability break toward the higher price.
    """

    price: float
    expected_revenue: float
    condition: str
    bidder: int
    context: tuple[int, ...]


def _monopoly_quote(
    values: np.ndarray, probs: np.ndarray, condition: str, bidder: int, context: tuple[int, ...]
) -> ReserveQuote:
    mass = float(probs.sum())
    if mass <= 0:
        raise UndefinedReserve(f"conditioning event has zero probability for bidder {bidder}")
    posterior = probs / mass
    support = sorted({float(values[t]) for t in range(values.size) if posterior[t] > 0})
    best_price = None
    best_rev = -1.0
    for price in support:
        accept = float(posterior[values >= price].sum())
        rev = price * accept
        if rev > best_rev or (rev == best_rev and (best_price is None or price > best_price)):
            best_rev = rev
            best_price = price
    return ReserveQuote(
        price=best_price,
        expected_revenue=best_rev,
        condition=condition,
        bidder=bidder,
        context=context,
    )


def _line_values(v: ValuationInstance, i: int, context: tuple[int, ...]) -> np.ndarray:
    return np.array(
        [v.value(i, context[:i] + (t,) + context[i:]) for t in range(v.space.sizes[i] + 1)]
    )


def winning_reserve(
    prior: JointPrior,
    v: ValuationInstance,
    rule: Union[Rule, AllocationTable],
    i: int,
    s_minus_i: Sequence[int],
) -> ReserveQuote:
    """Monopoly price for bidder i given others at s_minus_i and s_i at least critical.

    The quote's price always dominates the bidder's value at her critical
    signal, so posting it preserves truthfulness of the underlying rule.
    """
    context = tuple(int(x) for x in s_minus_i)
    b_star = critical_signal(rule, v, i, context)
    if b_star is None:
        raise UndefinedReserve(f"bidder {i} never wins on line {context}")
    values = _line_values(v, i, context)
    probs = prior.line_probs(i, context)
    quote = _monopoly_quote(values[b_star:], probs[b_star:], WINNING, i, context)
    assert quote.price >= values[b_star], "reserve must dominate the critical value"
    return quote


def losing_reserve(
    prior: JointPrior,
    v: ValuationInstance,
    rule: Union[Rule, AllocationTable],
    i: int,
    s_minus_i: Sequence[int],
) -> ReserveQuote:
    """Monopoly price for bidder i conditioned on losing (s_i below critical).

    When i never wins on the line, the critical signal is taken one past the
    top signal, so the condition is vacuous and the whole line is the posterior.
    """
    context = tuple(int(x) for x in s_minus_i)
    b_star = critical_signal(rule, v, i, context)
    k = v.space.sizes[i]
    cutoff = k + 1 if b_star is None else b_star
    if cutoff == 0:
        raise UndefinedReserve(f"bidder {i} always wins on line {context}; losing side empty")
    values = _line_values(v, i, context)
    probs = prior.line_probs(i, context)
    return _monopoly_quote(values[:cutoff], probs[:cutoff], LOSING, i, context)


# ---------------------------------------------------------------------------
# Rule families: a base rule plus its restriction to any bidder subset.
# ---------------------------------------------------------------------------


class RuleFamily:
    """A monotone allocation rule defined for every sub-market of an instance.

    ``realizations(Z)`` yields (probability, rule) pairs covering the family's
    internal randomness; each rule maps a full reported profile to a winner in
    Z (or None).  Restricted rules rerun the same algorithm over the bidders
    in Z, with the other bidders' reported signals held fixed inside every
    valuation evaluation and excluded from winning.
    """

    def __init__(self, v: ValuationInstance):
        self.v = v

    @property
    def n(self) -> int:
        return self.v.n

    def realizations(self, bidders: Sequence[int]) -> list[tuple[float, Rule]]:
        raise NotImplementedError

    def sample_rule(self, bidders: Sequence[int], rng: random.Random) -> Rule:
        """One internal-randomness draw; deterministic families ignore the generator."""
        rules = self.realizations(bidders)
        if len(rules) == 1:
            return rules[0][1]
        return rules[rng.randrange(len(rules))][1]

    def realization_count(self, market_size: int) -> int:
        return 1

    @property
    def is_deterministic(self) -> bool:
        return self.realization_count(self.n) == 1


def _sub_rule(
    v: ValuationInstance,
    keep: tuple[int, ...],
    run: Callable[[ValuationInstance, tuple[int, ...]], Optional[int]],
) -> Rule:
    """Lift a sub-market algorithm to a rule over full profiles."""

    def rule(profile: tuple[int, ...]) -> Optional[int]:
        sub = restrict_bidders(v, keep, profile)
        sub_profile = tuple(profile[b] for b in keep)
        w = run(sub, sub_profile)
        return None if w is None else keep[w]

    return rule


class HypergridFamily(RuleFamily):
    """Order-driven grid coloring as a family.

    With a fixed ordering the family is deterministic and restrictions use the
    induced order on the subset; without one, every restriction is uniformly
    random over the subset's orderings.
    """

    def __init__(
        self, v: ValuationInstance, pi: Optional[Sequence[int]] = None, c: Optional[float] = None
    ):
        super().__init__(v)
        self.pi = None if pi is None else validate_permutation(pi, v.n)
        self.c = compute_c(v) if c is None else float(c)
        if not math.isfinite(self.c):
            raise ValidationError("grid family needs a finite crossing constant")

    def _rule_for_order(self, keep: tuple[int, ...], order: tuple[int, ...]) -> Rule:
        sub_order = tuple(keep.index(b) for b in order)
        return _sub_rule(
            self.v, keep, lambda sub, sp: lazy_winner(sub, sub_order, sp, c=self.c)
        )

    def realizations(self, bidders):
        keep = tuple(bidders)
        if not keep:
            return [(1.0, lambda profile: None)]
        if self.pi is not None:
            return [(1.0, self._rule_for_order(keep, tuple(b for b in self.pi if b in keep)))]
        orders = list(permutations(keep))
        prob = 1.0 / len(orders)
        return [(prob, self._rule_for_order(keep, order)) for order in orders]

    def sample_rule(self, bidders, rng):
        keep = tuple(bidders)
        if not keep:
            return lambda profile: None
        if self.pi is not None:
            return self._rule_for_order(keep, tuple(b for b in self.pi if b in keep))
        order = list(keep)
        rng.shuffle(order)
        return self._rule_for_order(keep, tuple(order))

    def realization_count(self, market_size: int) -> int:
        return 1 if self.pi is not None else math.factorial(max(1, market_size))


class HighIfPossibleFamily(RuleFamily):
    """The two-signal high-bidder-favoring mechanism as a deterministic family."""

    def __init__(self, v: ValuationInstance, c: Optional[float] = None):
        super().__init__(v)
        if any(k != 1 for k in v.space.sizes):
            raise ValidationError("family needs two signals per bidder")
        self.c = compute_c(v) if c is None else float(c)
        if not math.isfinite(self.c):
            raise ValidationError("family needs a finite crossing constant")

    def realizations(self, bidders):
        keep = tuple(bidders)
        if not keep:
            return [(1.0, lambda profile: None)]

        def run(sub: ValuationInstance, sp: tuple[int, ...]) -> Optional[int]:
            return high_if_possible(sub, c=self.c).winner_at(sp)

        return [(1.0, _sub_rule(self.v, keep, run))]


def family_worst_ratio(family: RuleFamily, v: ValuationInstance) -> float:
    """Worst per-profile welfare ratio of a deterministic family over all sub-markets.

    This is the approximation constant the revenue reduction actually needs:
    every restriction of the rule must cover the best bidder of its own
    sub-market at every profile.
    """
    if not family.is_deterministic:
        raise ValidationError("worst ratio over realizations needs a deterministic family")
    n = v.n
    worst = 1.0
    subsets = [tuple(b for b in range(n) if mask >> b & 1) for mask in range(1, 2**n)]
    for profile in v.space.profiles():
        vals = v.values_at(profile)
        for keep in subsets:
            rule = family.realizations(keep)[0][1]
            w = rule(tuple(profile))
            top = max(float(vals[b]) for b in keep)
            if top == 0:
                continue
            if w is None or float(vals[w]) == 0:
                return math.inf
            worst = max(worst, top / float(vals[w]))
    return worst


# ---------------------------------------------------------------------------
# The reserve-backed mechanism and expected-revenue evaluation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RevenueEvent:
    """One realization branch at one profile: its probability and what happened."""

    prob: float
    revenue: float
    buyer: Optional[int]
    price: Optional[float]
    buyer_value: Optional[float]
    branch: str


@dataclass(frozen=True)
class ReserveBackedMechanism:
    """Black-box welfare-to-revenue reduction around a rule family.

    With probability (alpha^2 + 1) / (alpha^2 + 4 alpha d / p^2 + 1) the base
    rule's winner is offered her winning conditional monopoly reserve; with the
    remaining probability a uniformly random subset of bidders is drawn and the
    winner of the restricted rerun is offered her reserve under that rerun.
    The sale price is the reserve itself, and the item stays unsold whenever
    the buyer's value falls short, so the mechanism is ex-post individually
    rational by construction.  ``p`` is the base family's per-subset
    probability of covering its sub-market optimum within alpha; deterministic
    bases use p = 1 and recover the (alpha^2 + 4 alpha d + 1) split.
    """

    v: ValuationInstance
    prior: JointPrior
    family: RuleFamily
    alpha: float
    d: float
    p: float = 1.0

    def __post_init__(self):
        if self.alpha < 1 or self.d < 1 or not 0 < self.p <= 1:
            raise ValidationError("need alpha >= 1, d >= 1, 0 < p <= 1")

    @property
    def branch_a_prob(self) -> float:
        a, d, p = self.alpha, self.d, self.p
        return (a * a + 1.0) / (a * a + 4.0 * a * d / (p * p) + 1.0)

    def _posted(self, rule: Rule, s: tuple[int, ...], branch: str, prob: float) -> RevenueEvent:
        i = rule(s)
        if i is None:
            return RevenueEvent(prob, 0.0, None, None, None, branch)
        context = tuple(x for b, x in enumerate(s) if b != i)
        try:
            quote = winning_reserve(self.prior, self.v, rule, i, context)
        except UndefinedReserve:
            return RevenueEvent(prob, 0.0, None, None, None, branch)
        value = self.v.value(i, s)
        sold = value >= quote.price
        return RevenueEvent(
            prob=prob,
            revenue=quote.price if sold else 0.0,
            buyer=i if sold else None,
            price=quote.price,
            buyer_value=value,
            branch=branch,
        )

    def profile_events(self, s: Sequence[int]) -> list[RevenueEvent]:
        """Exact enumeration of every internal branch at one reported profile."""
        s = self.v.space.validate_profile(s)
        n = self.v.n
        qa = self.branch_a_prob
        events = []
        for pr, rule in self.family.realizations(tuple(range(n))):
            events.append(self._posted(rule, s, "full", qa * pr))
        qb = (1.0 - qa) / 2**n
        for mask in range(2**n):
            keep = tuple(b for b in range(n) if mask >> b & 1)
            if not keep:
                events.append(RevenueEvent(qb, 0.0, None, None, None, "subset"))
                continue
            for pr, rule in self.family.realizations(keep):
                events.append(self._posted(rule, s, "subset", qb * pr))
        return events

    def profile_outcomes(self, s: Sequence[int]) -> list[tuple[float, float]]:
        return [(e.prob, e.revenue) for e in self.profile_events(s)]

    def enumeration_size(self) -> int:
        n = self.v.n
        subset_realizations = sum(
            math.comb(n, m) * self.family.realization_count(m) for m in range(n + 1)
        )
        per_profile = self.family.realization_count(n) + subset_realizations
        return sum(1 for _ in self.prior.support()) * per_profile

    def sample_event(self, s: Sequence[int], rng: random.Random) -> RevenueEvent:
        """One internal-randomness draw at one reported profile."""
        s = self.v.space.validate_profile(s)
        n = self.v.n
        if rng.random() < self.branch_a_prob:
            rule = self.family.sample_rule(tuple(range(n)), rng)
            return self._posted(rule, s, "full", 1.0)
        keep = tuple(b for b in range(n) if rng.random() < 0.5)
        if not keep:
            return RevenueEvent(1.0, 0.0, None, None, None, "subset")
        rule = self.family.sample_rule(keep, rng)
        return self._posted(rule, s, "subset", 1.0)

    def sample_revenue(self, s: Sequence[int], rng: random.Random) -> float:
        return self.sample_event(s, rng).revenue


def mechanism_m_outcome(
    v: ValuationInstance,
    prior: JointPrior,
    family: RuleFamily,
    alpha: float,
    d: float,
    p: float,
    s: Sequence[int],
    rng_seed: int,
) -> RevenueEvent:
    """One seeded run of the reserve-backed mechanism at one reported profile."""
    mech = ReserveBackedMechanism(v=v, prior=prior, family=family, alpha=alpha, d=d, p=p)
    return mech.sample_event(s, random.Random(rng_seed))


def expected_revenue(
    mechanism,
    prior: Optional[JointPrior] = None,
    cap: int = 1_000_000,
    samples: int = 100_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Expected revenue with its standard error (zero when computed exactly).

    ``mechanism`` provides per-profile exact branch enumeration through
    ``profile_outcomes`` (and its prior, unless one is passed explicitly).
    When profiles times branches stays under the cap the expectation is an
    exact sum; otherwise profiles are drawn from the prior with a seeded
    generator and internal branches are sampled.
    """
    prior = prior if prior is not None else mechanism.prior
    sizer = getattr(mechanism, "enumeration_size", None)
    size = sizer() if sizer is not None else sum(
        len(mechanism.profile_outcomes(s)) for s, _ in prior.support()
    )
    if size <= cap:
        total = 0.0
        for s, ps in prior.support():
            branch_probs = 0.0
            for prob, rev in mechanism.profile_outcomes(s):
                total += ps * prob * rev
                branch_probs += prob
            assert abs(branch_probs - 1.0) < 1e-9, "branch probabilities must sum to 1"
        return total, 0.0
    rng = random.Random(seed)
    support = list(prior.support())
    cum = list(np.cumsum([p for _, p in support]))
    total = 0.0
    total_sq = 0.0
    for _ in range(samples):
        idx = min(bisect.bisect_left(cum, rng.random() * cum[-1]), len(support) - 1)
        rev = mechanism.sample_revenue(support[idx][0], rng)
        total += rev
        total_sq += rev * rev
    mean = total / samples
    var = max(0.0, (total_sq - samples * mean * mean) / (samples - 1)) if samples > 1 else 0.0
    return mean, math.sqrt(var / samples) if samples > 1 else 0.0


def lookahead_benchmark(
    prior: JointPrior, v: ValuationInstance, rule: Union[Rule, AllocationTable]
) -> float:
    """Upper bound on optimal revenue for a deterministic monotone rule.

    Per profile: the winner's winning-reserve expected revenue on her line plus
    the highest-valued non-winner's value, averaged over the prior.  Undefined
    reserves (possible only off the support) contribute zero.
    """
    win = rule.winner_at if isinstance(rule, AllocationTable) else rule
    total = 0.0
    for s, ps in prior.support():
        vals = v.values_at(s)
        w = win(s)
        if w is None:
            runner = float(vals.max())
            reserve_rev = 0.0
        else:
            runner = max((float(vals[j]) for j in range(v.n) if j != w), default=0.0)
            context = tuple(x for b, x in enumerate(s) if b != w)
            try:
                reserve_rev = winning_reserve(prior, v, rule, w, context).expected_revenue
            except UndefinedReserve:
                reserve_rev = 0.0
        total += ps * (reserve_rev + runner)
    return total


def lookahead_benchmark_family(
    prior: JointPrior, v: ValuationInstance, family: RuleFamily
) -> float:
    """Lookahead averaged over the family's full-market rule realizations."""
    total = 0.0
    for prob, rule in family.realizations(tuple(range(v.n))):
        total += prob * lookahead_benchmark(prior, v, rule)
    return total


def expected_payment_revenue(
    rule: Union[Rule, AllocationTable], v: ValuationInstance, prior: JointPrior
) -> float:
    """Expected critical-signal payment revenue of a rule under truthful play."""
    total = 0.0
    for s, ps in prior.support():
        total += ps * outcome(rule, v, s).payment
    return total
