"""Oracles: exhaustive monotone search, ordering averages, closed forms."""

from itertools import product

import numpy as np
import pytest

from ivauctions import (
    CapExceeded,
    SignalSpace,
    ValuationInstance,
    best_monotone_ratio,
    check_allocation_monotone,
    closed_form_rand_impossibility,
    compute_c,
    exact_random_hypergrid_stats,
    hypergrid_coloring,
    monte_carlo_random_hypergrid,
    optimal_welfare,
    two_bidder_coloring,
    welfare_ratio,
)
from ivauctions import instances as gen
from ivauctions.oracle import enumerate_monotone_tables

REL = 1e-9


def test_optimal_welfare_examples():
    v = gen.gen_tight_hypergrid(4, 2.0)
    assert optimal_welfare(v, (1, 1, 1, 1)) == 6.0
    ri = gen.gen_rand_impossibility(3)
    assert optimal_welfare(ri, (0, 0, 0)) == 0.0
    b = gen.gen_three_bidder_no_c()
    assert optimal_welfare(b, (1, 1, 1)) == 0.018915


# ---------------------------------------------------------------------------
# Monotone-table enumeration.
# ---------------------------------------------------------------------------


def brute_force_monotone_tables(v):
    """Unpruned twin: filter all n^P tables by the one-step monotonicity test."""
    space = v.space
    profiles = list(space.profiles())
    out = []
    for combo in product(range(v.n), repeat=len(profiles)):
        table = dict(zip(profiles, combo))
        ok = True
        for p, w in table.items():
            for axis in range(v.n):
                if p[axis] >= 1:
                    q = list(p)
                    q[axis] -= 1
                    if table[tuple(q)] == axis and w != axis:
                        ok = False
        if ok:
            out.append(np.array(combo, dtype=np.int32))
    return out


def test_pruned_enumeration_matches_unpruned():
    cases = [
        gen.gen_det_impossibility(2.0),
        gen.gen_two_by_two_tight(2.0),
        ValuationInstance(
            space=SignalSpace((1, 1)),
            values=np.stack([np.ones((2, 2)), np.zeros((2, 2))]),
        ),
    ]
    for v in cases:
        pruned = sorted(tuple(t) for t in enumerate_monotone_tables(v))
        brute = sorted(tuple(t) for t in brute_force_monotone_tables(v))
        assert pruned == brute


def test_best_monotone_det_impossibility():
    for r in (2.0, 5.0, 10.0):
        report = best_monotone_ratio(gen.gen_det_impossibility(r))
        assert report.best_ratio == pytest.approx(r, rel=REL)
        # bidder 2 carries a value-irrelevant signal axis, so 6 of 16 tables
        assert report.monotone_count == 6


def test_best_monotone_two_by_two():
    for c in (1.5, 2.0, 4.0):
        report = best_monotone_ratio(gen.gen_two_by_two_tight(c))
        assert report.best_ratio == pytest.approx(c, rel=REL)


def test_best_monotone_three_bidder_exceeds_its_crossing_constant():
    v = gen.gen_three_bidder_no_c()
    report = best_monotone_ratio(v)
    assert report.best_ratio > 2.0 + 1e-6
    assert report.monotone_count > 0


def test_witness_is_monotone_and_attains_ratio():
    v = gen.gen_two_by_two_tight(2.0)
    report = best_monotone_ratio(v)
    table = report.witness_table
    assert check_allocation_monotone(table) == []
    worst, _ = welfare_ratio(table, v)
    assert worst == report.best_ratio


def test_mechanisms_cannot_beat_exhaustive_optimum():
    v = gen.gen_oil_no_sc(2)
    best = best_monotone_ratio(v).best_ratio
    worst, _ = welfare_ratio(two_bidder_coloring(v), v)
    assert worst >= best * (1 - REL)
    b = gen.gen_three_bidder_no_c()
    best_b = best_monotone_ratio(b).best_ratio
    for pi in ((0, 1, 2), (2, 1, 0)):
        worst, _ = welfare_ratio(hypergrid_coloring(b, pi), b)
        assert worst >= best_b * (1 - REL)


def test_search_cap():
    v, _, _ = gen.gen_random_tabulated(3, 2, seed=1)
    with pytest.raises(CapExceeded):
        best_monotone_ratio(v, cap=5)


# ---------------------------------------------------------------------------
# Ordering averages.
# ---------------------------------------------------------------------------


def test_exact_stats_single_bidder():
    sp = SignalSpace((2,))
    v = ValuationInstance(space=sp, values=np.array([[0.0, 3.0, 5.0]]))
    mean, per_pi = exact_random_hypergrid_stats(v, (1,))
    assert mean == 3.0 and per_pi == {(0,): 3.0}


def test_exact_stats_separable_bound():
    for seed in (3, 4):
        v = gen.gen_random_separable(4, 2, 2.0, seed=seed)
        c = compute_c(v)
        for s in [(2, 1, 0, 2), (1, 1, 1, 1)]:
            mean, _ = exact_random_hypergrid_stats(v, s)
            assert mean >= optimal_welfare(v, s) / (2 * c) * (1 - REL)


def test_monte_carlo_agrees_with_exact():
    v = gen.gen_tight_hypergrid(5, 2.0)
    s = (1, 1, 1, 1, 1)
    exact, _ = exact_random_hypergrid_stats(v, s)
    mean, se = monte_carlo_random_hypergrid(v, s, samples=4000, seed=123)
    assert abs(mean - exact) <= max(3 * se, 1e-12)


def test_monte_carlo_zero_variance_when_degenerate():
    sp = SignalSpace((1, 1))
    v = ValuationInstance(space=sp, values=np.ones((2, 2, 2)))
    mean, se = monte_carlo_random_hypergrid(v, (1, 1), samples=50, seed=0)
    assert mean == 1.0 and se == 0.0


def test_monte_carlo_seed_reproducibility():
    v = gen.gen_tight_hypergrid(4, 2.0)
    a = monte_carlo_random_hypergrid(v, (1, 1, 1, 1), samples=200, seed=5)
    b = monte_carlo_random_hypergrid(v, (1, 1, 1, 1), samples=200, seed=5)
    assert a == b


# ---------------------------------------------------------------------------
# Closed forms for the no-crossing impossibility family.
# ---------------------------------------------------------------------------


def test_closed_form_direct_substitution():
    # eps^n + n * eps^(n-1) * (1 - eps) = 0.25 + 2 * 0.5 * 0.5
    opt, bound, uniform = closed_form_rand_impossibility(2, 0.5)
    assert opt == pytest.approx(0.75, abs=1e-15)
    assert bound == pytest.approx(0.5, abs=1e-15)
    assert uniform == pytest.approx(0.5, abs=1e-15)


def test_closed_form_matches_enumeration():
    for n in range(2, 7):
        for eps in (0.1, 0.01):
            opt, bound, uniform = closed_form_rand_impossibility(n, eps)
            assert abs(uniform - bound) <= 1e-12
            ratio = bound / opt
            assert abs(ratio - 1.0 / (n * (1 - eps) + eps)) <= 1e-12


def test_closed_form_ratio_approaches_one_over_n():
    n = 5
    for eps in (0.1, 0.01, 0.001):
        opt, bound, _ = closed_form_rand_impossibility(n, eps)
        assert bound / opt <= 1.0 / (n * (1 - eps))
    opt, bound, _ = closed_form_rand_impossibility(n, 1e-6)
    assert bound / opt == pytest.approx(1.0 / n, rel=1e-4)
