"""Model layer: signal grids, structural constants, and their exactness."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivauctions import (
    INFINITE,
    CapExceeded,
    SignalSpace,
    ValidationError,
    ValuationInstance,
    alpha_approximates,
    check_value_monotone,
    compute_c,
    compute_d,
    discrete_derivative,
    instance_from_json,
    instance_to_json,
    intermediate_profile,
    restrict_box,
    single_crossing_report,
)
from ivauctions import instances as gen

REL = 1e-9


# ---------------------------------------------------------------------------
# Signal spaces and the row-major wire contract.
# ---------------------------------------------------------------------------


def test_space_validation():
    with pytest.raises(ValidationError):
        SignalSpace(())
    with pytest.raises(ValidationError):
        SignalSpace((0, 2))
    with pytest.raises(ValidationError):
        SignalSpace((100, 100, 100, 100), profile_cap=10_000)
    sp = SignalSpace((2, 1))
    assert sp.n == 2 and sp.profile_count == 6
    with pytest.raises(ValidationError):
        sp.validate_profile((3, 0))
    with pytest.raises(ValidationError):
        sp.validate_profile((1,))


def test_row_major_index_contract():
    sp = SignalSpace((2, 1, 3))
    shape = sp.shape
    for idx, p in enumerate(sp.profiles()):
        manual = 0
        for i, s in enumerate(p):
            stride = 1
            for j in range(i + 1, len(shape)):
                stride *= shape[j]
            manual += s * stride
        assert manual == idx == sp.index_of(p)
        assert sp.profile_at(idx) == tuple(p)


def test_json_roundtrip_row_major():
    v = gen.gen_three_bidder_no_c()
    obj = instance_to_json(v)
    # spot-check the flat layout against the index formula
    sp = v.space
    assert obj["values"][1][sp.index_of((2, 0, 0))] == pytest.approx(0.007436)
    back = instance_from_json(obj)
    assert np.array_equal(back.values, v.values)


def test_json_validation_errors():
    with pytest.raises(ValidationError):
        instance_from_json({"sizes": [1, 1]})
    with pytest.raises(ValidationError):
        instance_from_json({"sizes": [1], "values": [[0.0, 1.0], [0.0, 1.0]]})
    with pytest.raises(ValidationError):
        instance_from_json({"sizes": [1], "values": [[0.0, 1.0, 2.0]]})
    with pytest.raises(ValidationError):
        instance_from_json({"sizes": [1], "values": [[0.0, -1.0]]})


def test_instance_rejects_nonfinite_and_negative():
    sp = SignalSpace((1,))
    with pytest.raises(ValidationError):
        ValuationInstance(space=sp, values=np.array([[0.0, math.nan]]))
    with pytest.raises(ValidationError):
        ValuationInstance(space=sp, values=np.array([[0.0, -0.5]]))


def test_oracle_backed_refuses_tabulation_above_cap():
    sp = SignalSpace((1,) * 30, profile_cap=2**40)
    v = ValuationInstance(space=sp, evaluate=lambda i, p: float(sum(p)))
    assert v.value(3, (1,) * 30) == 30.0
    with pytest.raises(CapExceeded):
        v.tabulated()
    with pytest.raises(CapExceeded):
        compute_c(v)
    with pytest.raises(ValidationError):
        SignalSpace((1,) * 30, profile_cap=1000)


# ---------------------------------------------------------------------------
# Discrete derivative.
# ---------------------------------------------------------------------------


def test_derivative_oil_example():
    v = gen.gen_oil_sc(3)
    assert discrete_derivative(v, target=1, direction=0, s=(1, 0)) == pytest.approx(2.0)


def test_derivative_constant_direction_is_zero():
    v = gen.gen_oil_sc(3)
    # both valuations ignore the second bidder's signal
    assert discrete_derivative(v, target=0, direction=1, s=(2, 1)) == 0.0


def test_derivative_three_bidder_table():
    v = gen.gen_three_bidder_no_c()
    d = discrete_derivative(v, target=1, direction=0, s=(2, 0, 0))
    assert d == pytest.approx(0.006560, abs=1e-12)


def test_derivative_preconditions():
    v = gen.gen_oil_sc(2)
    with pytest.raises(ValidationError):
        discrete_derivative(v, target=0, direction=0, s=(0, 0))
    with pytest.raises(ValidationError):
        discrete_derivative(v, target=2, direction=0, s=(1, 0))


@given(seed=st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_derivative_telescopes(seed):
    v, _, _ = gen.gen_random_tabulated(2, 4, seed=seed)
    for j in range(2):
        for s1 in range(1, 5):
            total = sum(
                discrete_derivative(v, target=j, direction=0, s=(t, 2)) for t in range(1, s1 + 1)
            )
            assert total == pytest.approx(v.value(j, (s1, 2)) - v.value(j, (0, 2)), rel=1e-9)


# ---------------------------------------------------------------------------
# Crossing constant.
# ---------------------------------------------------------------------------


def test_compute_c_oil_sc_clamps_to_one():
    assert compute_c(gen.gen_oil_sc(4)) == 1.0
    assert single_crossing_report(gen.gen_oil_sc(4)).raw == pytest.approx(2.0 / 3.0)


def test_compute_c_oil_no_sc():
    v = gen.gen_oil_no_sc(5)
    sub = restrict_box(v, (1, 0), (5, 5))  # clamp region excluded
    assert compute_c(sub) == pytest.approx(1.5, rel=REL)
    assert compute_c(v) == pytest.approx(1.5, rel=REL)


def test_compute_c_det_impossibility_infinite():
    assert compute_c(gen.gen_det_impossibility(2.0)) == INFINITE


def test_compute_c_three_bidder_is_two():
    assert compute_c(gen.gen_three_bidder_no_c()) == pytest.approx(2.0, rel=REL)


def test_compute_c_rejects_nonmonotone():
    sp = SignalSpace((1, 1))
    vals = np.array([[[7.0, 7.0], [5.0, 7.0]], [[0.0, 0.0], [0.0, 0.0]]])
    with pytest.raises(ValidationError):
        compute_c(ValuationInstance(space=sp, values=vals))


def test_compute_c_exactness(finite_c_corpus):
    """Measured c satisfies every constraint; shrinking it breaks a witness."""
    for name, v, c, _ in finite_c_corpus:
        dense = v.values
        for i in range(v.n):
            diffs = np.diff(dense, axis=i + 1)
            own = diffs[i]
            for j in range(v.n):
                if j == i:
                    continue
                assert np.all(c * own >= diffs[j] - 1e-9 * np.maximum(1.0, diffs[j])), name
        report = single_crossing_report(v)
        if report.raw > 1.0:
            shrunk = c * (1.0 - 1e-6)
            violated = False
            for i in range(v.n):
                diffs = np.diff(dense, axis=i + 1)
                for j in range(v.n):
                    if j != i and np.any(shrunk * diffs[i] < diffs[j]):
                        violated = True
            assert violated, name


def test_crossing_witness_attains_supremum():
    v = gen.gen_two_by_two_tight(2.0)
    rep = single_crossing_report(v)
    i, j, s = rep.witness
    assert discrete_derivative(v, target=j, direction=i, s=s) == pytest.approx(
        rep.c * discrete_derivative(v, target=i, direction=i, s=s), rel=REL
    )


# ---------------------------------------------------------------------------
# Concavity constant.
# ---------------------------------------------------------------------------


def test_compute_d_separable_is_one():
    # equality only up to cancellation noise: stored values are sums of terms
    assert compute_d(gen.gen_random_separable(3, 3, 2.0, seed=5)) == pytest.approx(1.0, rel=REL)
    assert compute_d(gen.gen_oil_sc(4)) == 1.0


def test_compute_d_tight_hypergrid_is_one():
    assert compute_d(gen.gen_tight_hypergrid(4, 2.0)) == 1.0


def test_compute_d_rand_impossibility_infinite():
    assert compute_d(gen.gen_rand_impossibility(3)) == INFINITE


def test_compute_d_engineered_growth():
    # identical valuations f(s1+s2) with increment ratio exactly 2
    sp = SignalSpace((1, 1))
    f = {0: 1.0, 1: 2.0, 2: 4.0}  # increments 1 then 2
    vals = np.array([[[f[0], f[1]], [f[1], f[2]]]] * 2)
    v = ValuationInstance(space=sp, values=vals)
    assert compute_c(v) == 1.0
    assert compute_d(v) == pytest.approx(2.0, rel=REL)


# ---------------------------------------------------------------------------
# Approximation predicate and intermediate profiles.
# ---------------------------------------------------------------------------


def test_alpha_approximates_reflexive():
    v = gen.gen_oil_sc(2)
    assert alpha_approximates(v, 0, 0, (1, 1), 1.0)


def test_alpha_approximates_oil_no_sc():
    v = gen.gen_oil_no_sc(3)
    # at s1 = 2: v = (3, 4); 4 <= 1.5 * 3
    assert alpha_approximates(v, 0, 1, (2, 0), 1.5)


def test_alpha_approximates_det_impossibility():
    r = 3.0
    v = gen.gen_det_impossibility(r)
    assert not alpha_approximates(v, 0, 1, (1, 0), r - 0.5)


def test_intermediate_profile_example():
    # ordering (5,2,3,1,4) written 1-based; prefix of length 3 keeps bidders 5, 2, 3
    pi = (4, 1, 2, 0, 3)
    s = (10, 20, 30, 40, 50)
    assert intermediate_profile(s, pi, 3) == (0, 20, 30, 0, 50)
    assert intermediate_profile(s, pi, 0) == (0, 0, 0, 0, 0)
    assert intermediate_profile(s, pi, 5) == s


@given(data=st.data())
@settings(max_examples=50, deadline=None)
def test_intermediate_profile_monotone_in_prefix(data):
    n = data.draw(st.integers(2, 6))
    s = tuple(data.draw(st.integers(0, 5)) for _ in range(n))
    pi = tuple(data.draw(st.permutations(range(n))))
    prev = intermediate_profile(s, pi, 0)
    for i in range(1, n + 1):
        cur = intermediate_profile(s, pi, i)
        assert all(a <= b for a, b in zip(prev, cur))
        prev = cur


# ---------------------------------------------------------------------------
# Structural implications of the crossing constant, checked exhaustively.
# ---------------------------------------------------------------------------


def _approximates(v, i, j, s, alpha):
    return v.value(j, s) <= alpha * v.value(i, s)


def test_approximation_survives_own_signal_increase(finite_c_corpus):
    """If i covers j within alpha >= c at s, it still does at any higher own signal."""
    for name, v, c, _ in finite_c_corpus:
        if v.space.profile_count > 2000:
            continue
        alpha = c * (1 + 1e-12)
        for s in v.space.profiles():
            for i in range(v.n):
                for j in range(v.n):
                    if i == j or not _approximates(v, i, j, s, alpha):
                        continue
                    q = list(s)
                    for si in range(s[i] + 1, v.space.sizes[i] + 1):
                        q[i] = si
                        assert _approximates(v, i, j, tuple(q), alpha * (1 + 1e-12)), (
                            name, i, j, s, si,
                        )


def test_failed_approximation_survives_own_signal_decrease(finite_c_corpus):
    """Contrapositive: a strict failure at s persists at lower own signals."""
    for name, v, c, _ in finite_c_corpus:
        if v.space.profile_count > 2000:
            continue
        alpha = c * (1 + 1e-12)
        for s in v.space.profiles():
            for i in range(v.n):
                for j in range(v.n):
                    if i == j or _approximates(v, i, j, s, alpha):
                        continue
                    q = list(s)
                    for si in range(s[i]):
                        q[i] = si
                        assert not _approximates(v, i, j, tuple(q), alpha / (1 + 1e-12)), (
                            name, i, j, s, si,
                        )


def test_third_party_increase_costs_additive_c(finite_c_corpus):
    """v_i >= v_j / alpha at s keeps max(v_i, v_l) >= v_j / (alpha + c) as s_l rises."""
    for name, v, c, _ in finite_c_corpus:
        if v.space.profile_count > 600 or v.n < 2:
            continue
        alpha = max(c, 1.0)
        for s in v.space.profiles():
            for i in range(v.n):
                for j in range(v.n):
                    if i == j or not _approximates(v, i, j, s, alpha):
                        continue
                    for ell in range(v.n):
                        if ell == j:
                            continue
                        q = list(s)
                        for sl in range(s[ell] + 1, v.space.sizes[ell] + 1):
                            q[ell] = sl
                            tq = tuple(q)
                            covered = max(v.value(i, tq), v.value(ell, tq))
                            assert v.value(j, tq) <= (alpha + c) * covered * (1 + 1e-12), (
                                name, i, j, ell, s, sl,
                            )


def test_check_value_monotone_finds_violation():
    sp = SignalSpace((1, 1))
    vals = np.array([[[7.0, 7.0], [5.0, 7.0]], [[0.0, 1.0], [0.0, 1.0]]])
    v = ValuationInstance(space=sp, values=vals)
    bad = check_value_monotone(v)
    assert len(bad) == 1
    bidder, axis, profile, lo, hi = bad[0]
    assert (bidder, axis, profile) == (0, 0, (1, 0)) and (lo, hi) == (7.0, 5.0)


def test_check_value_monotone_clean_on_generators(corpus):
    for name, v in corpus:
        assert check_value_monotone(v) == [], name


def test_spot_check_monotone_on_huge_grid():
    from ivauctions.model import spot_check_value_monotone

    v = gen.gen_random_mech_lb(64, 2.0)  # 2^65 profiles, evaluator-backed
    assert spot_check_value_monotone(v, samples=500, seed=1) == []
    sp = SignalSpace((1,) * 20, profile_cap=2**22)
    bad = ValuationInstance(space=sp, evaluate=lambda i, p: float(-sum(p)) + 20.0)
    found = spot_check_value_monotone(bad, samples=500, seed=1)
    assert found and all(hi < lo for _, _, _, lo, hi in found)
