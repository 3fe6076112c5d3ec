"""Shared fixtures: the desk-scale instance corpus every sweep runs over."""

import math

import pytest

from ivauctions import compute_c, compute_d
from ivauctions import instances as gen


def desk_corpus():
    """Named desk-scale instances covering every generator family.

    Kept small enough that exhaustive sweeps (all orderings, all deviations)
    stay fast; every entry is tabulated.
    """
    items = [
        ("oil_sc_k3", gen.gen_oil_sc(3)),
        ("oil_sc_k6", gen.gen_oil_sc(6)),
        ("oil_no_sc_k3", gen.gen_oil_no_sc(3)),
        ("oil_no_sc_k6", gen.gen_oil_no_sc(6)),
        ("retail_k4", gen.gen_retail(4)),
        ("retail_k8", gen.gen_retail(8)),
        ("det_impossibility_r3", gen.gen_det_impossibility(3.0)),
        ("rand_impossibility_n3", gen.gen_rand_impossibility(3)),
        ("rand_impossibility_n4", gen.gen_rand_impossibility(4)),
        ("rand_c_lb_n3_c1.5", gen.gen_rand_c_lb(3, 1.5)),
        ("rand_c_lb_n4_c2", gen.gen_rand_c_lb(4, 2.0)),
        ("two_by_two_tight_c1.5", gen.gen_two_by_two_tight(1.5)),
        ("two_by_two_tight_c2", gen.gen_two_by_two_tight(2.0)),
        ("three_bidder_no_c", gen.gen_three_bidder_no_c()),
        ("tight_hypergrid_n3_c2", gen.gen_tight_hypergrid(3, 2.0)),
        ("tight_hypergrid_n4_c1.5", gen.gen_tight_hypergrid(4, 1.5)),
        ("tight_hypergrid_n5_c3", gen.gen_tight_hypergrid(5, 3.0)),
        ("separable_n2_k5", gen.gen_random_separable(2, 5, 2.0, seed=11)),
        ("separable_n3_k3", gen.gen_random_separable(3, 3, 1.5, seed=12)),
        ("separable_n4_k2", gen.gen_random_separable(4, 2, 3.0, seed=13)),
        ("tabulated_n2_k6", gen.gen_random_tabulated(2, 6, seed=21)[0]),
        ("tabulated_n3_k3", gen.gen_random_tabulated(3, 3, seed=22)[0]),
        ("tabulated_n4_k2", gen.gen_random_tabulated(4, 2, seed=23)[0]),
        ("tabulated_n3_k9", gen.gen_random_tabulated(3, 9, seed=24)[0]),
        ("tabulated_n2_k40", gen.gen_random_tabulated(2, 40, seed=25)[0]),
        ("tabulated_n4_k8", gen.gen_random_tabulated(4, 8, seed=26)[0]),
        ("tabulated_n3_k4", gen.gen_random_tabulated(3, 4, seed=27)[0]),
    ]
    return items


@pytest.fixture(scope="session")
def corpus():
    return desk_corpus()


@pytest.fixture(scope="session")
def finite_c_corpus(corpus):
    """Corpus entries usable by the approximation mechanisms, with measured constants."""
    out = []
    for name, v in corpus:
        c = compute_c(v)
        if math.isfinite(c):
            out.append((name, v, c, compute_d(v)))
    return out
