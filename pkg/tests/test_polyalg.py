import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from convcode.polyalg import (GeneratorSpec, InfeasibleStorageError, Monomial, PolyMatrix,
                              ValidationError, extract_columns, factor_exponent_grid, khatri_rao,
                              make_matmat_factors, make_matvec_generator, make_systematic_generator,
                              min_q, min_z, spec_from_generator, storage_fractions)


def cells(G):
    """(coeff, exp) grid with None for empty cells."""
    return [[None if e is None else (e.coeff, e.exp) for e in row] for row in G.entries]


def test_monomial_rules():
    with pytest.raises(ValidationError):
        Monomial(1.0, -1)
    with pytest.raises(ValidationError):
        Monomial(0.0, 3)
    m = Monomial(2.0, 3) * Monomial(-1.5, 4)
    assert (m.coeff, m.exp) == (-3.0, 7)


def test_k2s2_generator():
    G = make_systematic_generator(GeneratorSpec(4, 2, 2, (0, 1), (0, 1)))
    assert cells(G) == [[(1, 0), None, (1, 0), (1, 0)], [None, (1, 0), (1, 0), (1, 1)]]
    assert G == make_matvec_generator(2, 2)


def test_single_parity_all_zero_exponents():
    G = make_systematic_generator(GeneratorSpec(4, 3, 1, (0,), (0, 1, 2)))
    assert [c[3] for c in cells(G)] == [(1, 0)] * 3


def test_hadamard_scaling():
    G = make_systematic_generator(GeneratorSpec(4, 2, 2, (0, 1), (0, 1), [[2, 3], [5, 7]]))
    assert [row[2:] for row in cells(G)] == [[(2, 0), (3, 0)], [(5, 0), (7, 1)]]


def test_matvec_grids():
    assert make_matvec_generator(3, 2).exp_array()[:, 3:].tolist() == [[0, 0], [0, 1], [0, 2]]
    assert cells(make_matvec_generator(1, 3)) == [[(1, 0)] * 4]


@pytest.mark.parametrize("a,b", [((1, 0), (0, 1)), ((0, 1), (0, 0)), ((0, 0), (0, 1))])
def test_non_monotone_rejected(a, b):
    with pytest.raises(ValidationError):
        GeneratorSpec(4, 2, 2, a, b)


def test_mm6_factors():
    GA, GB = make_matmat_factors(2, 2, 2, 4)
    assert cells(GA) == [[(1, 0), (1, 0), None, None, (1, 0), (1, 0)],
                         [None, None, (1, 0), (1, 0), (1, 0), (1, 4)]]
    assert cells(GB) == [[(1, 0), None, (1, 0), None, (1, 0), (1, 0)],
                         [None, (1, 0), None, (1, 0), (1, 0), (1, 1)]]


def test_degenerate_factors():
    GA, GB = make_matmat_factors(1, 1, 1, 1)
    assert cells(GA) == cells(GB) == [[(1, 0), (1, 0)]]


def test_factor_exponents_z5():
    GA, _ = make_matmat_factors(3, 2, 2, 5)
    assert GA.exp_array()[:, -1].tolist() == [0, 5, 10]


def test_khatri_rao_example1():
    K = khatri_rao(*make_matmat_factors(2, 2, 2, 4))
    assert [row[5] for row in cells(K)] == [(1, 0), (1, 1), (1, 4), (1, 5)]
    assert [row[4] for row in cells(K)] == [(1, 0)] * 4
    assert K.is_systematic()
    assert extract_columns(K, [0, 1, 2, 3]).coeff_array().tolist() == np.eye(4).tolist()


def test_khatri_rao_mismatch():
    GA, _ = make_matmat_factors(2, 2, 2, 4)
    with pytest.raises(ValidationError):
        khatri_rao(GA, make_matvec_generator(2, 2))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 3), st.integers(1, 6))
def test_khatri_rao_is_form_eq4(k_A, k_B, s, q_B):
    z = min_z(q_B, s, k_B)
    K = khatri_rao(*make_matmat_factors(k_A, k_B, s, z))
    assert K.is_systematic()
    a, b = factor_exponent_grid(K.exp_array()[:, k_A * k_B:])
    assert list(a) == sorted(set(a)) and list(b) == sorted(set(b))


@pytest.mark.parametrize("k,s,g,q", [(2, 2, "5/8", 4), (3, 2, "2/5", 10), (5, 1, "1/4", 1),
                                     (3, 2, "5/14", 28)])
def test_min_q_values(k, s, g, q):
    assert min_q(k, s, g) == q


def test_min_q_infeasible():
    with pytest.raises(InfeasibleStorageError):
        min_q(4, 2, "1/4")


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 8), st.integers(1, 4), st.integers(1, 60), st.integers(1, 60))
def test_min_q_is_least_feasible(k, s, p, d):
    gamma = Fraction(p, d)
    if gamma <= Fraction(1, k):
        return
    q = min_q(k, s, gamma)
    feasible = lambda x: Fraction(x + (s - 1) * (k - 1), k * x) <= gamma
    assert feasible(q)
    assert q == 1 or not feasible(q - 1)


@pytest.mark.parametrize("args,z", [((3, 2, 2), 4), ((1, 1, 1), 1), ((10, 2, 3), 12)])
def test_min_z_values(args, z):
    assert min_z(*args) == z


def test_extract_columns():
    G = make_matvec_generator(2, 2)
    assert cells(extract_columns(G, [3, 2])) == [[(1, 0), (1, 0)], [(1, 0), (1, 1)]]
    assert extract_columns(G, range(4)) == G
    with pytest.raises(ValidationError):
        extract_columns(G, [0, 4])
    with pytest.raises(ValidationError):
        extract_columns(G, [1, 1])


def test_json_formats():
    spec = GeneratorSpec(5, 3, 2, (0, 2), (0, 1, 3), [[1, 2], [3, 4], [5, 6]])
    d = json.loads(spec.to_json())
    assert set(d) == {"n", "k", "s", "a", "b", "R"}
    assert GeneratorSpec.from_json(spec.to_json()) == spec
    G = make_systematic_generator(spec)
    doc = json.loads(G.to_json())
    assert set(doc) == {"rows", "cols", "entries"}
    assert len(doc["entries"]) == 3 + 6
    assert set(doc["entries"][0]) == {"r", "c", "coeff", "exp"}
    assert PolyMatrix.from_json(G.to_json()) == G


def test_spec_recovery():
    spec = GeneratorSpec(5, 3, 2, (1, 3), (0, 2, 3), np.full((3, 2), 0.5))
    back = spec_from_generator(make_systematic_generator(spec))
    assert (back.a, back.b) == ((1, 3), (0, 2, 3))


def test_storage_fraction_matvec():
    # (q + (s-1)(k-1)) / (kq) for the last parity worker
    assert max(storage_fractions(make_matvec_generator(2, 2), 4)) == Fraction(5, 8)
