import itertools

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from lobatto_dae.errors import HypothesisError, InapplicableOperationError
from lobatto_dae.rstrings import (
    CLASS_OPERATIONS,
    Edge,
    RMatrixContext,
    RString,
    apply,
    class_edges,
    class_members,
    enumerate_elementary,
    eval_R,
    format_edges,
    irreducible_strings,
    is_irreducible,
    max_dim_for_order,
    parse_rstring,
    split,
    successors,
    survives_right_multiplication,
)
from lobatto_dae.tableau import lobatto_iiia

R = RString.of

LISTED_N3 = {R(0, 3), R(1, 2), R(2, 1), R(3, 0), R(0, 1, 2, 0), R(0, 2, 1, 0), R(0, 1, 1, 1), R(1, 1, 1, 0)}

# the distinct strings named in the printed n=4 derivation
LISTED_N4 = {
    R(0, 4), R(1, 3), R(2, 2), R(3, 1), R(4, 0),
    R(0, 1, 3, 0), R(0, 2, 2, 0), R(0, 3, 1, 0),
    R(0, 1, 2, 1), R(0, 1, 1, 2), R(1, 1, 1, 1), R(1, 2, 1, 0), R(2, 1, 1, 0),
    R(0, 1, 1, 1, 1, 0),
}

PRINTED_EDGES_30 = {
    (R(3, 0), R(1, 0, 2, 0)),
    (R(3, 0), R(0, 0, 3, 0)),
    (R(3, 0), R(2, 0, 1, 0)),
    (R(1, 0, 2, 0), R(1, 0, 1, 0, 1, 0)),
    (R(1, 0, 2, 0), R(0, 0, 1, 0, 2, 0)),
    (R(1, 0, 1, 0, 1, 0), R(0, 0, 1, 0, 1, 0, 1, 0)),
    (R(0, 0, 3, 0), R(0, 0, 1, 0, 2, 0)),
    (R(0, 0, 3, 0), R(0, 0, 2, 0, 1, 0)),
    (R(0, 0, 1, 0, 2, 0), R(0, 0, 1, 0, 1, 0, 1, 0)),
    (R(2, 0, 1, 0), R(0, 0, 2, 0, 1, 0)),
    (R(0, 0, 2, 0, 1, 0), R(0, 0, 1, 0, 1, 0, 1, 0)),
}
PRINTED_EDGES_0111 = {
    (R(0, 1, 1, 1), R(0, 1, 0, 0, 1, 1)),
    (R(0, 1, 1, 1), R(0, 1, 1, 1, 0, 0)),
    (R(0, 1, 0, 0, 1, 1), R(0, 1, 0, 0, 1, 1, 0, 0)),
}


def edge_pairs(elem):
    return {(e.source, e.target) for e in class_edges(elem, max_dim_for_order(elem.order))}


# --- basic type ----------------------------------------------------------


def test_parse_and_format_round_trip():
    g = parse_rstring("(0, 1,2,0)")
    assert g == R(0, 1, 2, 0)
    assert str(g) == "(0,1,2,0)"
    assert g[2] == 1 and g.dim == 4 and g.order == 3


def test_one_based_index_bounds():
    with pytest.raises(IndexError):
        R(1, 2)[0]


def test_negative_entries_rejected():
    with pytest.raises(ValueError):
        R(1, -1)


def test_ordering_by_dimension_first():
    assert R(9, 9) < R(0, 0, 0, 1)


# --- irreducibility ------------------------------------------------------


@pytest.mark.parametrize(
    "entries,even,odd",
    [
        ((0, 0, 1, 1), True, False),
        ((1, 0, 0, 1), False, True),
        ((0, 0), True, False),
        ((3, 0), True, True),
        ((0, 1, 0, 0, 1, 1), True, False),
        ((1, 0, 0, 0, 0, 1), False, False),
    ],
)
def test_irreducibility_parity(entries, even, odd):
    g = RString(entries)
    assert is_irreducible(g) is even
    assert is_irreducible(g, parity="odd") is odd


def test_unknown_parity_rejected():
    with pytest.raises(ValueError):
        is_irreducible(R(1, 1), parity="both")


# --- operations ----------------------------------------------------------


@pytest.mark.parametrize(
    "gamma,op,i,expected",
    [
        (R(3, 0), "left_append", None, R(0, 0, 3, 0)),
        (R(0, 3), "right_append", None, R(0, 3, 0, 0)),
        (R(0, 1, 1, 1), "insert", 3, R(0, 1, 0, 0, 1, 1)),
        (R(3, 0), "left_split", 1, R(1, 0, 2, 0)),
        (R(3, 0), "right_split", 1, R(2, 0, 1, 0)),
        (R(1, 2), "cap", None, R(0, 1, 2, 0)),
        (R(0, 1, 2, 0), "right_diffuse", 3, R(0, 1, 1, 1)),
        (R(0, 2, 1, 0), "left_diffuse", 2, R(1, 1, 1, 0)),
    ],
)
def test_operation_examples(gamma, op, i, expected):
    assert apply(gamma, op, i) == expected


@pytest.mark.parametrize(
    "gamma,op,i",
    [
        (R(0, 3), "left_append", None),
        (R(3, 0), "right_append", None),
        (R(0, 3), "cap", None),
        (R(1, 1), "left_split", 1),  # needs an entry > 1
        (R(0, 1, 1, 1), "insert", 2),  # even position
        (R(0, 1, 1, 1), "insert", 1),
        (R(1, 0, 1, 1), "insert", 3),  # neighbour is zero
        (R(0, 3), "left_diffuse", 1),
        (R(3, 0), "right_diffuse", 2),
        (R(3, 0), "left_diffuse", 2),  # entry is zero
    ],
)
def test_inapplicable_operations(gamma, op, i):
    with pytest.raises(InapplicableOperationError):
        apply(gamma, op, i)


def test_position_required():
    with pytest.raises(InapplicableOperationError):
        apply(R(3, 0), "left_split")


def test_unknown_operation():
    with pytest.raises(ValueError):
        apply(R(3, 0), "rotate")


def test_reducible_input_rejected():
    with pytest.raises(InapplicableOperationError):
        apply(R(1, 0, 0, 1), "left_append")


def test_generalized_split_covers_left_and_right():
    assert split(R(4, 0), 1) == [R(1, 0, 3, 0), R(2, 0, 2, 0), R(3, 0, 1, 0)]


irreducible = st.lists(st.integers(0, 3), min_size=1, max_size=4).map(
    lambda xs: RString(tuple(xs) if len(xs) % 2 == 0 else tuple(xs) + (1,))
).filter(is_irreducible)


@settings(max_examples=200, deadline=None)
@given(irreducible)
def test_operations_preserve_irreducibility_and_order(gamma):
    for op, _, h in successors(gamma):
        assert is_irreducible(h)
        assert h.order == gamma.order
        assert h.dim in (gamma.dim, gamma.dim + 2)


@settings(max_examples=100, deadline=None)
@given(irreducible, st.integers(0, 10_000))
def test_class_operations_preserve_R(gamma, seed):
    rng = np.random.default_rng(seed)
    ctx = RMatrixContext.random(3, rng)
    base = eval_R(gamma, ctx)
    for op, _, h in successors(gamma, CLASS_OPERATIONS):
        assert np.allclose(eval_R(h, ctx), base, rtol=1e-9, atol=1e-9 * max(1.0, np.abs(base).max()))


@settings(max_examples=100, deadline=None)
@given(irreducible)
def test_right_append_is_inverse_of_dropping_trailing_zeros(gamma):
    assume(gamma.entries[-1] != 0)
    h = apply(gamma, "right_append")
    assert h.entries[:-2] == gamma.entries


# --- enumeration ---------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_elementary_count_is_power_of_two(n):
    assert len(enumerate_elementary(n)) == 2**n


def test_n3_matches_listing():
    assert set(enumerate_elementary(3)) == LISTED_N3


def test_n4_contains_listing_and_two_diffusions():
    got = set(enumerate_elementary(4))
    assert LISTED_N4 <= got
    assert got - LISTED_N4 == {R(0, 2, 1, 1), R(1, 1, 2, 0)}
    # both extras come from (0,2,2,0) by one diffusion
    assert apply(R(0, 2, 2, 0), "right_diffuse", 3) == R(0, 2, 1, 1)
    assert apply(R(0, 2, 2, 0), "left_diffuse", 2) == R(1, 1, 2, 0)


def test_elementary_sorted():
    el = enumerate_elementary(4)
    assert el == sorted(el)


def test_enumeration_rejects_order_zero():
    with pytest.raises(ValueError):
        enumerate_elementary(0)


def test_irreducible_strings_stars_and_bars():
    got = irreducible_strings(2, 2)
    assert got == [R(0, 2), R(1, 1), R(2, 0)]
    assert all(g.order == 3 and g.dim == 4 for g in irreducible_strings(3, 4))


# --- classes -------------------------------------------------------------


def test_class_30_members():
    assert set(class_members(R(3, 0), 8)) == {dst for _, dst in PRINTED_EDGES_30} | {R(3, 0)}


def test_class_0111_members():
    assert set(class_members(R(0, 1, 1, 1), 8)) == {dst for _, dst in PRINTED_EDGES_0111} | {R(0, 1, 1, 1)}


def test_class_diagrams_contain_printed_edges():
    assert PRINTED_EDGES_30 <= edge_pairs(R(3, 0))
    assert PRINTED_EDGES_0111 <= edge_pairs(R(0, 1, 1, 1))


def test_class_diagrams_extra_edges_are_valid_rule_applications():
    extra_30 = edge_pairs(R(3, 0)) - PRINTED_EDGES_30
    extra_0111 = edge_pairs(R(0, 1, 1, 1)) - PRINTED_EDGES_0111
    assert extra_30 == {(R(2, 0, 1, 0), R(1, 0, 1, 0, 1, 0))}
    assert extra_0111 == {(R(0, 1, 1, 1, 0, 0), R(0, 1, 0, 0, 1, 1, 0, 0))}
    assert apply(R(2, 0, 1, 0), "left_split", 1) == R(1, 0, 1, 0, 1, 0)
    assert apply(R(0, 1, 1, 1, 0, 0), "insert", 3) == R(0, 1, 0, 0, 1, 1, 0, 0)


def test_edge_format_and_sorting():
    text = format_edges(class_edges(R(3, 0), 8))
    lines = text.splitlines()
    assert lines == sorted(lines)
    assert "(3,0) -> (0,0,3,0) [left_append]" in lines
    assert str(Edge(R(3, 0), R(1, 0, 2, 0), "left_split", 1)) == "(3,0) -> (1,0,2,0) [left_split]"


def test_trailing_zero_survival():
    assert survives_right_multiplication(R(3, 0))
    assert not survives_right_multiplication(R(0, 3))


# --- numerical checks ----------------------------------------------------


@pytest.fixture(scope="module")
def contexts():
    rng = np.random.default_rng(20240)
    return [RMatrixContext.random(4, rng) for _ in range(20)]


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_class_soundness(contexts, n):
    worst = 0.0
    for g in enumerate_elementary(n):
        for d in class_members(g, max_dim_for_order(n)):
            for ctx in contexts:
                a, b = eval_R(g, ctx), eval_R(d, ctx)
                worst = max(worst, np.abs(a - b).max() / max(1.0, np.abs(a).max()))
    assert worst < 1e-9


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_class_separation(contexts, n):
    el = enumerate_elementary(n)
    for a, b in itertools.combinations(el, 2):
        gap = max(np.abs(eval_R(a, ctx) - eval_R(b, ctx)).max() for ctx in contexts)
        assert gap > 1e-6, (a, b)


def test_eval_dimension_two_is_C_Ainv_C():
    t = lobatto_iiia(3)
    ctx = RMatrixContext.from_tableau(t)
    At, ct = t.A_tilde, t.c[1:]
    expected = np.diag(ct**2) @ np.linalg.inv(At) @ np.diag(ct)
    assert np.allclose(eval_R(R(2, 1), ctx), expected, atol=1e-14)


def test_singular_context_rejected():
    with pytest.raises(HypothesisError):
        RMatrixContext(np.zeros((2, 2)), np.ones(2))


def test_context_shape_validated():
    with pytest.raises(ValueError):
        RMatrixContext(np.eye(2), np.ones(3))
