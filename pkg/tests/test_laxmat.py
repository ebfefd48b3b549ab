from __future__ import annotations

import random

import pytest

from core.coeffring import TruncSeries
from core.flows import fl_random_monic
from core.laxmat import (
    DegreeVector,
    DegreeVectorError,
    LaxMatrix,
    MatrixNotInvertibleError,
    MatrixShapeError,
    NotSymbolicError,
    mat_add,
    mat_agrees,
    mat_commutator,
    mat_entry_coefficient,
    mat_filtered_order,
    mat_identity,
    mat_invert,
    mat_is_zero,
    mat_mul,
    mat_order,
    mat_sigma,
    mat_split,
    mat_xi_conjugate,
    mat_xi_degree,
    mat_xi_unconjugate,
)
from core.microp import MicroOp, mo_xi, mo_zero


def _constant(value: int, nvars: int = 1) -> TruncSeries:
    return TruncSeries(nvars, None, {(0,) * nvars: value})


def _xi_matrix(degrees: DegreeVector, block: list[list[int]], power: int = 1) -> LaxMatrix:
    """Pure symbol ``block_ij ξ^{power + c_i − c_j}``."""
    return mat_xi_unconjugate([[_constant(v) for v in row] for row in block], degrees, power, 0)


def test_degree_vector_must_be_nondecreasing() -> None:
    assert DegreeVector((0, 1, 1)).spread == 1
    with pytest.raises(DegreeVectorError):
        DegreeVector((1, 0))
    with pytest.raises(DegreeVectorError):
        DegreeVector(())


def test_mixed_degree_vectors_are_rejected() -> None:
    a = mat_identity(DegreeVector((0, 1)), 1, 0)
    b = mat_identity(DegreeVector((0, 2)), 1, 0)

    with pytest.raises(MatrixShapeError):
        mat_add(a, b)


def test_random_monic_has_filtered_order_one() -> None:
    rng = random.Random(1)
    degrees = DegreeVector((0, 1, 3))

    a = fl_random_monic(rng, degrees)

    assert mat_filtered_order(a, 1)
    assert not mat_filtered_order(a, 0)
    assert mat_order(a) == 1
    assert mat_xi_degree(a) == 1


def test_filtered_order_is_additive_under_products() -> None:
    rng = random.Random(2)
    degrees = DegreeVector((0, 1, 1))
    a = fl_random_monic(rng, degrees)
    b = fl_random_monic(rng, degrees)

    assert mat_filtered_order(mat_mul(a, b), 2)


def test_inverse_of_random_monic_matrix() -> None:
    rng = random.Random(3)
    degrees = DegreeVector((0, 1, 2))
    a = fl_random_monic(rng, degrees)

    inverse = mat_invert(a, floor=-6)

    identity = mat_identity(degrees, 1, 0)
    assert mat_agrees(mat_mul(a, inverse), identity)
    assert mat_agrees(mat_mul(inverse, a), identity)
    assert mat_filtered_order(inverse, -1)


def test_singular_leading_block_is_reported() -> None:
    degrees = DegreeVector((0, 0))
    a = _xi_matrix(degrees, [[1, 1], [1, 1]])

    with pytest.raises(MatrixNotInvertibleError) as excinfo:
        mat_invert(a)

    assert excinfo.value.block is not None
    assert excinfo.value.block[0][1] == _constant(1)


def test_conjugation_round_trip() -> None:
    degrees = DegreeVector((0, 2))
    block = [[_constant(1), _constant(3)], [_constant(-2), _constant(5)]]

    matrix = mat_xi_unconjugate(block, degrees, 1, 0)

    assert matrix[1, 0].slot(3) == _constant(-2)
    assert matrix[0, 1].slot(-1) == _constant(3)
    assert mat_xi_conjugate(matrix, 1) == block


def test_sigma_keeps_only_the_symbol() -> None:
    rng = random.Random(4)
    degrees = DegreeVector((0, 1))
    a = fl_random_monic(rng, degrees)

    symbol = mat_sigma(a, 1)

    zero = TruncSeries(1, None)
    assert mat_xi_conjugate(symbol, 1) == [[_constant(1), zero], [a[1, 0].slot(2), _constant(1)]]
    with pytest.raises(NotSymbolicError):
        mat_xi_conjugate(a, 1)


def test_split_parts_sum_back() -> None:
    degrees = DegreeVector((0, 1))
    entries = [
        [MicroOp(1, 0, {(1, ()): _constant(1), (-1, ()): _constant(2)}, -3), mo_zero(1, 0)],
        [mo_xi(1, 0, 2), MicroOp(1, 0, {(-2, ()): _constant(7)}, -3)],
    ]
    a = LaxMatrix(degrees, entries)

    plus, minus = mat_split(a)

    assert mat_agrees(mat_add(plus, minus), a)
    assert mat_entry_coefficient(minus, 1, 1, -2) == _constant(7)
    assert mat_entry_coefficient(plus, 0, 0, -1) == TruncSeries(1, None)


def test_commutator_with_identity_vanishes() -> None:
    rng = random.Random(5)
    degrees = DegreeVector((0, 1))
    a = fl_random_monic(rng, degrees)

    assert mat_is_zero(mat_commutator(a, mat_identity(degrees, 1, 0)))
    assert not mat_is_zero(a)
