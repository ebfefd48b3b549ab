from __future__ import annotations

import random

import pytest

from core.coeffring import TruncSeries, s_agrees, s_derive, s_random, sm_agrees
from core.laxmat import DegreeVector, LaxMatrix, mat_filtered_order
from core.localmodel import (
    XI,
    IdealPattern,
    LocalChart,
    LocalModelError,
    LocalSection,
    NotEliminableError,
    PoleRemainingError,
    lm_act,
    lm_agrees,
    lm_apply,
    lm_derive_t,
    lm_evaluate,
    lm_evaluation_shape_ok,
    lm_gauss_normalize,
    lm_is_good,
    lm_jet,
    lm_matrices_agree,
    lm_matrix,
    lm_random_local_term,
    lm_random_matrix,
    lm_row_update,
    lm_section,
    lm_symbol_evaluation,
    lm_symbol_identity_holds,
    lm_tilde,
    lm_untilde,
    lm_verify_elimination,
    lm_zero_section,
)
from core.microp import MicroOp, mo_xi, mo_zero


def _constant(nvars: int, value: int = 1) -> TruncSeries:
    return TruncSeries(nvars, None, {(0,) * nvars: value})


def test_xi_on_constant_gives_simple_pole() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    one = lm_section(chart, 0, 0, {(0, 0): 1})

    moved = lm_act(chart, XI, one)

    assert moved.zshift == 1
    assert moved.body.terms == {(0, 0): 1}


def test_xi_on_coordinate_differentiates_and_adds_pole() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    t0 = lm_section(chart, 0, 0, {(0, 1): 1})

    moved = lm_act(chart, XI, t0)

    # (∂_t + 1/z)·t = 1 + t/z
    assert moved.zshift == 1
    assert moved.body.terms == {(1, 0): 1, (0, 1): 1}


def test_eta_multiplies_by_w_over_z() -> None:
    chart = LocalChart(2, zw_cap=3, t_cap=2)
    one = lm_section(chart, 0, 0, {(0, 0, 0, 0): 1})

    moved = lm_act(chart, 1, one)

    assert moved.zshift == 1
    assert moved.body.terms == {(0, 1, 0, 0): 1}
    with pytest.raises(LocalModelError):
        lm_act(chart, 2, one)


def test_apply_matches_repeated_action() -> None:
    chart = LocalChart(2, zw_cap=3, t_cap=2)
    rng = random.Random(6)
    section = LocalSection(0, 0, s_random(rng, chart.nvars, 5, bounds=chart.bounds()))
    op = MicroOp(2, 1, {(1, (1,)): _constant(2, 1)})

    applied = lm_apply(chart, op, section)

    assert lm_agrees(applied, lm_act(chart, 1, lm_act(chart, XI, section)))


def test_apply_rejects_negative_powers() -> None:
    chart = LocalChart(1)
    with pytest.raises(LocalModelError):
        lm_apply(chart, mo_xi(1, 0, -1), lm_zero_section(chart, 0))


def test_evaluation_refuses_remaining_pole() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    pole = lm_section(chart, 0, 1, {(0, 0): 1})
    chi = lm_matrix(chart, (0,), [[pole]])

    with pytest.raises(PoleRemainingError):
        lm_evaluate(chi)
    assert lm_evaluate(lm_tilde(lm_matrix(chart, (1,), [[pole]])))[0][0].terms == {(0,): 1}


def test_untilde_inverts_tilde() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    chi = lm_random_matrix(random.Random(4), chart, (0, 1))

    assert lm_matrices_agree(lm_untilde(lm_tilde(chi)), chi)


def test_evaluation_commutes_with_t_derivative() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=3)
    rng = random.Random(12)
    section = LocalSection(0, 0, s_random(rng, chart.nvars, 6, bounds=chart.bounds()))

    left = lm_jet(chart, lm_derive_t(chart, section, 0), 0)
    right = s_derive(lm_jet(chart, section, 0), 0)

    assert s_agrees(left, right)


def test_ideal_pattern_exponents() -> None:
    pattern = IdealPattern((0, 1, 1), 1)

    assert pattern.exponent(0, 0) == 0
    assert pattern.exponent(1, 0) == 2
    assert pattern.exponent(0, 1) == 0


def test_row_update_respects_degree_gap() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    rng = random.Random(3)
    chi = lm_random_matrix(rng, chart, (0, 1))

    with pytest.raises(LocalModelError):
        lm_row_update(chi, 0, 1, mo_xi(1, 0, 1))
    moved = lm_row_update(chi, 1, 0, mo_xi(1, 0, 1))
    assert moved.entries[0] == chi.entries[0]


@pytest.mark.parametrize(
    ("n", "rowdeg"),
    [
        (1, (0, 1)),
        (1, (0, 0, 1)),
        (2, (0, 1)),
        (2, (1, 1)),
    ],
)
def test_elimination_reaches_good_form(n: int, rowdeg: tuple[int, ...]) -> None:
    chart = LocalChart(n, zw_cap=3, t_cap=2)
    for seed in range(3):
        chi = lm_random_matrix(random.Random(seed), chart, rowdeg)

        elimination = lm_gauss_normalize(chi)

        assert lm_is_good(elimination.result)
        assert lm_evaluation_shape_ok(lm_evaluate(lm_tilde(elimination.result)), rowdeg)
        assert mat_filtered_order(elimination.transform, 0)
        assert lm_verify_elimination(chi, elimination)
        assert sorted(elimination.permutation) == list(range(len(rowdeg)))


def test_singular_evaluation_is_not_eliminable() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    zero = [[lm_zero_section(chart, b) for b in range(2)] for _ in range(2)]

    with pytest.raises(NotEliminableError):
        lm_gauss_normalize(lm_matrix(chart, (0, 0), zero))


def _lax(rowdeg: tuple[int, ...], nvars: int, neta: int, placed: dict[tuple[int, int], MicroOp]) -> LaxMatrix:
    size = len(rowdeg)
    rows = [[placed.get((a, b), mo_zero(nvars, neta)) for b in range(size)] for a in range(size)]
    return LaxMatrix(DegreeVector(rowdeg), rows)


@pytest.mark.parametrize(
    ("n", "rowdeg"),
    [
        (1, (0, 1)),
        (1, (1, 1)),
        (2, (0, 1)),
        (2, (0, 1, 2)),
    ],
)
def test_symbol_identity_holds_for_random_local_terms(n: int, rowdeg: tuple[int, ...]) -> None:
    chart = LocalChart(n, zw_cap=4, t_cap=4)
    for seed in range(3):
        rng = random.Random(seed)
        chi = lm_random_matrix(rng, chart, rowdeg)
        term = lm_random_local_term(rng, chart, rowdeg)

        left, right = lm_symbol_evaluation(term, chi)

        assert mat_filtered_order(term, 0)
        assert term.entries[0][-1].is_zero() or rowdeg[0] == rowdeg[-1]
        assert any(not value.is_void for row in left for value in row)
        assert lm_symbol_identity_holds(term, chi)
        assert sm_agrees(left, right)


def test_leading_xi_moves_row_values_down() -> None:
    chart = LocalChart(1, zw_cap=4, t_cap=3)
    chi = lm_random_matrix(random.Random(6), chart, (0, 1))
    term = _lax((0, 1), 1, 0, {(1, 0): mo_xi(1, 0, 1)})

    left, _ = lm_symbol_evaluation(term, chi)
    values = lm_evaluate(lm_tilde(chi))

    for b in range(2):
        assert left[0][b].is_zero()
        assert s_agrees(left[1][b], values[0][b])


def test_eta_terms_vanish_at_the_point() -> None:
    chart = LocalChart(2, zw_cap=4, t_cap=3)
    chi = lm_random_matrix(random.Random(9), chart, (0, 1))
    eta = MicroOp(2, 1, {(0, (1,)): _constant(2)})
    term = _lax((0, 1), 2, 1, {(1, 0): eta})

    left, right = lm_symbol_evaluation(term, chi)

    assert all(value.is_zero() for row in left for value in row)
    assert all(value.is_zero() for row in right for value in row)


def test_symbol_identity_needs_filtered_order_zero() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    chi = lm_random_matrix(random.Random(1), chart, (0, 1))
    term = _lax((0, 1), 1, 0, {(0, 0): mo_xi(1, 0, 1)})

    with pytest.raises(LocalModelError):
        lm_symbol_identity_holds(term, chi)


def test_positive_zshift_with_divisible_body_evaluates() -> None:
    chart = LocalChart(1, zw_cap=3, t_cap=2)
    regular = lm_section(chart, 0, 1, {(1, 0): 2, (2, 1): 1})

    values = lm_evaluate(lm_matrix(chart, (0,), [[regular]]))

    assert values[0][0].terms == {(0,): 2}


def test_fifty_random_eliminations_up_to_three_variables_and_four_rows() -> None:
    for seed in range(50):
        n = 1 + seed % 3
        d = 1 + seed % 4
        rng = random.Random(seed)
        rowdeg = tuple(sorted(rng.randrange(3) for _ in range(d)))
        chi = lm_random_matrix(rng, LocalChart(n, zw_cap=3, t_cap=3), rowdeg)

        elimination = lm_gauss_normalize(chi)

        assert lm_is_good(elimination.result), (seed, rowdeg)
        assert mat_filtered_order(elimination.transform, 0), (seed, rowdeg)
        assert lm_verify_elimination(chi, elimination), (seed, rowdeg)
