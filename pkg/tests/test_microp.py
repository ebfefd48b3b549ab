from __future__ import annotations

import random
from fractions import Fraction

import pytest
import sympy

from core.coeffring import TruncSeries, s_derive, s_random
from core.microp import (
    FloorExhaustedError,
    MicroOp,
    NotInvertibleError,
    NotMonicError,
    OpOrder,
    ShapeMismatchError,
    WrongOrderError,
    binom,
    mo_add,
    mo_agrees,
    mo_coefficient,
    mo_derive,
    mo_eta,
    mo_fractional_plus,
    mo_identity,
    mo_invert,
    mo_mul,
    mo_order,
    mo_power,
    mo_root,
    mo_scalar,
    mo_scale,
    mo_split,
    mo_xi,
)

x = sympy.Symbol("x")


def _poly(nvars: int, terms: dict[tuple[int, ...], int | Fraction]) -> TruncSeries:
    return TruncSeries(nvars, None, terms)


def _random_op(rng: random.Random, *, floor: int | None = -2) -> MicroOp:
    slots = {(power, (0,)): s_random(rng, 2, 4, unit=False) for power in range(-1, 2)}
    slots[(0, (1,))] = s_random(rng, 2, 4, unit=False)
    return MicroOp(2, 1, slots, floor)


def _schroedinger(u: TruncSeries) -> MicroOp:
    """``ξ² + u`` in one variable."""
    return MicroOp(1, 0, {(2, ()): _poly(1, {(0,): 1}), (0, ()): u})


def test_binom_handles_negative_top() -> None:
    assert binom(-1, 3) == -1
    assert binom(Fraction(1, 2), 2) == Fraction(-1, 8)
    assert binom(3, -1) == 0


def test_xi_moves_past_function_with_derivative() -> None:
    f = _poly(1, {(2,): 1})

    product = mo_mul(mo_xi(1, 0), mo_scalar(f, 0))

    expected = MicroOp(1, 0, {(1, ()): f, (0, ()): _poly(1, {(1,): 2})})
    assert product.is_exact
    assert mo_agrees(product, expected)


def test_eta_moves_past_function_with_derivative() -> None:
    f = _poly(2, {(0, 2): 1, (1, 0): 3})

    product = mo_mul(mo_eta(2, 1, 1), mo_scalar(f, 1))

    expected = MicroOp(2, 1, {(0, (1,)): f, (0, (0,)): _poly(2, {(0, 1): 2})})
    assert mo_agrees(product, expected)


def test_negative_power_past_polynomial_is_finite() -> None:
    t = _poly(1, {(1,): 1})

    product = mo_mul(mo_xi(1, 0, -1), mo_scalar(t, 0))

    assert product.is_exact
    assert product.slots == {(-1, ()): t, (-2, ()): _poly(1, {(0,): -1})}


def test_negative_power_past_truncated_series_needs_floor() -> None:
    truncated = TruncSeries(1, 3, {(1,): 1})

    with pytest.raises(FloorExhaustedError):
        mo_mul(mo_xi(1, 0, -1), mo_scalar(truncated, 0))
    assert mo_mul(mo_xi(1, 0, -1), mo_scalar(truncated, 0), floor=-4).floor == -4


def test_product_is_associative_on_random_operators() -> None:
    rng = random.Random(5)
    for _ in range(5):
        a, b, c = (_random_op(rng) for _ in range(3))
        assert mo_agrees(mo_mul(mo_mul(a, b), c), mo_mul(a, mo_mul(b, c)))


def test_order_of_product_is_bounded_by_sum() -> None:
    rng = random.Random(9)
    a = _random_op(rng, floor=None)
    b = _random_op(rng, floor=None)

    assert mo_order(mo_mul(a, b, floor=-6)) <= mo_order(a) + mo_order(b)
    assert mo_order(mo_mul(mo_eta(2, 1, 1), mo_xi(2, 1))) == OpOrder(2)
    assert mo_order(MicroOp(2, 1)).is_minus_infinity


def test_split_reassembles_and_plus_is_differential() -> None:
    rng = random.Random(2)
    a = _random_op(rng)

    plus, minus = mo_split(a)

    assert plus.is_differential()
    assert all(power < 0 for power, _ in minus.slots)
    assert mo_agrees(mo_add(plus, minus), a)


def test_inverse_of_xi_plus_function() -> None:
    u = _poly(1, {(1,): 1, (0,): 2})
    a = MicroOp(1, 0, {(1, ()): _poly(1, {(0,): 1}), (0, ()): u})

    inverse = mo_invert(a, floor=-5)

    assert inverse.floor == -5
    assert mo_agrees(mo_mul(a, inverse), mo_identity(1, 0))
    assert mo_agrees(mo_mul(inverse, a), mo_identity(1, 0))


def test_inverse_of_xi_plus_eta_has_signed_expansion() -> None:
    a = Fraction(3, 2)
    operator = mo_add(mo_xi(2, 1, 1, _poly(2, {(0, 0): a})), mo_eta(2, 1, 1))

    inverse = mo_invert(operator, floor=-4)

    expected = MicroOp(
        2,
        1,
        {(-k - 1, (k,)): _poly(2, {(0, 0): (-1) ** k * a ** (-k - 1)}) for k in range(4)},
        -4,
    )
    assert mo_agrees(inverse, expected)


def test_invert_rejects_eta_in_leading_coefficient() -> None:
    operator = mo_add(mo_xi(2, 1), mo_mul(mo_eta(2, 1, 1), mo_xi(2, 1)))

    with pytest.raises(NotInvertibleError):
        mo_invert(operator)


def test_square_root_squares_back() -> None:
    rng = random.Random(4)
    u = s_random(rng, 1, 5)
    operator = _schroedinger(u)

    root = mo_root(operator, 2, floor=-4)

    assert root.slot(1) == _poly(1, {(0,): 1})
    assert mo_agrees(mo_power(root, 2, floor=-3), operator)


def test_root_rejects_wrong_order_and_non_monic() -> None:
    u = _poly(1, {(1,): 1})
    with pytest.raises(WrongOrderError):
        mo_root(_schroedinger(u), 3)
    doubled = MicroOp(1, 0, {(2, ()): _poly(1, {(0,): 2}), (0, ()): u})
    with pytest.raises(NotMonicError):
        mo_root(doubled, 2)


def test_fractional_plus_gives_kdv_generator() -> None:
    u = _poly(1, {(3,): 1, (1,): 2})
    u_prime = s_derive(u, 0)

    generator = mo_fractional_plus(_schroedinger(u), 2, 3)

    expected = MicroOp(
        1,
        0,
        {
            (3, ()): _poly(1, {(0,): 1}),
            (1, ()): _poly(1, {e: Fraction(3, 2) * v for e, v in u.items()}),
            (0, ()): _poly(1, {e: Fraction(3, 4) * v for e, v in u_prime.items()}),
        },
    )
    assert mo_agrees(generator, expected)
    assert generator.is_differential()


def test_derivative_obeys_leibniz() -> None:
    rng = random.Random(8)
    a = _random_op(rng)
    b = _random_op(rng, floor=None)

    left = mo_derive(mo_mul(a, b), 1)
    right = mo_add(mo_mul(mo_derive(a, 1), b), mo_mul(a, mo_derive(b, 1)))

    assert mo_agrees(left, right)


def test_xi_expansion_groups_eta_polynomials() -> None:
    t0 = _poly(3, {(1, 0, 0): 1})
    op = mo_add(mo_scale(mo_mul(mo_eta(3, 2, 2), mo_xi(3, 2)), 3), mo_xi(3, 2, 0, t0))

    coeffs = op.coeffs

    assert sorted(coeffs) == [0, 1]
    assert coeffs[1].degree() == 1
    assert coeffs[1].terms[(0, 1)].terms == {(0, 0, 0): 3}
    assert coeffs[0].constant().terms == {(1, 0, 0): 1}
    assert mo_coefficient(op, 1).is_zero()
    assert mo_order(op).value == 2


def test_eta_count_must_leave_a_t0_variable() -> None:
    with pytest.raises(ShapeMismatchError):
        MicroOp(1, 1)
    with pytest.raises(ShapeMismatchError):
        mo_xi(2, 2)
    assert MicroOp(3, 2).neta == 2


def test_invert_wraps_series_failure() -> None:
    leading = _poly(1, {(0,): 1, (1,): 1})

    with pytest.raises(NotInvertibleError):
        mo_invert(MicroOp(1, 0, {(1, ()): leading}))


def test_square_of_exact_operator_keeps_requested_floor() -> None:
    a = MicroOp(1, 0, {(1, ()): _poly(1, {(0,): 1}), (-1, ()): _poly(1, {(1,): Fraction(1, 2)})})

    square = mo_power(a, 2, floor=-1)

    expected = MicroOp(
        1,
        0,
        {(2, ()): _poly(1, {(0,): 1}), (0, ()): _poly(1, {(1,): 1}), (-1, ()): _poly(1, {(0,): Fraction(1, 2)})},
    )
    assert square.floor == -1
    assert mo_agrees(square, expected)


def test_power_of_truncated_operator_keeps_requested_floor() -> None:
    slots = {(1, ()): _poly(1, {(0,): 1}), (-1, ()): _poly(1, {(1,): Fraction(1, 2)})}
    truncated = MicroOp(1, 0, slots, floor=-3)

    cube = mo_power(truncated, 3, floor=-1)

    # (ξ + t/2·ξ⁻¹)³ = ξ³ + 3t/2·ξ + 3/2 + 3t²/4·ξ⁻¹ + …
    expected = MicroOp(
        1,
        0,
        {
            (3, ()): _poly(1, {(0,): 1}),
            (1, ()): _poly(1, {(1,): Fraction(3, 2)}),
            (0, ()): _poly(1, {(0,): Fraction(3, 2)}),
            (-1, ()): _poly(1, {(2,): Fraction(3, 4)}),
        },
    )
    assert cube.floor == -1
    assert mo_agrees(cube, expected)
    assert mo_power(truncated, 2, floor=-2).floor == -2


def test_root_of_schroedinger_down_to_second_order() -> None:
    t = _poly(1, {(1,): 1})

    root = mo_root(_schroedinger(t), 2, floor=-2)

    assert root.slot(0).is_zero()
    assert root.slot(-1) == _poly(1, {(1,): Fraction(1, 2)})
    assert root.slot(-2).terms == {(0,): Fraction(-1, 4)}


def test_root_floor_is_clamped_to_operator_floor() -> None:
    truncated = MicroOp(1, 0, {(2, ()): _poly(1, {(0,): 1}), (0, ()): _poly(1, {(1,): 1})}, floor=-1)
    exact = MicroOp(1, 0, truncated.slots)

    root = mo_root(truncated, 2, floor=-4)

    assert root.floor == -2
    assert mo_agrees(root, mo_root(exact, 2, floor=-4))


def _to_expr(series: TruncSeries) -> sympy.Expr:
    return sum(
        (sympy.Rational(value.numerator, value.denominator) * x ** exponent[0] for exponent, value in series.items()),
        sympy.Integer(0),
    )


def _compose(a: dict[int, sympy.Expr], b: dict[int, sympy.Expr], floor: int) -> dict[int, sympy.Expr]:
    """``a∘b`` by the Leibniz rule ``ξ^i f = Σ C(i,k) f^{(k)} ξ^{i−k}``, kept at ``≥ floor``."""
    result: dict[int, sympy.Expr] = {}
    for i, f in a.items():
        for j, g in b.items():
            k = 0
            while i + j - k >= floor and (i < 0 or k <= i):
                term = sympy.binomial(i, k) * f * sympy.diff(g, x, k)
                result[i + j - k] = sympy.expand(result.get(i + j - k, 0) + term)
                k += 1
    return result


def _sympy_power(a: dict[int, sympy.Expr], n: int, floor: int) -> dict[int, sympy.Expr]:
    result: dict[int, sympy.Expr] = {0: sympy.Integer(1)}
    for step in range(n):
        result = _compose(result, a, floor - (n - step))
    return {power: value for power, value in result.items() if power >= floor}


def _sympy_root(op: dict[int, sympy.Expr], r: int, depth: int) -> dict[int, sympy.Expr]:
    """``ξ + q₀ + q₋₁ξ⁻¹ + …`` solved one coefficient at a time."""
    c = sympy.Symbol("c")
    root: dict[int, sympy.Expr] = {1: sympy.Integer(1)}
    for n in range(depth + 1):
        exponent = r - 1 - n
        power = _sympy_power({**root, -n: c}, r, exponent)
        equation = sympy.expand(power.get(exponent, 0) - op.get(exponent, 0))
        root[-n] = sympy.expand(sympy.solve(equation, c)[0])
    return root


@pytest.mark.parametrize(
    ("coefficients", "j"),
    [
        ({0: x**3 + 2 * x}, 3),
        ({0: x**3 + 2 * x}, 5),
        ({1: x**2, 0: x + 1}, 2),
        ({1: x**2, 0: x + 1}, 4),
    ],
)
def test_fractional_plus_matches_term_by_term_root(coefficients: dict[int, sympy.Expr], j: int) -> None:
    r = len(coefficients) + 1
    symbolic = {r: sympy.Integer(1), **coefficients}
    slots = {(r, ()): _poly(1, {(0,): 1})}
    for power, expr in coefficients.items():
        poly = sympy.Poly(expr, x)
        slots[(power, ())] = _poly(1, {(k,): int(v) for (k,), v in poly.terms()})

    generator = mo_fractional_plus(MicroOp(1, 0, slots), r, j)

    expected = _sympy_power(_sympy_root(symbolic, r, j - 1), j, 0)
    for power in set(expected) | {power for power, _ in generator.slots}:
        assert sympy.expand(_to_expr(generator.slot(power)) - expected.get(power, 0)) == 0
