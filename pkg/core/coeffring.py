from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

logger = logging.getLogger(__name__)

Exponent = tuple[int, ...]
RationalLike = int | Fraction | str


class SeriesError(Exception):
    """Base exception raised by truncated-series arithmetic."""


class VariableMismatchError(SeriesError):
    """Raised when two series live in rings with different variable counts."""


class VariableIndexError(SeriesError):
    """Raised when a variable index falls outside the ring."""


class NonUnitError(SeriesError):
    """Raised when a series with zero constant term is inverted."""


def to_rational(value: RationalLike) -> Fraction:
    """Coerce ints, fractions and ``"p/q"`` strings to an exact rational."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, str)):
        return Fraction(value)
    raise TypeError(f"cannot use {type(value).__name__} as an exact rational")


@dataclass(frozen=True)
class DegreeBound:
    """Extra truncation: monomials whose degree in ``variables`` exceeds ``cap`` are unknown."""

    variables: tuple[int, ...]
    cap: int


def _min_cap(a: Optional[int], b: Optional[int]) -> Optional[int]:
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _merge_bounds(first: Iterable[DegreeBound], second: Iterable[DegreeBound]) -> tuple[DegreeBound, ...]:
    merged: dict[tuple[int, ...], int] = {}
    for bound in (*first, *second):
        current = merged.get(bound.variables)
        merged[bound.variables] = bound.cap if current is None else min(current, bound.cap)
    return tuple(DegreeBound(variables, cap) for variables, cap in sorted(merged.items()))


class TruncSeries:
    """
    Multivariate power series over the rationals, truncated by total degree.

    ``cap`` is the inclusive total-degree bound; ``None`` lifts it. ``bounds``
    add per-group degree truncations. A series with neither is an exact
    polynomial. A coefficient is
    *known* when its monomial satisfies the cap and every bound; unknown
    coefficients are never stored.
    """

    __slots__ = ("nvars", "cap", "bounds", "_terms")

    def __init__(
        self,
        nvars: int,
        cap: Optional[int],
        terms: Optional[Mapping[Exponent, RationalLike]] = None,
        bounds: Iterable[DegreeBound] = (),
    ) -> None:
        if nvars < 0:
            raise VariableIndexError(f"negative variable count: {nvars}")
        bounds = _merge_bounds(bounds, ())
        self.nvars = nvars
        self.cap = cap
        self.bounds = bounds

        cleaned: dict[Exponent, Fraction] = {}
        for exponent, value in (terms or {}).items():
            exponent = tuple(exponent)
            if len(exponent) != nvars:
                raise VariableMismatchError(
                    f"exponent {exponent} does not match {nvars} variables"
                )
            coefficient = to_rational(value)
            if coefficient == 0 or not self.knows(exponent):
                continue
            cleaned[exponent] = coefficient
        self._terms = cleaned

    # -- introspection -------------------------------------------------

    @property
    def terms(self) -> dict[Exponent, Fraction]:
        return dict(self._terms)

    def items(self) -> Iterable[tuple[Exponent, Fraction]]:
        return self._terms.items()

    @property
    def is_exact(self) -> bool:
        return self.cap is None and not self.bounds

    @property
    def is_void(self) -> bool:
        """True when no coefficient at all is known."""
        if self.cap is not None and self.cap < 0:
            return True
        return any(bound.cap < 0 for bound in self.bounds)

    def is_zero(self) -> bool:
        """True when every known coefficient vanishes."""
        return not self._terms

    def knows(self, exponent: Exponent) -> bool:
        if self.cap is not None and sum(exponent) > self.cap:
            return False
        for bound in self.bounds:
            if sum(exponent[i] for i in bound.variables) > bound.cap:
                return False
        return True

    def coefficient(self, exponent: Exponent) -> Fraction:
        return self._terms.get(tuple(exponent), Fraction(0))

    def bound_cap(self, variables: tuple[int, ...]) -> Optional[int]:
        for bound in self.bounds:
            if bound.variables == variables:
                return bound.cap
        return None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TruncSeries):
            return NotImplemented
        return (
            self.nvars == other.nvars
            and self.cap == other.cap
            and self.bounds == other.bounds
            and self._terms == other._terms
        )

    def __hash__(self) -> int:
        return hash((self.nvars, self.cap, self.bounds, frozenset(self._terms.items())))

    def __repr__(self) -> str:
        return f"TruncSeries(nvars={self.nvars}, cap={self.cap}, terms={self._terms!r})"


# -- constructors ----------------------------------------------------------


def s_zero(nvars: int, cap: Optional[int] = None, bounds: Iterable[DegreeBound] = ()) -> TruncSeries:
    return TruncSeries(nvars, cap, {}, bounds)


def s_constant(nvars: int, value: RationalLike, cap: Optional[int] = None) -> TruncSeries:
    return TruncSeries(nvars, cap, {(0,) * nvars: value})


def s_variable(nvars: int, index: int, cap: Optional[int] = None) -> TruncSeries:
    _check_index(nvars, index)
    exponent = tuple(1 if i == index else 0 for i in range(nvars))
    return TruncSeries(nvars, cap, {exponent: 1})


def s_random(
    rng: random.Random,
    nvars: int,
    cap: int,
    *,
    unit: bool = True,
    density: float = 0.6,
    spread: int = 5,
    bounds: Iterable[DegreeBound] = (),
) -> TruncSeries:
    """
    Draw a random series with small rational coefficients.

    Args:
        rng: Seeded generator.
        nvars: Variable count.
        cap: Total-degree cap.
        unit: Force a nonzero constant term.
        density: Probability that a monomial gets a coefficient.
        spread: Numerators are drawn from ``[-spread, spread]``.
        bounds: Extra degree bounds.
    """
    template = TruncSeries(nvars, cap, {}, bounds)
    terms: dict[Exponent, Fraction] = {}
    for exponent in monomials(nvars, cap):
        if not template.knows(exponent):
            continue
        if rng.random() < density:
            terms[exponent] = Fraction(rng.randint(-spread, spread), rng.randint(1, 3))
    if unit:
        constant = Fraction(0)
        while constant == 0:
            constant = Fraction(rng.randint(-spread, spread), rng.randint(1, 3))
        terms[(0,) * nvars] = constant
    return TruncSeries(nvars, cap, terms, bounds)


def monomials(nvars: int, degree: int) -> list[Exponent]:
    """All exponents in ``nvars`` variables of total degree at most ``degree``."""
    if degree < 0:
        return []
    if nvars == 0:
        return [()]
    result: list[Exponent] = []
    for head in range(degree + 1):
        for tail in monomials(nvars - 1, degree - head):
            result.append((head, *tail))
    return sorted(result, key=lambda exp: (sum(exp), tuple(-x for x in exp)))


# -- arithmetic ------------------------------------------------------------


def _check_nvars(a: TruncSeries, b: TruncSeries) -> None:
    if a.nvars != b.nvars:
        raise VariableMismatchError(f"series in {a.nvars} and {b.nvars} variables")


def _check_index(nvars: int, index: int) -> None:
    if not 0 <= index < nvars:
        raise VariableIndexError(f"variable t{index} outside ring of {nvars} variables")


def _joint(a: TruncSeries, b: TruncSeries) -> tuple[Optional[int], tuple[DegreeBound, ...]]:
    return _min_cap(a.cap, b.cap), _merge_bounds(a.bounds, b.bounds)


def s_add(a: TruncSeries, b: TruncSeries) -> TruncSeries:
    _check_nvars(a, b)
    cap, bounds = _joint(a, b)
    terms = dict(a.items())
    for exponent, value in b.items():
        terms[exponent] = terms.get(exponent, Fraction(0)) + value
    return TruncSeries(a.nvars, cap, terms, bounds)


def s_neg(a: TruncSeries) -> TruncSeries:
    return TruncSeries(a.nvars, a.cap, {e: -v for e, v in a.items()}, a.bounds)


def s_sub(a: TruncSeries, b: TruncSeries) -> TruncSeries:
    return s_add(a, s_neg(b))


def s_scale(a: TruncSeries, factor: RationalLike) -> TruncSeries:
    factor = to_rational(factor)
    return TruncSeries(a.nvars, a.cap, {e: v * factor for e, v in a.items()}, a.bounds)


def s_sum(items: Iterable[TruncSeries], nvars: int) -> TruncSeries:
    total = s_zero(nvars)
    for item in items:
        total = s_add(total, item)
    return total


def s_mul(a: TruncSeries, b: TruncSeries) -> TruncSeries:
    """
    Multiply two series; the result knows exactly what both factors know.

    Args:
        a: Left factor.
        b: Right factor in the same ring.

    Returns:
        The product truncated to ``min(a.cap, b.cap)`` and the union of bounds.
    """
    _check_nvars(a, b)
    cap, bounds = _joint(a, b)
    result = TruncSeries(a.nvars, cap, {}, bounds)
    if result.is_void or a.is_zero() or b.is_zero():
        return result

    right = sorted(((sum(e), e, v) for e, v in b.items()), key=lambda item: item[0])
    terms: dict[Exponent, Fraction] = {}
    for left_exp, left_value in a.items():
        left_degree = sum(left_exp)
        if cap is not None and left_degree > cap:
            continue
        for right_degree, right_exp, right_value in right:
            if cap is not None and left_degree + right_degree > cap:
                break
            exponent = tuple(x + y for x, y in zip(left_exp, right_exp))
            if bounds and not result.knows(exponent):
                continue
            terms[exponent] = terms.get(exponent, Fraction(0)) + left_value * right_value
    return TruncSeries(a.nvars, cap, terms, bounds)


def s_power(a: TruncSeries, exponent: int) -> TruncSeries:
    if exponent < 0:
        return s_power(s_invert(a), -exponent)
    result = s_constant(a.nvars, 1)
    for _ in range(exponent):
        result = s_mul(result, a)
    return result


def _shift_bounds(bounds: Iterable[DegreeBound], index: int, step: int) -> tuple[DegreeBound, ...]:
    return tuple(
        DegreeBound(bound.variables, bound.cap + step) if index in bound.variables else bound
        for bound in bounds
    )


def s_derive(a: TruncSeries, index: int) -> TruncSeries:
    """Partial derivative in ``t{index}``; caps touching that variable drop by one."""
    _check_index(a.nvars, index)
    terms: dict[Exponent, Fraction] = {}
    for exponent, value in a.items():
        power = exponent[index]
        if power == 0:
            continue
        lowered = exponent[:index] + (power - 1,) + exponent[index + 1:]
        terms[lowered] = value * power
    cap = None if a.cap is None else a.cap - 1
    return TruncSeries(a.nvars, cap, terms, _shift_bounds(a.bounds, index, -1))


def s_derive_multi(a: TruncSeries, orders: Sequence[int]) -> TruncSeries:
    """Apply ``∂_i^{orders[i]}`` for every variable."""
    result = a
    for index, order in enumerate(orders):
        for _ in range(order):
            result = s_derive(result, index)
    return result


def s_integrate(a: TruncSeries, index: int) -> TruncSeries:
    """Antiderivative in ``t{index}`` vanishing on ``t{index} = 0``."""
    _check_index(a.nvars, index)
    terms: dict[Exponent, Fraction] = {}
    for exponent, value in a.items():
        power = exponent[index] + 1
        raised = exponent[:index] + (power,) + exponent[index + 1:]
        terms[raised] = value / power
    cap = None if a.cap is None else a.cap + 1
    return TruncSeries(a.nvars, cap, terms, _shift_bounds(a.bounds, index, 1))


def s_shift(a: TruncSeries, index: int, power: int = 1) -> TruncSeries:
    """Multiply by ``t{index}**power``; the known range moves up with the terms."""
    _check_index(a.nvars, index)
    terms = {
        exponent[:index] + (exponent[index] + power,) + exponent[index + 1:]: value
        for exponent, value in a.items()
    }
    cap = None if a.cap is None else a.cap + power
    return TruncSeries(a.nvars, cap, terms, _shift_bounds(a.bounds, index, power))


def s_truncate(a: TruncSeries, cap: int) -> TruncSeries:
    return TruncSeries(a.nvars, _min_cap(a.cap, cap), a.terms, a.bounds)


def s_truncate_bound(a: TruncSeries, variables: tuple[int, ...], cap: int) -> TruncSeries:
    """Add (or tighten) a degree bound; terms beyond it become unknown."""
    bounds = _merge_bounds(a.bounds, (DegreeBound(tuple(variables), cap),))
    return TruncSeries(a.nvars, a.cap, a.terms, bounds)


def s_restrict(a: TruncSeries, variables: Iterable[int]) -> TruncSeries:
    """Set the given variables to zero."""
    zeroed = set(variables)
    for index in zeroed:
        _check_index(a.nvars, index)
    terms = {e: v for e, v in a.items() if all(e[i] == 0 for i in zeroed)}
    return TruncSeries(a.nvars, a.cap, terms, a.bounds)


def s_embed(a: TruncSeries, nvars: int, positions: Sequence[int], extra: int = 0) -> TruncSeries:
    """
    Re-index ``a`` into a ring of ``nvars`` variables.

    Args:
        a: Series to embed.
        nvars: Size of the target ring.
        positions: Target index of each source variable.
        extra: Degree headroom granted to the new variables; the source
            variables keep their old cap through a group bound.
    """
    if len(positions) != a.nvars:
        raise VariableMismatchError(f"{len(positions)} positions for {a.nvars} variables")
    for index in positions:
        _check_index(nvars, index)

    terms: dict[Exponent, Fraction] = {}
    for exponent, value in a.items():
        target = [0] * nvars
        for source, index in enumerate(positions):
            target[index] = exponent[source]
        terms[tuple(target)] = value

    if a.is_exact:
        return TruncSeries(nvars, None, terms)
    bounds = [
        DegreeBound(tuple(sorted(positions[i] for i in bound.variables)), bound.cap)
        for bound in a.bounds
    ]
    if a.cap is None:
        return TruncSeries(nvars, None, terms, bounds)
    if extra:
        bounds.append(DegreeBound(tuple(sorted(positions)), a.cap))
    return TruncSeries(nvars, a.cap + extra, terms, bounds)


def s_project(a: TruncSeries, positions: Sequence[int]) -> TruncSeries:
    """
    Keep the monomials supported on ``positions`` and re-index them to a
    ring of ``len(positions)`` variables. The other variables are set to zero.
    """
    kept = list(positions)
    lookup = {index: target for target, index in enumerate(kept)}
    terms: dict[Exponent, Fraction] = {}
    for exponent, value in a.items():
        if any(power and index not in lookup for index, power in enumerate(exponent)):
            continue
        terms[tuple(exponent[index] for index in kept)] = value
    if a.is_exact:
        return TruncSeries(len(kept), None, terms)

    cap = a.cap
    bounds: list[DegreeBound] = []
    for bound in a.bounds:
        inside = tuple(sorted(lookup[i] for i in bound.variables if i in lookup))
        if not inside:
            if bound.cap < 0:
                cap = -1
            continue
        if len(inside) == len(kept):
            cap = _min_cap(cap, bound.cap)
        else:
            bounds.append(DegreeBound(inside, bound.cap))
    return TruncSeries(len(kept), cap, terms, bounds)


def s_slice(a: TruncSeries, index: int, power: int) -> TruncSeries:
    """Coefficient of ``t{index}**power``, still as a series in all variables."""
    _check_index(a.nvars, index)
    terms = {
        exponent[:index] + (0,) + exponent[index + 1:]: value
        for exponent, value in a.items()
        if exponent[index] == power
    }
    if a.is_exact:
        return TruncSeries(a.nvars, None, terms)
    bounds = _shift_bounds(a.bounds, index, -power)
    cap = None if a.cap is None else a.cap - power
    return TruncSeries(a.nvars, cap, terms, bounds)


def s_constant_term(a: TruncSeries) -> Fraction:
    return a.coefficient((0,) * a.nvars)


def s_is_unit(a: TruncSeries) -> bool:
    return not a.is_void and s_constant_term(a) != 0


def s_invert(a: TruncSeries, cap: Optional[int] = None) -> TruncSeries:
    """
    Invert a unit by Newton iteration ``x ← x(2 − a·x)``.

    Args:
        a: Series with nonzero constant term.
        cap: Required when ``a`` is an exact non-constant polynomial.

    Raises:
        NonUnitError: The constant term vanishes.
    """
    constant = s_constant_term(a)
    if a.is_void or constant == 0:
        raise NonUnitError("series has zero constant term and is not invertible")

    target = a if cap is None else s_truncate(a, cap)
    if all(sum(e) == 0 for e, _ in target.items()):
        return TruncSeries(a.nvars, target.cap, {(0,) * a.nvars: 1 / constant}, target.bounds)
    if target.cap is None:
        raise SeriesError("inverting a non-constant polynomial needs a cap")

    current = TruncSeries(a.nvars, target.cap, {(0,) * a.nvars: 1 / constant}, target.bounds)
    two = s_constant(a.nvars, 2)
    precision = 1
    while True:
        current = s_mul(current, s_sub(two, s_mul(target, current)))
        precision *= 2
        if precision > target.cap:
            break
    return current


def s_agrees(a: TruncSeries, b: TruncSeries) -> bool:
    """Equality on the monomials both series know."""
    _check_nvars(a, b)
    cap, bounds = _joint(a, b)
    common = TruncSeries(a.nvars, cap, None, bounds)
    if common.is_void:
        return True
    for exponent in set(a._terms) | set(b._terms):
        if common.knows(exponent) and a.coefficient(exponent) != b.coefficient(exponent):
            return False
    return True


# -- small matrices over the series ring -----------------------------------

SeriesMatrix = list[list[TruncSeries]]


def sm_mul(a: Sequence[Sequence[TruncSeries]], b: Sequence[Sequence[TruncSeries]], nvars: int) -> SeriesMatrix:
    rows, inner, cols = len(a), len(b), len(b[0]) if b else 0
    return [
        [s_sum((s_mul(a[i][k], b[k][j]) for k in range(inner)), nvars) for j in range(cols)]
        for i in range(rows)
    ]


def sm_identity(size: int, nvars: int) -> SeriesMatrix:
    return [[s_constant(nvars, 1 if i == j else 0) for j in range(size)] for i in range(size)]


def sm_derive(a: Sequence[Sequence[TruncSeries]], index: int) -> SeriesMatrix:
    return [[s_derive(entry, index) for entry in row] for row in a]


def sm_invert(a: Sequence[Sequence[TruncSeries]], nvars: int) -> SeriesMatrix:
    """
    Gauss–Jordan inversion over the local ring of series.

    Raises:
        NonUnitError: No unit pivot is available in some column, i.e. the
            constant-term matrix is singular.
    """
    size = len(a)
    work = [list(row) + identity for row, identity in zip(a, sm_identity(size, nvars))]
    for column in range(size):
        pivot = next((r for r in range(column, size) if s_is_unit(work[r][column])), None)
        if pivot is None:
            raise NonUnitError(f"no unit pivot in column {column}")
        work[column], work[pivot] = work[pivot], work[column]
        inverse = s_invert(work[column][column])
        work[column] = [s_mul(inverse, entry) for entry in work[column]]
        for row in range(size):
            if row == column or work[row][column].is_zero():
                continue
            factor = work[row][column]
            work[row] = [
                s_sub(entry, s_mul(factor, pivot_entry))
                for entry, pivot_entry in zip(work[row], work[column])
            ]
    return [row[size:] for row in work]


def sm_agrees(a: Sequence[Sequence[TruncSeries]], b: Sequence[Sequence[TruncSeries]]) -> bool:
    if len(a) != len(b):
        return False
    return all(
        len(row_a) == len(row_b) and all(s_agrees(x, y) for x, y in zip(row_a, row_b))
        for row_a, row_b in zip(a, b)
    )
