from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from math import comb, factorial
from typing import Callable, Iterable, Mapping, Optional

from core.coeffring import (
    RationalLike,
    SeriesError,
    TruncSeries,
    VariableIndexError,
    s_add,
    s_agrees,
    s_constant,
    s_derive,
    s_derive_multi,
    s_invert,
    s_is_unit,
    s_mul,
    s_neg,
    s_scale,
    s_zero,
)

logger = logging.getLogger(__name__)

EtaIndex = tuple[int, ...]
Slot = tuple[int, EtaIndex]

DEFAULT_INVERSE_DEPTH = 6


class OperatorError(Exception):
    """Base exception raised by microdifferential operator arithmetic."""


class ShapeMismatchError(OperatorError):
    """Raised when operators have different variable or η-generator counts."""


class NotInvertibleError(OperatorError):
    """Raised when the top ξ-coefficient is not an η-free unit."""


class NotMonicError(OperatorError):
    """Raised when a fractional power is requested of a non-monic operator."""


class WrongOrderError(OperatorError):
    """Raised when the ξ-order does not match the requested root."""


class FloorExhaustedError(OperatorError):
    """Raised when a result would need ξ-exponents below every available floor."""


def binom(top: int | Fraction, k: int) -> Fraction:
    """Generalized binomial coefficient, valid for negative ``top``."""
    if k < 0:
        return Fraction(0)
    value = Fraction(1)
    for i in range(k):
        value *= Fraction(top) - i
    return value / factorial(k)


def _multi_comb(top: EtaIndex, part: EtaIndex) -> int:
    value = 1
    for a, b in zip(top, part):
        value *= comb(a, b)
    return value


def _sub_indices(beta: EtaIndex) -> Iterable[EtaIndex]:
    if not beta:
        yield ()
        return
    for head in range(beta[0] + 1):
        for tail in _sub_indices(beta[1:]):
            yield (head, *tail)


class EtaPoly:
    """Polynomial in η with series coefficients standing to the left."""

    __slots__ = ("nvars", "neta", "terms")

    def __init__(self, nvars: int, neta: int, terms: Optional[Mapping[EtaIndex, TruncSeries]] = None) -> None:
        self.nvars = nvars
        self.neta = neta
        self.terms: dict[EtaIndex, TruncSeries] = {
            tuple(beta): series
            for beta, series in (terms or {}).items()
            if not (series.is_exact and series.is_zero())
        }

    def degree(self) -> Optional[int]:
        nonzero = [sum(beta) for beta, series in self.terms.items() if not series.is_zero()]
        return max(nonzero) if nonzero else None

    def constant(self) -> TruncSeries:
        return self.terms.get((0,) * self.neta, s_zero(self.nvars))


class MicroOp:
    """
    Normal-ordered operator ``Σ f_{i,β} η^β ξ^i``.

    ``floor`` is the lowest retained ξ-exponent; ``None`` marks an exact
    operator. Slots are keyed by ``(i, β)``. An absent slot is exactly zero; a
    stored zero series still carries its own precision.
    """

    __slots__ = ("nvars", "neta", "floor", "_slots")

    def __init__(
        self,
        nvars: int,
        neta: int,
        slots: Optional[Mapping[Slot, TruncSeries]] = None,
        floor: Optional[int] = None,
    ) -> None:
        if neta < 0 or neta > max(nvars - 1, 0):
            raise ShapeMismatchError(f"{neta} η-generators need at least {neta + 1} variables, got {nvars}")
        self.nvars = nvars
        self.neta = neta
        self.floor = floor
        cleaned: dict[Slot, TruncSeries] = {}
        for (power, beta), series in (slots or {}).items():
            beta = tuple(beta)
            if len(beta) != neta:
                raise ShapeMismatchError(f"η-index {beta} does not match {neta} generators")
            if series.nvars != nvars:
                raise ShapeMismatchError(f"coefficient in {series.nvars} variables, expected {nvars}")
            if floor is not None and power < floor:
                continue
            if series.is_exact and series.is_zero():
                continue
            cleaned[(power, beta)] = series
        self._slots = cleaned

    @property
    def slots(self) -> dict[Slot, TruncSeries]:
        return dict(self._slots)

    def items(self) -> Iterable[tuple[Slot, TruncSeries]]:
        return self._slots.items()

    def slot(self, power: int, beta: Optional[EtaIndex] = None) -> TruncSeries:
        beta = beta if beta is not None else (0,) * self.neta
        return self._slots.get((power, tuple(beta)), s_zero(self.nvars))

    @property
    def coeffs(self) -> dict[int, EtaPoly]:
        """The ``L_i`` of the ξ-expansion, grouped by exponent."""
        grouped: dict[int, dict[EtaIndex, TruncSeries]] = {}
        for (power, beta), series in self._slots.items():
            grouped.setdefault(power, {})[beta] = series
        return {power: EtaPoly(self.nvars, self.neta, terms) for power, terms in grouped.items()}

    @property
    def is_exact(self) -> bool:
        return self.floor is None

    @property
    def top(self) -> Optional[int]:
        """Highest stored ξ-exponent."""
        return max((power for power, _ in self._slots), default=None)

    def reach(self) -> Optional[int]:
        """Highest ξ-exponent that may be nonzero, counting the unknown tail."""
        top = self.top
        if self.floor is None:
            return top
        return self.floor - 1 if top is None else max(top, self.floor - 1)

    def is_zero(self) -> bool:
        """True when every retained coefficient is known to vanish."""
        return all(series.is_zero() for series in self._slots.values())

    def is_differential(self) -> bool:
        known = self.floor is None or self.floor <= 0
        return known and all(power >= 0 for power, _ in self._slots)

    def __repr__(self) -> str:
        return f"MicroOp(floor={self.floor}, slots={self._slots!r})"


@dataclass(frozen=True)
class OpOrder:
    """Order of an operator; ``value`` is ``None`` for the zero operator (−∞)."""

    value: Optional[int]

    @property
    def is_minus_infinity(self) -> bool:
        return self.value is None

    def at_most(self, bound: int) -> bool:
        return self.value is None or self.value <= bound

    def __le__(self, other: OpOrder) -> bool:
        if self.value is None:
            return True
        return other.value is not None and self.value <= other.value

    def __add__(self, other: OpOrder) -> OpOrder:
        if self.value is None or other.value is None:
            return OpOrder(None)
        return OpOrder(self.value + other.value)


# -- constructors ----------------------------------------------------------


def mo_zero(nvars: int, neta: int, floor: Optional[int] = None) -> MicroOp:
    return MicroOp(nvars, neta, {}, floor)


def mo_scalar(series: TruncSeries, neta: int) -> MicroOp:
    return MicroOp(series.nvars, neta, {(0, (0,) * neta): series})


def mo_constant(nvars: int, neta: int, value: RationalLike = 1) -> MicroOp:
    return mo_scalar(s_constant(nvars, value), neta)


def mo_identity(nvars: int, neta: int) -> MicroOp:
    return mo_constant(nvars, neta, 1)


def mo_xi(nvars: int, neta: int, power: int = 1, coefficient: Optional[TruncSeries] = None) -> MicroOp:
    series = coefficient if coefficient is not None else s_constant(nvars, 1)
    return MicroOp(nvars, neta, {(power, (0,) * neta): series})


def mo_eta(nvars: int, neta: int, index: int, coefficient: Optional[TruncSeries] = None) -> MicroOp:
    """The generator ``η_index`` (1-based, as in ``η_1 … η_{n−1}``)."""
    if not 1 <= index <= neta:
        raise VariableIndexError(f"η_{index} outside 1..{neta}")
    beta = tuple(1 if i == index - 1 else 0 for i in range(neta))
    series = coefficient if coefficient is not None else s_constant(nvars, 1)
    return MicroOp(nvars, neta, {(0, beta): series})


# -- linear structure ------------------------------------------------------


def _check_shape(a: MicroOp, b: MicroOp) -> None:
    if a.nvars != b.nvars or a.neta != b.neta:
        raise ShapeMismatchError(
            f"operators over ({a.nvars}, {a.neta}) and ({b.nvars}, {b.neta}) generators"
        )


def _max_floor(*floors: Optional[int]) -> Optional[int]:
    present = [floor for floor in floors if floor is not None]
    return max(present) if present else None


def mo_add(a: MicroOp, b: MicroOp) -> MicroOp:
    _check_shape(a, b)
    floor = _max_floor(a.floor, b.floor)
    slots = dict(a.items())
    for key, series in b.items():
        slots[key] = s_add(slots[key], series) if key in slots else series
    return MicroOp(a.nvars, a.neta, slots, floor)


def mo_neg(a: MicroOp) -> MicroOp:
    return MicroOp(a.nvars, a.neta, {key: s_neg(series) for key, series in a.items()}, a.floor)


def mo_sub(a: MicroOp, b: MicroOp) -> MicroOp:
    return mo_add(a, mo_neg(b))


def mo_scale(a: MicroOp, factor: RationalLike) -> MicroOp:
    return MicroOp(a.nvars, a.neta, {key: s_scale(series, factor) for key, series in a.items()}, a.floor)


def mo_truncate(a: MicroOp, floor: int) -> MicroOp:
    return MicroOp(a.nvars, a.neta, a.slots, _max_floor(a.floor, floor))


# -- products --------------------------------------------------------------


def _polynomial_in_t0(g: TruncSeries) -> bool:
    """No truncation touches t0, so repeated ∂₀ ends in exact zero."""
    return g.cap is None and all(0 not in bound.variables for bound in g.bounds)


def _product_floor(a: MicroOp, b: MicroOp) -> Optional[int]:
    if (a.is_exact and a.top is None) or (b.is_exact and b.top is None):
        return None
    candidates: list[int] = []
    reach_a, reach_b = a.reach(), b.reach()
    if a.floor is not None and reach_b is not None:
        candidates.append(a.floor + reach_b)
    if b.floor is not None and reach_a is not None:
        candidates.append(reach_a + b.floor)
    return max(candidates) if candidates else None


def mo_mul(a: MicroOp, b: MicroOp, floor: Optional[int] = None) -> MicroOp:
    """
    Normal-ordered product ``a·b``.

    Moving ``ξ^i`` across a coefficient uses ``ξ^i g = Σ_k binom(i, k)(∂₀^k g)ξ^{i−k}``
    and moving ``η^β`` uses ``η^β g = Σ_γ binom(β, γ)(∂_η^γ g)η^{β−γ}``, with
    ``∂_{η_j}`` acting as ``∂/∂t_j``.

    Args:
        a: Left factor.
        b: Right factor.
        floor: Optional requested floor; exponents below it are not computed.

    Returns:
        The product, whose floor is the larger of the requested floor and the
        floor guaranteed by the factors' floors.

    Raises:
        FloorExhaustedError: Two exact factors whose product is an infinite
            expansion, with no floor requested.
    """
    _check_shape(a, b)
    guaranteed = _product_floor(a, b)
    out_floor = _max_floor(guaranteed, floor)
    neta = a.neta

    result: dict[Slot, TruncSeries] = {}
    for (i, beta), f in a.items():
        for (j, gamma), g in b.items():
            if out_floor is not None and i + j < out_floor:
                continue
            max_k = i if i >= 0 else None
            if out_floor is not None:
                limit = i + j - out_floor
                max_k = limit if max_k is None else min(max_k, limit)
            elif max_k is None and not _polynomial_in_t0(g):
                raise FloorExhaustedError("negative ξ-power meets a truncated coefficient; a floor is needed")
            k, g_k = 0, g
            while max_k is None or k <= max_k:
                if g_k.is_zero() and _polynomial_in_t0(g_k):
                    break
                coeff_k = binom(i, k)
                if coeff_k != 0:
                    for sub in _sub_indices(beta):
                        factor = coeff_k * _multi_comb(beta, sub)
                        shifted = s_derive_multi(g_k, (0, *sub))
                        term = s_scale(s_mul(f, shifted), factor)
                        if term.is_exact and term.is_zero():
                            continue
                        key = (i - k + j, tuple(x - y + z for x, y, z in zip(beta, sub, gamma)))
                        result[key] = s_add(result[key], term) if key in result else term
                g_k = s_derive(g_k, 0)
                k += 1
    return MicroOp(a.nvars, neta, result, out_floor)


def mo_power(a: MicroOp, exponent: int, floor: Optional[int] = None) -> MicroOp:
    """
    ``a^exponent`` known down to ``floor``.

    A partial product feeds its floor plus ``reach(a)`` into the next factor,
    so the partial products are computed that much deeper.
    """
    if exponent < 0:
        raise OperatorError("use mo_invert for negative powers")
    reach = max(a.reach() or 0, 0)
    result = mo_identity(a.nvars, a.neta)
    for k in range(1, exponent + 1):
        step_floor = None if floor is None else floor - (exponent - k) * reach
        result = mo_mul(result, a, step_floor)
    if floor is None:
        return result
    return mo_truncate(result, floor)


def mo_commutator(a: MicroOp, b: MicroOp, floor: Optional[int] = None) -> MicroOp:
    return mo_sub(mo_mul(a, b, floor), mo_mul(b, a, floor))


# -- structure -------------------------------------------------------------


def mo_order(a: MicroOp) -> OpOrder:
    """``max(|β| + i)`` over the nonzero retained slots."""
    values = [power + sum(beta) for (power, beta), series in a.items() if not series.is_zero()]
    return OpOrder(max(values) if values else None)


def mo_split(a: MicroOp) -> tuple[MicroOp, MicroOp]:
    """Differential part (ξ-exponents ≥ 0) and negative part."""
    plus = {key: series for key, series in a.items() if key[0] >= 0}
    minus = {key: series for key, series in a.items() if key[0] < 0}
    plus_floor = None if a.floor is None or a.floor <= 0 else a.floor
    return MicroOp(a.nvars, a.neta, plus, plus_floor), MicroOp(a.nvars, a.neta, minus, a.floor)


def mo_derive(a: MicroOp, index: int) -> MicroOp:
    return MicroOp(a.nvars, a.neta, {key: s_derive(series, index) for key, series in a.items()}, a.floor)


def mo_coefficient(a: MicroOp, power: int) -> TruncSeries:
    """The η-free coefficient of ``ξ^power``."""
    return a.slot(power)


def mo_agrees(a: MicroOp, b: MicroOp, floor: Optional[int] = None) -> bool:
    """Equality on the slots both operators retain (and at or above ``floor``)."""
    _check_shape(a, b)
    lowest = _max_floor(a.floor, b.floor, floor)
    zero = s_zero(a.nvars)
    for key in set(a.slots) | set(b.slots):
        if lowest is not None and key[0] < lowest:
            continue
        left = a._slots.get(key, zero)
        right = b._slots.get(key, zero)
        if not s_agrees(left, right):
            return False
    return True


def mo_is_zero(a: MicroOp, floor: Optional[int] = None) -> bool:
    return mo_agrees(a, mo_zero(a.nvars, a.neta), floor)


def _top_unit(a: MicroOp) -> tuple[int, TruncSeries]:
    nonzero = [(power, beta) for (power, beta), series in a.items() if not series.is_zero()]
    if not nonzero:
        raise NotInvertibleError("the zero operator is not invertible")
    top = max(power for power, _ in nonzero)
    for power, beta in nonzero:
        if power == top and any(beta):
            raise NotInvertibleError(f"ξ^{top} coefficient carries η-terms")
    leading = a.slot(top)
    if not s_is_unit(leading):
        raise NotInvertibleError(f"ξ^{top} coefficient is not a unit series")
    return top, leading


def mo_invert(a: MicroOp, floor: Optional[int] = None) -> MicroOp:
    """
    Invert an operator whose top ξ-coefficient is an η-free unit.

    With ``C = f^{−1}ξ^{−m}`` for the top term ``fξ^m`` and ``E = C·a − 1``
    (ξ-exponents ≤ −1), the inverse is ``Σ (−E)^k C``.

    Args:
        a: Operator to invert.
        floor: Requested floor. Defaults to ``floor(a) − 2m`` for truncated
            input and to ``−m − DEFAULT_INVERSE_DEPTH`` for exact input.

    Raises:
        NotInvertibleError: The leading coefficient is not an η-free unit.
    """
    top, leading = _top_unit(a)
    if floor is None:
        floor = a.floor - 2 * top if a.floor is not None else -top - DEFAULT_INVERSE_DEPTH
    if a.floor is not None:
        floor = max(floor, a.floor - 2 * top)

    nvars, neta = a.nvars, a.neta
    try:
        inverse_leading = s_invert(leading)
    except SeriesError as exc:
        raise NotInvertibleError(f"ξ^{top} coefficient cannot be inverted: {exc}") from exc
    seed = mo_xi(nvars, neta, -top, inverse_leading)
    defect = mo_sub(mo_mul(seed, a, floor=min(floor + top, 0)), mo_identity(nvars, neta))
    for (power, _), series in defect.items():
        if power >= 0 and not series.is_zero():
            raise NotInvertibleError("leading part does not cancel against its inverse")
    step = MicroOp(
        nvars,
        neta,
        {key: s_neg(series) for key, series in defect.items() if key[0] < 0},
        defect.floor,
    )

    total = mo_truncate(seed, floor)
    term = seed
    while True:
        term = mo_mul(step, term, floor=floor)
        if term.top is None or term.top < floor:
            break
        total = mo_add(total, term)
    logger.debug("Inverted operator of top exponent %s down to floor %s", top, floor)
    return mo_truncate(total, floor)


def mo_root(a: MicroOp, r: int, floor: Optional[int] = None) -> MicroOp:
    """
    ``r``-th root ``Q = ξ + q₀ + q₋₁ξ^{−1} + …`` of a monic operator.

    Coefficients come out in descending order: ``q_n`` is read off the
    ``ξ^{r−1+n}`` coefficient of ``Q^r``, where it appears as ``r·q_n``.

    Raises:
        NotMonicError: Leading coefficient is not 1 or some coefficient has η-terms.
        WrongOrderError: The ξ-order is not ``r``.
    """
    if r < 1:
        raise WrongOrderError(f"root index must be positive, got {r}")
    nvars, neta = a.nvars, a.neta
    zero_eta = (0,) * neta
    for (power, beta), series in a.items():
        if any(beta) and not series.is_zero():
            raise NotMonicError("root of an operator with η-terms")
    top = max((power for (power, _), series in a.items() if not series.is_zero()), default=None)
    if top != r:
        raise WrongOrderError(f"expected ξ-order {r}, found {top}")
    leading = a.slot(r)
    if leading.terms != {(0,) * nvars: Fraction(1)}:
        raise NotMonicError("leading coefficient is not 1")

    if floor is None:
        floor = a.floor - (r - 1) if a.floor is not None else -DEFAULT_INVERSE_DEPTH
    if a.floor is not None:
        floor = max(floor, a.floor - (r - 1))

    root = mo_xi(nvars, neta, 1)
    for n in range(0, floor - 1, -1):
        exponent = r - 1 + n
        current = mo_power(root, r, floor=exponent)
        if current.floor is not None and current.floor > exponent:
            raise FloorExhaustedError(f"ξ^{exponent} of the {r}-th power is below its known floor {current.floor}")
        defect = s_add(a.slot(exponent), s_neg(current.slot(exponent)))
        q_n = s_scale(defect, Fraction(1, r))
        root = mo_add(root, MicroOp(nvars, neta, {(n, zero_eta): q_n}))
    return MicroOp(nvars, neta, root.slots, floor)


def mo_fractional_plus(a: MicroOp, r: int, j: int) -> MicroOp:
    """``(a^{j/r})₊`` computed from the root with just enough depth."""
    root = mo_root(a, r, floor=-(j - 1) if j > 1 else 0)
    plus, _ = mo_split(mo_power(root, j, floor=0))
    return plus


def mo_map(a: MicroOp, convert: Callable[[TruncSeries], TruncSeries], nvars: int) -> MicroOp:
    """Apply a series map into a ring of ``nvars`` variables to every coefficient."""
    return MicroOp(nvars, a.neta, {key: convert(series) for key, series in a.items()}, a.floor)
