from __future__ import annotations

import itertools
import logging
import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from core.coeffring import (
    DegreeBound,
    Exponent,
    NonUnitError,
    RationalLike,
    SeriesMatrix,
    TruncSeries,
    monomials,
    s_add,
    s_constant,
    s_derive,
    s_embed,
    s_invert,
    s_is_unit,
    s_mul,
    s_neg,
    s_project,
    s_random,
    s_shift,
    s_slice,
    s_agrees,
    sm_agrees,
    sm_invert,
    sm_mul,
)
from core.laxmat import DegreeVector, LaxMatrix, mat_filtered_order, mat_sigma, mat_xi_conjugate
from core.microp import MicroOp, mo_add, mo_identity, mo_mul, mo_order, mo_zero

logger = logging.getLogger(__name__)

XI = 0


class LocalModelError(Exception):
    """Base exception raised by the local expansion model."""


class TruncationExhaustedError(LocalModelError):
    """Raised when an action would leave no known coefficient in some variable group."""


class PoleRemainingError(LocalModelError):
    """Raised when a section with a pole at its point is evaluated."""


class NotEliminableError(LocalModelError):
    """Raised when the evaluation matrix is singular."""


@dataclass(frozen=True)
class LocalChart:
    """
    Variable layout of the expansion bodies.

    Bodies live in ``2n`` variables: ``z`` at index 0, ``w_1 … w_{n−1}`` at
    ``1 … n−1`` and the coordinates ``t_0 … t_{n−1}`` at ``n … 2n−1``.
    """

    n: int
    zw_cap: int = 6
    t_cap: int = 4

    def __post_init__(self) -> None:
        if self.n < 1:
            raise LocalModelError(f"chart needs at least one coordinate, got n={self.n}")
        if self.zw_cap < 0 or self.t_cap < 0:
            raise LocalModelError("truncation caps must be non-negative")

    @property
    def nvars(self) -> int:
        return 2 * self.n

    @property
    def neta(self) -> int:
        return self.n - 1

    @property
    def zw_vars(self) -> tuple[int, ...]:
        return tuple(range(self.n))

    @property
    def t_vars(self) -> tuple[int, ...]:
        return tuple(range(self.n, 2 * self.n))

    def t_index(self, i: int) -> int:
        return self.n + i

    def bounds(self) -> tuple[DegreeBound, DegreeBound]:
        return DegreeBound(self.zw_vars, self.zw_cap), DegreeBound(self.t_vars, self.t_cap)

    def body(self, terms: Optional[Mapping[Exponent, RationalLike]] = None) -> TruncSeries:
        return TruncSeries(self.nvars, self.zw_cap + self.t_cap, terms or {}, self.bounds())

    def embed_coefficient(self, coefficient: TruncSeries) -> TruncSeries:
        """Lift a function of ``t`` into the body ring."""
        return s_embed(coefficient, self.nvars, self.t_vars, extra=self.zw_cap)


@dataclass(frozen=True)
class LocalSection:
    """``z^{−zshift}·body`` expanded at the point ``Q_point``."""

    point: int
    zshift: int
    body: TruncSeries


@dataclass(frozen=True)
class LocalMatrix:
    """Expansion matrix; column ``b`` holds expansions at ``points[b]``."""

    chart: LocalChart
    rowdeg: tuple[int, ...]
    entries: tuple[tuple[LocalSection, ...], ...]

    def __post_init__(self) -> None:
        size = len(self.rowdeg)
        if len(self.entries) != size or any(len(row) != size for row in self.entries):
            raise LocalModelError(f"expected a {size}×{size} expansion matrix")
        DegreeVector(self.rowdeg)
        for b in range(size):
            if len({row[b].point for row in self.entries}) != 1:
                raise LocalModelError(f"column {b + 1} mixes expansion points")

    @property
    def dim(self) -> int:
        return len(self.rowdeg)

    @property
    def points(self) -> tuple[int, ...]:
        return tuple(section.point for section in self.entries[0])


@dataclass(frozen=True)
class IdealPattern:
    """Vanishing orders ``r_a − r_b + level − δ_ab``; orders ≤ 0 impose nothing."""

    rowdeg: tuple[int, ...]
    level: int

    @property
    def dim(self) -> int:
        return len(self.rowdeg)

    def exponent(self, a: int, b: int) -> int:
        return self.rowdeg[a] - self.rowdeg[b] + self.level - (1 if a == b else 0)


@dataclass(frozen=True)
class Elimination:
    """Certificate of an elimination: ``result = L·χ·σ``."""

    transform: LaxMatrix
    permutation: tuple[int, ...]
    result: LocalMatrix


# -- sections --------------------------------------------------------------


def lm_section(chart: LocalChart, point: int, zshift: int, terms: Optional[Mapping[Exponent, RationalLike]] = None) -> LocalSection:
    return LocalSection(point, zshift, chart.body(terms))


def lm_zero_section(chart: LocalChart, point: int, zshift: int = 0) -> LocalSection:
    return LocalSection(point, zshift, chart.body())


def _align(first: LocalSection, second: LocalSection) -> tuple[LocalSection, LocalSection]:
    if first.point != second.point:
        raise LocalModelError(f"expansions at Q{first.point + 1} and Q{second.point + 1} cannot be combined")
    shift = max(first.zshift, second.zshift)

    def lift(section: LocalSection) -> LocalSection:
        if section.zshift == shift:
            return section
        return LocalSection(section.point, shift, s_shift(section.body, 0, shift - section.zshift))

    return lift(first), lift(second)


def lm_add(first: LocalSection, second: LocalSection) -> LocalSection:
    left, right = _align(first, second)
    return LocalSection(left.point, left.zshift, s_add(left.body, right.body))


def lm_scale_series(chart: LocalChart, coefficient: TruncSeries, section: LocalSection) -> LocalSection:
    return LocalSection(section.point, section.zshift, s_mul(chart.embed_coefficient(coefficient), section.body))


def lm_agrees(first: LocalSection, second: LocalSection) -> bool:
    left, right = _align(first, second)
    return s_agrees(left.body, right.body)


def lm_act(chart: LocalChart, generator: int, section: LocalSection) -> LocalSection:
    """
    Apply ``ξ`` (``generator == XI``) or ``η_generator``.

    ``ξ`` acts as ``∂_{t0} + 1/z`` and ``η_i`` as ``∂_{t_i} + w_i/z``, so the
    body becomes ``z·∂body + body`` (resp. ``z·∂body + w_i·body``) and the
    pole order grows by one.

    Raises:
        TruncationExhaustedError: The derivative used up the ``t``-precision.
    """
    if not 0 <= generator < chart.n:
        raise LocalModelError(f"generator index {generator} outside 0..{chart.n - 1}")
    body = section.body
    moved = s_shift(s_derive(body, chart.t_index(generator)), 0)
    multiplier = body if generator == XI else s_shift(body, generator)
    result = s_add(moved, multiplier)
    if result.is_void:
        raise TruncationExhaustedError(
            f"acting with {'ξ' if generator == XI else f'η{generator}'} exhausted the t-precision"
        )
    return LocalSection(section.point, section.zshift + 1, result)


def lm_apply(chart: LocalChart, op: MicroOp, section: LocalSection) -> LocalSection:
    """Action of a differential operator ``Σ f η^β ξ^e`` on an expansion."""
    if not op.is_differential():
        raise LocalModelError("only differential operators act on expansions")
    if op.nvars != chart.n or op.neta != chart.neta:
        raise LocalModelError(f"operator over ({op.nvars}, {op.neta}) does not fit chart n={chart.n}")
    total = lm_zero_section(chart, section.point, section.zshift)
    for (power, beta), coefficient in op.items():
        if coefficient.is_zero() and coefficient.is_exact:
            continue
        moved = section
        for _ in range(power):
            moved = lm_act(chart, XI, moved)
        for index, count in enumerate(beta, start=1):
            for _ in range(count):
                moved = lm_act(chart, index, moved)
        total = lm_add(total, lm_scale_series(chart, coefficient, moved))
    return total


def lm_derive_t(chart: LocalChart, section: LocalSection, index: int) -> LocalSection:
    """``∇^U`` in the direction ``t_index``: differentiate the body, ``z`` held fixed."""
    return LocalSection(section.point, section.zshift, s_derive(section.body, chart.t_index(index)))


def _zw_precision(chart: LocalChart, section: LocalSection) -> Optional[int]:
    """Highest (z,w)-degree of the normalized expansion whose coefficients are known."""
    body = section.body
    if body.is_exact:
        return None
    group = body.bound_cap(chart.zw_vars)
    bound = body.cap if group is None else min(body.cap, group)
    return bound - section.zshift


def lm_jet(chart: LocalChart, section: LocalSection, z_power: int, w_powers: Exponent = ()) -> TruncSeries:
    """Coefficient of ``z^{z_power} w^{w_powers}`` in ``z^{−zshift}·body``, as a function of ``t``."""
    w_powers = tuple(w_powers) or (0,) * chart.neta
    source = z_power + section.zshift
    if source < 0:
        body = section.body
        cap = None if body.is_exact else body.bound_cap(chart.t_vars)
        return TruncSeries(chart.n, cap, {})
    sliced = s_slice(section.body, 0, source)
    for index, power in enumerate(w_powers, start=1):
        sliced = s_slice(sliced, index, power)
    return s_project(sliced, chart.t_vars)


def lm_has_pole(section: LocalSection) -> bool:
    if section.zshift <= 0:
        return False
    return any(exponent[0] < section.zshift for exponent, _ in section.body.items())


def lm_vanishing_order(section: LocalSection, nzw: int) -> Optional[int]:
    """Smallest (z,w)-degree with a known nonzero coefficient; ``None`` if none is known."""
    degrees = [sum(exponent[:nzw]) - section.zshift for exponent, _ in section.body.items()]
    return min(degrees) if degrees else None


def lm_section_member(chart: LocalChart, section: LocalSection, exponent: int) -> bool:
    """True iff the expansion provably vanishes to order ``exponent`` at its point."""
    if exponent <= 0:
        return True
    order = lm_vanishing_order(section, chart.n)
    if order is not None and order < exponent:
        return False
    precision = _zw_precision(chart, section)
    return precision is None or precision >= exponent - 1


# -- matrices --------------------------------------------------------------


def lm_matrix(chart: LocalChart, rowdeg: Sequence[int], entries: Sequence[Sequence[LocalSection]]) -> LocalMatrix:
    return LocalMatrix(chart, tuple(rowdeg), tuple(tuple(row) for row in entries))


def lm_apply_matrix(op: LaxMatrix, chi: LocalMatrix) -> LocalMatrix:
    """``(Lχ)_{ab} = Σ_k L_{ak}·χ_{kb}``."""
    if op.degrees.entries != chi.rowdeg:
        raise LocalModelError(f"operator degrees {op.degrees.entries} differ from row degrees {chi.rowdeg}")
    chart = chi.chart
    rows = []
    for a in range(chi.dim):
        row = []
        for b in range(chi.dim):
            total = lm_zero_section(chart, chi.points[b], chi.entries[a][b].zshift)
            for k in range(chi.dim):
                entry = op[a, k]
                if entry.is_exact and entry.top is None:
                    continue
                total = lm_add(total, lm_apply(chart, entry, chi.entries[k][b]))
            row.append(total)
        rows.append(row)
    return lm_matrix(chart, chi.rowdeg, rows)


def lm_permute_columns(chi: LocalMatrix, permutation: Sequence[int]) -> LocalMatrix:
    """Column ``b`` of the result is column ``permutation[b]`` of ``chi``."""
    rows = [[row[source] for source in permutation] for row in chi.entries]
    return lm_matrix(chi.chart, chi.rowdeg, rows)


def lm_tilde(chi: LocalMatrix) -> LocalMatrix:
    """Multiply row ``a`` by ``z^{r_a}``."""
    rows = [
        [LocalSection(section.point, section.zshift - chi.rowdeg[a], section.body) for section in row]
        for a, row in enumerate(chi.entries)
    ]
    return lm_matrix(chi.chart, chi.rowdeg, rows)


def lm_untilde(chi: LocalMatrix) -> LocalMatrix:
    rows = [
        [LocalSection(section.point, section.zshift + chi.rowdeg[a], section.body) for section in row]
        for a, row in enumerate(chi.entries)
    ]
    return lm_matrix(chi.chart, chi.rowdeg, rows)


def lm_evaluate(chi: LocalMatrix) -> list[list[TruncSeries]]:
    """
    Values at the points, as functions of ``t``.

    Raises:
        PoleRemainingError: Some entry still has a pole at its point.
    """
    values: list[list[TruncSeries]] = []
    for a, row in enumerate(chi.entries):
        current: list[TruncSeries] = []
        for b, section in enumerate(row):
            if lm_has_pole(section):
                raise PoleRemainingError(f"entry ({a + 1},{b + 1}) has a pole of order {section.zshift}")
            current.append(lm_jet(chi.chart, section, 0))
        values.append(current)
    return values


def lm_ideal_member(chi: LocalMatrix, pattern: IdealPattern) -> bool:
    if pattern.rowdeg != chi.rowdeg:
        raise LocalModelError("pattern and matrix use different row degrees")
    return all(
        lm_section_member(chi.chart, chi.entries[a][b], pattern.exponent(a, b))
        for a in range(chi.dim)
        for b in range(chi.dim)
    )


def lm_is_good(psi: LocalMatrix) -> bool:
    """Regular normalized expansions, unit diagonal values, off-diagonal vanishing per level 1."""
    tilde = lm_tilde(psi)
    if any(lm_has_pole(section) for row in tilde.entries for section in row):
        return False
    for a in range(tilde.dim):
        if not s_is_unit(lm_jet(tilde.chart, tilde.entries[a][a], 0)):
            return False
    return lm_ideal_member(tilde, IdealPattern(tilde.rowdeg, 1))


def lm_evaluation_shape_ok(values: Sequence[Sequence[TruncSeries]], rowdeg: Sequence[int]) -> bool:
    """Upper triangular, and diagonal inside blocks of equal degree."""
    size = len(rowdeg)
    for a in range(size):
        for b in range(size):
            if a == b:
                continue
            below = a > b
            same_block = rowdeg[a] == rowdeg[b]
            if (below or same_block) and not values[a][b].is_zero():
                return False
    return True


def lm_row_update(chi: LocalMatrix, target: int, source: int, op: MicroOp) -> LocalMatrix:
    """
    ``χ_target += op·χ_source``.

    Raises:
        LocalModelError: ``ord(op)`` exceeds ``r_target − r_source``.
    """
    allowed = chi.rowdeg[target] - chi.rowdeg[source]
    if not mo_order(op).at_most(allowed):
        raise LocalModelError(
            f"row move {source + 1}→{target + 1} needs order ≤ {allowed}, got {mo_order(op).value}"
        )
    rows = [list(row) for row in chi.entries]
    rows[target] = [
        lm_add(entry, lm_apply(chi.chart, op, source_entry))
        for entry, source_entry in zip(rows[target], chi.entries[source])
    ]
    return lm_matrix(chi.chart, chi.rowdeg, rows)


def lm_matrices_agree(first: LocalMatrix, second: LocalMatrix) -> bool:
    if first.rowdeg != second.rowdeg or first.points != second.points:
        return False
    return all(
        lm_agrees(x, y)
        for row_x, row_y in zip(first.entries, second.entries)
        for x, y in zip(row_x, row_y)
    )


# -- symbols ---------------------------------------------------------------


def lm_symbol_evaluation(op: LaxMatrix, chi: LocalMatrix) -> tuple[SeriesMatrix, SeriesMatrix]:
    """
    Both sides of ``(L̃χ)(P) = σ_0(L)·χ̃(P)`` for an operator of filtered order 0.

    The left side evaluates ``z^{r_a}·(Lχ)_{ab}`` at the points; the right side
    multiplies the conjugated ``ξ^{c_a − c_b}`` block by the values of ``χ̃``.

    Raises:
        LocalModelError: ``op`` is not of filtered order 0.
    """
    if not mat_filtered_order(op, 0):
        raise LocalModelError("the symbol identity needs an operator of filtered order 0")
    left = lm_evaluate(lm_tilde(lm_apply_matrix(op, chi)))
    symbol = mat_xi_conjugate(mat_sigma(op, 0), 0)
    right = sm_mul(symbol, lm_evaluate(lm_tilde(chi)), chi.chart.n)
    return left, right


def lm_symbol_identity_holds(op: LaxMatrix, chi: LocalMatrix) -> bool:
    left, right = lm_symbol_evaluation(op, chi)
    return sm_agrees(left, right)


# -- elimination -----------------------------------------------------------


class _Eliminator:
    """Mutable working state of one elimination run."""

    def __init__(self, chi: LocalMatrix) -> None:
        self.chart = chi.chart
        self.rowdeg = chi.rowdeg
        self.rows = [list(row) for row in chi.entries]
        self.permutation = list(range(chi.dim))
        n, neta = self.chart.n, self.chart.neta
        self.transform = [
            [mo_identity(n, neta) if a == b else mo_zero(n, neta) for b in range(chi.dim)]
            for a in range(chi.dim)
        ]
        self.moves = 0

    @property
    def dim(self) -> int:
        return len(self.rowdeg)

    def value(self, a: int, b: int) -> TruncSeries:
        section = self.rows[a][b]
        tilde = LocalSection(section.point, section.zshift - self.rowdeg[a], section.body)
        if lm_has_pole(tilde):
            raise PoleRemainingError(f"entry ({a + 1},{b + 1}) has a pole after normalization")
        return lm_jet(self.chart, tilde, 0)

    def jet(self, a: int, b: int, z_power: int, w_powers: Exponent) -> TruncSeries:
        section = self.rows[a][b]
        tilde = LocalSection(section.point, section.zshift - self.rowdeg[a], section.body)
        return lm_jet(self.chart, tilde, z_power, w_powers)

    def swap_columns(self, first: int, second: int) -> None:
        if first == second:
            return
        for row in self.rows:
            row[first], row[second] = row[second], row[first]
        self.permutation[first], self.permutation[second] = self.permutation[second], self.permutation[first]
        logger.debug("Swapped columns %d and %d", first + 1, second + 1)

    def row_update(self, target: int, source: int, op: MicroOp) -> None:
        self.rows[target] = [
            lm_add(entry, lm_apply(self.chart, op, source_entry))
            for entry, source_entry in zip(self.rows[target], self.rows[source])
        ]
        self.transform[target] = [
            mo_add(entry, mo_mul(op, source_entry))
            for entry, source_entry in zip(self.transform[target], self.transform[source])
        ]
        self.moves += 1
        logger.debug("Row move %d += op·row %d (order %s)", target + 1, source + 1, mo_order(op).value)

    def op(self, coefficient: TruncSeries, xi_power: int, beta: Optional[Exponent] = None) -> MicroOp:
        beta = beta if beta is not None else (0,) * self.chart.neta
        return MicroOp(self.chart.n, self.chart.neta, {(xi_power, beta): coefficient})

    def inverse(self, unit: TruncSeries) -> TruncSeries:
        return s_invert(unit, cap=self.chart.t_cap)

    def result(self) -> LocalMatrix:
        return lm_matrix(self.chart, self.rowdeg, self.rows)


def _evaluation_phase(work: _Eliminator) -> None:
    size = work.dim
    for a in range(size):
        pivot = next((b for b in range(a, size) if s_is_unit(work.value(a, b))), None)
        if pivot is None:
            raise NotEliminableError(f"no unit value left in row {a + 1}; the evaluation matrix is singular")
        work.swap_columns(a, pivot)
        unit_inverse = work.inverse(work.value(a, a))
        for below in range(a + 1, size):
            g = work.value(below, a)
            if g.is_zero():
                continue
            factor = s_neg(s_mul(g, unit_inverse))
            work.row_update(below, a, work.op(factor, work.rowdeg[below] - work.rowdeg[a]))

    for a in range(size):
        for b in range(a + 1, size):
            if work.rowdeg[b] != work.rowdeg[a]:
                break
            g = work.value(a, b)
            if g.is_zero():
                continue
            factor = s_neg(s_mul(g, work.inverse(work.value(b, b))))
            work.row_update(a, b, work.op(factor, 0))


def _jet_phase(work: _Eliminator) -> None:
    size = work.dim
    neta = work.chart.neta
    inverses = [work.inverse(work.value(b, b)) for b in range(size)]
    for a in range(size):
        depth = max((work.rowdeg[a] - work.rowdeg[b] for b in range(a)), default=0)
        for m in range(1, depth + 1):
            for b in range(a):
                gap = work.rowdeg[a] - work.rowdeg[b]
                if gap < m:
                    continue
                for level in range(m if neta else 0, -1, -1):
                    slots: dict[tuple[int, Exponent], TruncSeries] = {}
                    for beta in monomials(neta, level):
                        if sum(beta) != level:
                            continue
                        g = work.jet(a, b, m - level, beta)
                        if g.is_zero():
                            continue
                        slots[(gap - m, beta)] = s_neg(s_mul(g, inverses[b]))
                    if slots:
                        work.row_update(a, b, MicroOp(work.chart.n, neta, slots))


def lm_gauss_normalize(chi: LocalMatrix) -> Elimination:
    """
    Bring an expansion matrix into good form with legal moves only.

    The first phase works on values at the points: per row, the first
    column with a unit value becomes the pivot, entries below are cleared
    with ``f·ξ^{r_below − r_a}`` and entries to the right inside the same
    degree block with ``f``. The second phase clears the higher jets of the
    entries below the diagonal, degree by degree, with moves
    ``f·η^β·ξ^{r_a − r_b − m}``.

    Raises:
        NotEliminableError: The evaluation matrix is singular.
    """
    work = _Eliminator(chi)
    try:
        _evaluation_phase(work)
        _jet_phase(work)
    except NonUnitError as exc:
        raise NotEliminableError("a pivot value stopped being a unit") from exc
    transform = LaxMatrix(DegreeVector(chi.rowdeg), work.transform)
    logger.debug("Elimination finished after %d moves with permutation %s", work.moves, work.permutation)
    return Elimination(transform, tuple(work.permutation), work.result())


def lm_verify_elimination(chi: LocalMatrix, elimination: Elimination) -> bool:
    """Recompute ``L·χ·σ`` and compare it with the stored result."""
    recomputed = lm_permute_columns(lm_apply_matrix(elimination.transform, chi), elimination.permutation)
    return lm_matrices_agree(recomputed, elimination.result)


# -- generators ------------------------------------------------------------


def _values_invertible(values: Sequence[Sequence[TruncSeries]], n: int) -> bool:
    constants = [[s_constant(n, entry.coefficient((0,) * n)) for entry in row] for row in values]
    try:
        sm_invert(constants, n)
    except NonUnitError:
        return False
    return True


def lm_random_matrix(
    rng: random.Random,
    chart: LocalChart,
    rowdeg: Sequence[int],
    *,
    density: float = 0.4,
    attempts: int = 50,
) -> LocalMatrix:
    """
    Draw an expansion matrix with pole orders ``r_a`` whose evaluation is invertible.

    Raises:
        NotEliminableError: No invertible draw within ``attempts``.
    """
    size = len(rowdeg)
    for _ in range(attempts):
        rows = [
            [
                LocalSection(
                    b,
                    rowdeg[a],
                    s_random(
                        rng,
                        chart.nvars,
                        chart.zw_cap + chart.t_cap,
                        unit=False,
                        density=density,
                        bounds=chart.bounds(),
                    ),
                )
                for b in range(size)
            ]
            for a in range(size)
        ]
        chi = lm_matrix(chart, rowdeg, rows)
        if _values_invertible(lm_evaluate(lm_tilde(chi)), chart.n):
            return chi
    raise NotEliminableError(f"no invertible random expansion matrix after {attempts} draws")


def lm_random_local_term(
    rng: random.Random,
    chart: LocalChart,
    rowdeg: Sequence[int],
    *,
    cap: int = 2,
    density: float = 0.7,
) -> LaxMatrix:
    """
    Draw a differential matrix of filtered order 0 over ``chart``.

    Entry ``(a, b)`` collects ``f η^β ξ^e`` with ``e + |β| ≤ r_a − r_b``;
    entries with ``r_a < r_b`` are zero.
    """
    degrees = DegreeVector(tuple(rowdeg))
    rows: list[list[MicroOp]] = []
    for a in range(degrees.dim):
        row: list[MicroOp] = []
        for b in range(degrees.dim):
            top = degrees.shift(a, b)
            slots: dict[tuple[int, Exponent], TruncSeries] = {}
            for power in range(top + 1):
                for beta in itertools.product(range(top + 1), repeat=chart.neta):
                    if power + sum(beta) <= top and rng.random() < density:
                        slots[(power, beta)] = s_random(rng, chart.n, cap, unit=False)
            row.append(MicroOp(chart.n, chart.neta, slots))
        rows.append(row)
    return LaxMatrix(degrees, rows)
