from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Mapping, Optional, Sequence, Union

import sympy

from core.coeffring import (
    Exponent,
    NonUnitError,
    SeriesMatrix,
    TruncSeries,
    s_add,
    s_agrees,
    s_constant,
    s_is_unit,
    s_random,
    s_scale,
    s_sum,
    s_zero,
    sm_derive,
    sm_invert,
    sm_mul,
)
from core.laxmat import DegreeVector

logger = logging.getLogger(__name__)

POLICY_PREVIOUS_ENTRY = "previous-entry"
POLICY_ALTERNATING_SUM = "alternating-sum"
POLICY_EXPLICIT = "explicit"
POLICY_AUTO = "auto"
POLICIES = (POLICY_PREVIOUS_ENTRY, POLICY_ALTERNATING_SUM, POLICY_EXPLICIT, POLICY_AUTO)

# Two of the d = 4 chains for all-distinct degrees, as explicit choices per 1-based row.
CHAIN_PREVIOUS_THEN_DIFFERENCE = {2: (1,), 3: (0, 1), 4: (0, 1, -1)}
CHAIN_DIFFERENCE_THEN_PREVIOUS = {2: (1,), 3: (1, -1), 4: (0, 0, 1)}


class NormalizationError(Exception):
    """Base exception raised while normalizing a good basis."""


class NonUnitPivotError(NormalizationError):
    """Raised when the selected diagonal value is nonzero but not a unit."""


class RecipeError(NormalizationError):
    """Raised when a modification recipe is structurally inconsistent."""


@dataclass(frozen=True)
class Unit:
    """Diagonal fixed to 1; the row's point joins S."""


@dataclass(frozen=True)
class Combo:
    """Diagonal fixed to ``c·v`` for the constant vector ``coefficients``."""

    coefficients: tuple[Fraction, ...]

    @property
    def first_nonzero(self) -> int:
        return next(i for i, value in enumerate(self.coefficients) if value != 0)


Choice = Union[Unit, Combo]


@dataclass(frozen=True)
class ChoiceTree:
    rows: tuple[Choice, ...]

    def __post_init__(self) -> None:
        if not self.rows or not isinstance(self.rows[0], Unit):
            raise NormalizationError("the first row of a choice tree must be Unit")

    @property
    def adjoined(self) -> tuple[int, ...]:
        """0-based rows whose points were adjoined to S."""
        return tuple(i for i, row in enumerate(self.rows) if isinstance(row, Unit))


@dataclass(frozen=True, order=True)
class RecipeTerm:
    """``coefficient · L_{i,j,k}`` with 1-based ``i``, ``j``."""

    i: int
    j: int
    k: int
    coefficient: Fraction = field(compare=False, default=Fraction(1))


@dataclass(frozen=True)
class RecipeRow:
    terms: tuple[RecipeTerm, ...] = ()
    ref: Optional[int] = None


@dataclass(frozen=True)
class ModRecipe:
    """Diagonal of the modification matrix, one row per position (1-based refs)."""

    rows: tuple[RecipeRow, ...]

    def validate(self) -> None:
        for p, row in enumerate(self.rows, start=1):
            if row.ref is not None and not 1 <= row.ref < p:
                raise RecipeError(f"row {p} refers to diagonal {row.ref}, which is not earlier")
            for term in row.terms:
                if term.j != p or not 1 <= term.i < p:
                    raise RecipeError(f"row {p} uses L_{{{term.i},{term.j},{term.k}}} outside its column")

    def flattened(self) -> tuple[tuple[tuple[Fraction, int, int, int], ...], ...]:
        """Each diagonal as signed triples ``(coefficient, i, j, k)`` with references expanded."""
        expanded: list[dict[tuple[int, int, int], Fraction]] = []
        for row in self.rows:
            total: dict[tuple[int, int, int], Fraction] = dict(expanded[row.ref - 1]) if row.ref else {}
            for term in row.terms:
                key = (term.i, term.j, term.k)
                total[key] = total.get(key, Fraction(0)) + term.coefficient
            expanded.append({key: value for key, value in total.items() if value != 0})
        return tuple(
            tuple((value, *key) for key, value in sorted(row.items()))
            for row in expanded
        )


@dataclass(frozen=True)
class NormState:
    psi: SeriesMatrix
    r: SeriesMatrix
    adjoined: frozenset[int]


@dataclass(frozen=True)
class WorkedRecipe:
    name: str
    degrees: tuple[int, ...]
    policy: str
    tree: ChoiceTree
    expected: tuple[tuple[tuple[Fraction, int, int, int], ...], ...]
    choices: Mapping[int, tuple[Fraction, ...]] = field(default_factory=dict)


# -- R and eigenvectors ----------------------------------------------------


def nz_log_derivative(psi: Sequence[Sequence[TruncSeries]], nvars: int) -> SeriesMatrix:
    """``R = ψ′ψ^{−1}`` with ``′ = ∂_{t0}``."""
    try:
        inverse = sm_invert(psi, nvars)
    except NonUnitError as exc:
        raise NormalizationError("normalized block is not invertible") from exc
    return sm_mul(sm_derive(psi, 0), inverse, nvars)


def _leading(matrix: Sequence[Sequence[TruncSeries]], size: int) -> SeriesMatrix:
    return [list(row[:size]) for row in matrix[:size]]


def _to_sympy(value: Fraction) -> sympy.Rational:
    return sympy.Rational(value.numerator, value.denominator)


def _from_sympy(value: sympy.Expr) -> Fraction:
    rational = sympy.Rational(value)
    return Fraction(int(rational.p), int(rational.q))


def _coefficient_matrices(r: Sequence[Sequence[TruncSeries]]) -> list[tuple[Exponent, sympy.Matrix]]:
    exponents = sorted(
        {exponent for row in r for entry in row for exponent, _ in entry.items()},
        key=lambda e: (sum(e), tuple(-x for x in e)),
    )
    return [
        (
            exponent,
            sympy.Matrix([[_to_sympy(entry.coefficient(exponent)) for entry in row] for row in r]),
        )
        for exponent in exponents
    ]


def _eigen_branches(r: Sequence[Sequence[TruncSeries]]) -> list[tuple[sympy.Matrix, dict[Exponent, Fraction]]]:
    size = len(r)
    branches: list[tuple[sympy.Matrix, dict[Exponent, Fraction]]] = [(sympy.eye(size), {})]
    for exponent, coefficients in _coefficient_matrices(r):
        eigenvalues = [value for value in coefficients.eigenvals() if value.is_rational]
        refined: list[tuple[sympy.Matrix, dict[Exponent, Fraction]]] = []
        for basis, ks in branches:
            for value in eigenvalues:
                shifted = basis * (coefficients - value * sympy.eye(size))
                kernel = shifted.T.nullspace()
                if not kernel:
                    continue
                combined = sympy.Matrix.vstack(*[vector.T for vector in kernel]) * basis
                refined.append((combined, {**ks, exponent: _from_sympy(value)}))
        branches = refined
        if not branches:
            break
    return branches


def nz_eigen_candidates(r: Sequence[Sequence[TruncSeries]]) -> list[tuple[tuple[Fraction, ...], TruncSeries]]:
    """
    Every canonical constant left eigenvector ``c`` of ``R`` with its ``k``.

    ``cR = kc`` splits into ``cR_α = k_α c`` for the coefficient matrices
    ``R_α``, so ``c`` lies in an intersection of left eigenspaces. Candidates
    are the reduced row-echelon rows of those intersections, ordered by the
    number of nonzero coefficients of ``k``, then by pivot position, then by
    ``c``.
    """
    if not r:
        return []
    nvars = r[0][0].nvars
    caps = [entry.cap for row in r for entry in row if entry.cap is not None]
    cap = min(caps) if caps else None
    found: list[tuple[tuple[int, int, tuple[Fraction, ...]], tuple[Fraction, ...], TruncSeries]] = []
    seen: set[tuple[Fraction, ...]] = set()
    for basis, ks in _eigen_branches(r):
        reduced, pivots = basis.rref()
        for row_index, pivot in enumerate(pivots):
            vector = tuple(_from_sympy(x) for x in reduced.row(row_index))
            if vector in seen:
                continue
            seen.add(vector)
            k = TruncSeries(nvars, cap, {e: v for e, v in ks.items()})
            nonzero = sum(1 for v in ks.values() if v != 0)
            found.append(((nonzero, pivot, vector), vector, k))
    found.sort(key=lambda item: item[0])
    return [(vector, k) for _, vector, k in found]


def nz_constant_eigenvector(r: Sequence[Sequence[TruncSeries]], j: Optional[int] = None) -> Optional[tuple[tuple[Fraction, ...], TruncSeries]]:
    """Preferred constant ``c ≠ 0`` with ``cR = kc`` on the leading ``j×j`` block, or ``None``."""
    block = _leading(r, j if j is not None else len(r))
    candidates = nz_eigen_candidates(block)
    return candidates[0] if candidates else None


def nz_eigen_holds(r: Sequence[Sequence[TruncSeries]], c: Sequence[Fraction]) -> Optional[TruncSeries]:
    """Return ``k`` when ``cR = kc`` holds at the available precision, else ``None``."""
    size = len(c)
    nvars = r[0][0].nvars
    lead = next((i for i, value in enumerate(c) if value != 0), None)
    if lead is None:
        return None
    row = [s_sum((s_scale(r[m][i], c[m]) for m in range(size) if c[m] != 0), nvars) for i in range(size)]
    k = s_scale(row[lead], 1 / Fraction(c[lead]))
    for i in range(size):
        if not s_agrees(row[i], s_scale(k, c[i])):
            return None
    return k


# -- the procedure ---------------------------------------------------------


def _policy_candidates(policy: str, v: Sequence[TruncSeries], row: int, choices: Mapping[int, Sequence[Fraction]]) -> list[tuple[Fraction, ...]]:
    nonzero = [i for i, entry in enumerate(v) if not entry.is_zero()]
    j = nonzero[-1] + 1
    if policy == POLICY_PREVIOUS_ENTRY:
        return [tuple(Fraction(1 if i == j - 1 else 0) for i in range(j))]
    if policy == POLICY_ALTERNATING_SUM:
        first = nonzero[0]
        return [tuple(
            Fraction(1) if i == first else Fraction(-1) if i in nonzero else Fraction(0)
            for i in range(j)
        )]
    if policy == POLICY_EXPLICIT:
        chosen = choices.get(row + 1)
        if chosen is None:
            return []
        coefficients = tuple(Fraction(x) for x in chosen)
        if len(coefficients) > row:
            raise NormalizationError(f"row {row + 1} takes at most {row} coefficients, got {len(coefficients)}")
        length = max(j, len(coefficients))
        return [coefficients + (Fraction(0),) * (length - len(coefficients))]
    if policy == POLICY_AUTO:
        return []
    raise NormalizationError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")


def _candidates(
    policy: str,
    v: Sequence[TruncSeries],
    row: int,
    choices: Mapping[int, Sequence[Fraction]],
    r: SeriesMatrix,
    j: int,
) -> Iterator[tuple[Fraction, ...]]:
    yield from _policy_candidates(policy, v, row, choices)
    for c, _ in nz_eigen_candidates(_leading(r, j)):
        yield c


def _combination(c: Sequence[Fraction], v: Sequence[TruncSeries], nvars: int) -> TruncSeries:
    return s_sum((s_scale(v[m], c[m]) for m in range(len(c)) if c[m] != 0), nvars)


def _check_stage(r_before: SeriesMatrix, r_after: SeriesMatrix, p: int, choice: Choice, k: Optional[TruncSeries]) -> None:
    for a in range(p):
        for b in range(p):
            if not s_agrees(r_before[a][b], r_after[a][b]):
                raise NormalizationError(f"stage {p + 1} changed the leading block of R at ({a + 1},{b + 1})")
    for b in range(p):
        if not r_after[p][b].is_zero():
            raise NormalizationError(f"stage {p + 1} left a nonzero entry below the diagonal of R")
    if isinstance(choice, Combo) and k is not None:
        nvars = r_after[p][p].nvars
        expected = s_add(_combination(choice.coefficients, [r_after[m][p] for m in range(len(choice.coefficients))], nvars), k)
        if not s_agrees(r_after[p][p], expected):
            raise NormalizationError(f"diagonal {p + 1} of R does not follow from its column")


def nz_fix_diagonal(
    psi: Sequence[Sequence[TruncSeries]],
    degrees: DegreeVector,
    policy: str = POLICY_PREVIOUS_ENTRY,
    choices: Optional[Mapping[int, Sequence[Fraction]]] = None,
) -> tuple[ChoiceTree, NormState]:
    """
    Fix the diagonal of the normalized value matrix row by row.

    Each row either takes ``x = c·v`` for a constant left eigenvector ``c``
    of the leading block of ``R``, or ``x = 1`` with its point adjoined to
    S. The policy proposes ``c`` first; the eigenvector search and the
    adjoining step are the fallbacks.

    Args:
        psi: Upper-triangular values; diagonal entries below row 1 are
            placeholders and are overwritten.
        degrees: Generator degrees.
        policy: One of ``POLICIES``.
        choices: Explicit vectors per 1-based row for ``POLICY_EXPLICIT``.

    Raises:
        NonUnitPivotError: The chosen ``x`` is nonzero but not a unit.
    """
    size = degrees.dim
    if len(psi) != size or any(len(row) != size for row in psi):
        raise NormalizationError(f"expected a {size}×{size} value matrix")
    if policy not in POLICIES:
        raise NormalizationError(f"unknown policy {policy!r}; expected one of {', '.join(POLICIES)}")
    choices = choices or {}
    nvars = psi[0][0].nvars

    work = [list(row) for row in psi]
    work[0][0] = s_constant(nvars, 1)
    rows: list[Choice] = [Unit()]
    adjoined = {0}
    r_current = nz_log_derivative(_leading(work, 1), nvars)

    for p in range(1, size):
        v = [work[m][p] for m in range(p)]
        choice: Choice = Unit()
        k_used: Optional[TruncSeries] = None
        if any(not entry.is_zero() for entry in v):
            j = max(i for i, entry in enumerate(v) if not entry.is_zero()) + 1
            for c in _candidates(policy, v, p, choices, r_current, j):
                k = nz_eigen_holds(_leading(r_current, len(c)), c)
                if k is None:
                    logger.debug("Row %d: %s is not a left eigenvector of R", p + 1, c)
                    continue
                x = _combination(c, v, nvars)
                if x.is_zero():
                    continue
                if not s_is_unit(x):
                    raise NonUnitPivotError(f"row {p + 1}: x = c·v has zero constant term for c = {c}")
                choice, k_used = Combo(tuple(c)), k
                work[p][p] = x
                break
        if isinstance(choice, Unit):
            work[p][p] = s_constant(nvars, 1)
            adjoined.add(p)
            logger.debug("Row %d: no suitable vector, adjoining Q%d to S", p + 1, p + 1)
        else:
            logger.debug("Row %d: x = c·v with c = %s", p + 1, choice.coefficients)
        rows.append(choice)

        r_next = nz_log_derivative(_leading(work, p + 1), nvars)
        _check_stage(r_current, r_next, p, choice, k_used)
        r_current = r_next

    tree = ChoiceTree(tuple(rows))
    logger.debug("Normalization finished with S = %s", sorted(q + 1 for q in adjoined))
    return tree, NormState(work, r_current, frozenset(adjoined))


def nz_emit_recipe(tree: ChoiceTree, degrees: DegreeVector) -> ModRecipe:
    """Translate the choices into ``D_pp = Σ c_m L_{m,p,c_m−c_p} + D_{i,i}``."""
    if len(tree.rows) != degrees.dim:
        raise RecipeError(f"{len(tree.rows)} choices for {degrees.dim} degrees")
    rows: list[RecipeRow] = []
    for p, choice in enumerate(tree.rows):
        if isinstance(choice, Unit):
            rows.append(RecipeRow())
            continue
        if len(choice.coefficients) > p:
            raise RecipeError(f"row {p + 1} combines {len(choice.coefficients)} entries above the diagonal")
        terms = tuple(
            RecipeTerm(m + 1, p + 1, degrees[m] - degrees[p], value)
            for m, value in enumerate(choice.coefficients)
            if value != 0
        )
        rows.append(RecipeRow(terms, choice.first_nonzero + 1))
    recipe = ModRecipe(tuple(rows))
    recipe.validate()
    return recipe


# -- data generators -------------------------------------------------------


def _generic_unit(rng: random.Random, nvars: int, cap: int, constant: int) -> TruncSeries:
    drawn = s_random(rng, nvars, cap, unit=False)
    return TruncSeries(nvars, cap, {**drawn.terms, (0,) * nvars: constant})


def nz_generic_psi(rng: random.Random, degrees: DegreeVector, nvars: int = 1, cap: int = 4) -> SeriesMatrix:
    """
    Generic normalized values of a good basis.

    Upper triangular with unit entries above the diagonal between different
    degree blocks, zeros inside blocks and a placeholder 1 on the diagonal.
    Constant terms are distinct powers of two, so no signed sum of entries
    loses its unit.
    """
    size = degrees.dim
    matrix: SeriesMatrix = []
    slot = 0
    for a in range(size):
        row: list[TruncSeries] = []
        for b in range(size):
            if a == b:
                row.append(s_constant(nvars, 1))
            elif a < b and degrees[a] < degrees[b]:
                row.append(_generic_unit(rng, nvars, cap, 2**slot))
                slot += 1
            else:
                row.append(s_zero(nvars, cap))
        matrix.append(row)
    return matrix


def _terms(*items: tuple[int, int, int, int]) -> tuple[tuple[Fraction, int, int, int], ...]:
    return tuple(sorted(((Fraction(c), i, j, k) for c, i, j, k in items), key=lambda term: term[1:]))


def _combo(*values: int) -> Combo:
    return Combo(tuple(Fraction(v) for v in values))


def nz_worked_recipes() -> list[WorkedRecipe]:
    """The six worked modifications with the choices that produce them."""
    return [
        WorkedRecipe(
            "two-generators",
            (0, 1),
            POLICY_PREVIOUS_ENTRY,
            ChoiceTree((Unit(), _combo(1))),
            ((), _terms((1, 1, 2, -1))),
        ),
        WorkedRecipe(
            "three-generators-previous",
            (0, 1, 2),
            POLICY_PREVIOUS_ENTRY,
            ChoiceTree((Unit(), _combo(1), _combo(0, 1))),
            ((), _terms((1, 1, 2, -1)), _terms((1, 1, 2, -1), (1, 2, 3, -1))),
        ),
        WorkedRecipe(
            "three-generators-difference",
            (0, 1, 2),
            POLICY_EXPLICIT,
            ChoiceTree((Unit(), _combo(1), _combo(-1, 1))),
            ((), _terms((1, 1, 2, -1)), _terms((-1, 1, 3, -2), (1, 2, 3, -1))),
            {3: (Fraction(-1), Fraction(1))},
        ),
        WorkedRecipe(
            "fano-previous-entry",
            (2, 3, 3, 3, 4),
            POLICY_PREVIOUS_ENTRY,
            ChoiceTree((Unit(), _combo(1), _combo(1), _combo(1), _combo(0, 0, 0, 1))),
            (
                (),
                _terms((1, 1, 2, -1)),
                _terms((1, 1, 3, -1)),
                _terms((1, 1, 4, -1)),
                _terms((1, 1, 4, -1), (1, 4, 5, -1)),
            ),
        ),
        WorkedRecipe(
            "fano-alternating",
            (2, 3, 3, 3, 4),
            POLICY_ALTERNATING_SUM,
            ChoiceTree((Unit(), _combo(1), _combo(1), _combo(1), _combo(1, -1, -1, -1))),
            (
                (),
                _terms((1, 1, 2, -1)),
                _terms((1, 1, 3, -1)),
                _terms((1, 1, 4, -1)),
                _terms((1, 1, 5, -2), (-1, 2, 5, -1), (-1, 3, 5, -1), (-1, 4, 5, -1)),
            ),
        ),
        WorkedRecipe(
            "ruled-surface",
            (0, 1),
            POLICY_PREVIOUS_ENTRY,
            ChoiceTree((Unit(), _combo(1))),
            ((), _terms((1, 1, 2, -1))),
        ),
    ]


