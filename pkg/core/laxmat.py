from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from core.coeffring import (
    NonUnitError,
    SeriesMatrix,
    TruncSeries,
    sm_invert,
)
from core.microp import (
    DEFAULT_INVERSE_DEPTH,
    MicroOp,
    mo_add,
    mo_agrees,
    mo_derive,
    mo_identity,
    mo_map,
    mo_mul,
    mo_neg,
    mo_order,
    mo_scalar,
    mo_split,
    mo_sub,
    mo_truncate,
    mo_xi,
    mo_zero,
)

logger = logging.getLogger(__name__)


class MatrixError(Exception):
    """Base exception raised by filtered matrix operations."""


class MatrixShapeError(MatrixError):
    """Raised when dimensions or degree vectors do not line up."""


class DegreeVectorError(MatrixError):
    """Raised when a degree vector is empty or decreasing."""


class MatrixNotInvertibleError(MatrixError):
    """Raised when the leading ξ-block of a matrix is singular."""

    def __init__(self, message: str, block: Optional[SeriesMatrix] = None) -> None:
        super().__init__(message)
        self.block = block


class NotSymbolicError(MatrixError):
    """Raised when an entry is not a pure ξ-monomial of the expected exponent."""


@dataclass(frozen=True)
class DegreeVector:
    """Generator degrees ``c_1 ≤ … ≤ c_d``."""

    entries: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.entries:
            raise DegreeVectorError("degree vector must be non-empty")
        if any(b < a for a, b in zip(self.entries, self.entries[1:])):
            raise DegreeVectorError(f"degree vector {self.entries} is not nondecreasing")

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def spread(self) -> int:
        return self.entries[-1] - self.entries[0]

    def shift(self, row: int, column: int) -> int:
        return self.entries[row] - self.entries[column]

    def __getitem__(self, index: int) -> int:
        return self.entries[index]

    def __len__(self) -> int:
        return len(self.entries)


class LaxMatrix:
    """Square matrix of operators filtered by a degree vector."""

    __slots__ = ("degrees", "entries", "nvars", "neta")

    def __init__(self, degrees: DegreeVector, entries: Sequence[Sequence[MicroOp]]) -> None:
        size = degrees.dim
        if len(entries) != size or any(len(row) != size for row in entries):
            raise MatrixShapeError(f"expected a {size}×{size} matrix")
        first = entries[0][0]
        for row in entries:
            for entry in row:
                if entry.nvars != first.nvars or entry.neta != first.neta:
                    raise MatrixShapeError("entries live over different rings")
        self.degrees = degrees
        self.entries: tuple[tuple[MicroOp, ...], ...] = tuple(tuple(row) for row in entries)
        self.nvars = first.nvars
        self.neta = first.neta

    @property
    def dim(self) -> int:
        return self.degrees.dim

    def __getitem__(self, index: tuple[int, int]) -> MicroOp:
        row, column = index
        return self.entries[row][column]

    def __repr__(self) -> str:
        return f"LaxMatrix(degrees={self.degrees.entries}, entries={self.entries!r})"


@dataclass(frozen=True)
class ModMatrix:
    """Diagonal modification matrix; entries sit at ξ⁰ with no η."""

    diagonal: tuple[TruncSeries, ...]

    def as_lax(self, degrees: DegreeVector, neta: int) -> LaxMatrix:
        size = len(self.diagonal)
        nvars = self.diagonal[0].nvars
        return LaxMatrix(
            degrees,
            [
                [mo_scalar(self.diagonal[i], neta) if i == j else mo_zero(nvars, neta) for j in range(size)]
                for i in range(size)
            ],
        )


# -- constructors ----------------------------------------------------------


def mat_identity(degrees: DegreeVector, nvars: int, neta: int) -> LaxMatrix:
    size = degrees.dim
    return LaxMatrix(
        degrees,
        [[mo_identity(nvars, neta) if i == j else mo_zero(nvars, neta) for j in range(size)] for i in range(size)],
    )


def mat_zero(degrees: DegreeVector, nvars: int, neta: int) -> LaxMatrix:
    size = degrees.dim
    return LaxMatrix(degrees, [[mo_zero(nvars, neta) for _ in range(size)] for _ in range(size)])


def mat_scalar(op: MicroOp) -> LaxMatrix:
    """A 1×1 matrix with degree vector ``(0,)``."""
    return LaxMatrix(DegreeVector((0,)), [[op]])


def mat_map(a: LaxMatrix, transform: Callable[[MicroOp], MicroOp]) -> LaxMatrix:
    return LaxMatrix(a.degrees, [[transform(entry) for entry in row] for row in a.entries])


# -- arithmetic ------------------------------------------------------------


def _check_pair(a: LaxMatrix, b: LaxMatrix) -> None:
    if a.degrees != b.degrees:
        raise MatrixShapeError(f"degree vectors {a.degrees.entries} and {b.degrees.entries} differ")
    if a.nvars != b.nvars or a.neta != b.neta:
        raise MatrixShapeError("matrices live over different rings")


def mat_add(a: LaxMatrix, b: LaxMatrix) -> LaxMatrix:
    _check_pair(a, b)
    return LaxMatrix(
        a.degrees,
        [[mo_add(x, y) for x, y in zip(row_a, row_b)] for row_a, row_b in zip(a.entries, b.entries)],
    )


def mat_sub(a: LaxMatrix, b: LaxMatrix) -> LaxMatrix:
    _check_pair(a, b)
    return LaxMatrix(
        a.degrees,
        [[mo_sub(x, y) for x, y in zip(row_a, row_b)] for row_a, row_b in zip(a.entries, b.entries)],
    )


def mat_neg(a: LaxMatrix) -> LaxMatrix:
    return mat_map(a, mo_neg)


def mat_mul(a: LaxMatrix, b: LaxMatrix, floor: Optional[int] = None) -> LaxMatrix:
    """Row–column product; every entry product honours ``floor``."""
    _check_pair(a, b)
    size = a.dim
    rows: list[list[MicroOp]] = []
    for i in range(size):
        row: list[MicroOp] = []
        for j in range(size):
            total = mo_zero(a.nvars, a.neta)
            for k in range(size):
                left, right = a.entries[i][k], b.entries[k][j]
                if (left.is_exact and left.top is None) or (right.is_exact and right.top is None):
                    continue
                total = mo_add(total, mo_mul(left, right, floor))
            row.append(total)
        rows.append(row)
    return LaxMatrix(a.degrees, rows)


def mat_commutator(a: LaxMatrix, b: LaxMatrix, floor: Optional[int] = None) -> LaxMatrix:
    return mat_sub(mat_mul(a, b, floor), mat_mul(b, a, floor))


def mat_derive(a: LaxMatrix, index: int) -> LaxMatrix:
    return mat_map(a, lambda entry: mo_derive(entry, index))


def mat_truncate(a: LaxMatrix, floor: int) -> LaxMatrix:
    return mat_map(a, lambda entry: mo_truncate(entry, floor))


def mat_split(a: LaxMatrix) -> tuple[LaxMatrix, LaxMatrix]:
    pairs = [[mo_split(entry) for entry in row] for row in a.entries]
    plus = LaxMatrix(a.degrees, [[pair[0] for pair in row] for row in pairs])
    minus = LaxMatrix(a.degrees, [[pair[1] for pair in row] for row in pairs])
    return plus, minus


def mat_agrees(a: LaxMatrix, b: LaxMatrix, floor: Optional[int] = None) -> bool:
    _check_pair(a, b)
    return all(
        mo_agrees(x, y, floor)
        for row_a, row_b in zip(a.entries, b.entries)
        for x, y in zip(row_a, row_b)
    )


def mat_is_zero(a: LaxMatrix, floor: Optional[int] = None) -> bool:
    return mat_agrees(a, mat_zero(a.degrees, a.nvars, a.neta), floor)


def mat_map_series(a: LaxMatrix, convert: Callable[[TruncSeries], TruncSeries], nvars: int) -> LaxMatrix:
    """Move every coefficient into another ring (e.g. after appending a flow time)."""
    return LaxMatrix(a.degrees, [[mo_map(entry, convert, nvars) for entry in row] for row in a.entries])


# -- filtration and symbols ------------------------------------------------


def mat_filtered_order(a: LaxMatrix, k: int) -> bool:
    """True iff ``ord(A_ab) ≤ k + c_a − c_b`` for every entry."""
    degrees = a.degrees
    return all(
        mo_order(a.entries[i][j]).at_most(k + degrees.shift(i, j))
        for i in range(a.dim)
        for j in range(a.dim)
    )


def mat_order(a: LaxMatrix) -> Optional[int]:
    """Smallest ``k`` with ``mat_filtered_order(a, k)``; ``None`` for the zero matrix."""
    values = [
        mo_order(a.entries[i][j]).value - a.degrees.shift(i, j)
        for i in range(a.dim)
        for j in range(a.dim)
        if mo_order(a.entries[i][j]).value is not None
    ]
    return max(values) if values else None


def mat_xi_degree(a: LaxMatrix) -> Optional[int]:
    """Largest relative ξ-exponent ``top(A_ab) − (c_a − c_b)`` over nonzero entries."""
    values: list[int] = []
    for i in range(a.dim):
        for j in range(a.dim):
            powers = [power for (power, _), series in a.entries[i][j].items() if not series.is_zero()]
            if powers:
                values.append(max(powers) - a.degrees.shift(i, j))
    return max(values) if values else None


def mat_sigma(a: LaxMatrix, n: int) -> LaxMatrix:
    """Entry ``(i, j)`` keeps the η-free ``ξ^{N + c_i − c_j}`` coefficient."""
    degrees = a.degrees
    rows = []
    for i in range(a.dim):
        row = []
        for j in range(a.dim):
            power = n + degrees.shift(i, j)
            coefficient = a.entries[i][j].slot(power)
            if coefficient.is_exact and coefficient.is_zero():
                row.append(mo_zero(a.nvars, a.neta))
            else:
                row.append(mo_xi(a.nvars, a.neta, power, coefficient))
        rows.append(row)
    return LaxMatrix(degrees, rows)


def mat_xi_conjugate(a: LaxMatrix, n: int) -> SeriesMatrix:
    """
    ``ξ^{−N}Ξ^{−1}AΞ`` at symbol level: the coefficient matrix of a symbol.

    Raises:
        NotSymbolicError: An entry has another ξ-exponent or any η-term.
    """
    degrees = a.degrees
    zero_eta = (0,) * a.neta
    result: SeriesMatrix = []
    for i in range(a.dim):
        row: list[TruncSeries] = []
        for j in range(a.dim):
            expected = (n + degrees.shift(i, j), zero_eta)
            entry = a.entries[i][j]
            for key, series in entry.items():
                if key != expected and not series.is_zero():
                    raise NotSymbolicError(
                        f"entry ({i + 1},{j + 1}) has a term at ξ^{key[0]} η^{key[1]}, expected ξ^{expected[0]}"
                    )
            row.append(entry.slot(expected[0]))
        result.append(row)
    return result


def mat_xi_unconjugate(block: Sequence[Sequence[TruncSeries]], degrees: DegreeVector, n: int, neta: int) -> LaxMatrix:
    """Inverse of :func:`mat_xi_conjugate`: place ``f_ij`` at ``ξ^{N + c_i − c_j}``."""
    nvars = block[0][0].nvars
    rows = []
    for i in range(degrees.dim):
        row = []
        for j in range(degrees.dim):
            entry = block[i][j]
            if entry.is_exact and entry.is_zero():
                row.append(mo_zero(nvars, neta))
            else:
                row.append(mo_xi(nvars, neta, n + degrees.shift(i, j), entry))
        rows.append(row)
    return LaxMatrix(degrees, rows)


def mat_entry_coefficient(a: LaxMatrix, row: int, column: int, power: int) -> TruncSeries:
    """The η-free ``ξ^power`` coefficient ``L_{row,column,power}`` (0-based indices)."""
    return a.entries[row][column].slot(power)


# -- inversion -------------------------------------------------------------


def _leading_block(a: LaxMatrix) -> tuple[int, SeriesMatrix]:
    n = mat_xi_degree(a)
    if n is None:
        raise MatrixNotInvertibleError("the zero matrix is not invertible")
    zero_eta = (0,) * a.neta
    for i in range(a.dim):
        for j in range(a.dim):
            power = n + a.degrees.shift(i, j)
            for (slot_power, beta), series in a.entries[i][j].items():
                if slot_power == power and beta != zero_eta and not series.is_zero():
                    raise MatrixNotInvertibleError(
                        f"leading ξ^{power} coefficient of entry ({i + 1},{j + 1}) carries η-terms"
                    )
    return n, mat_xi_conjugate(mat_sigma(a, n), n)


def mat_invert(a: LaxMatrix, floor: Optional[int] = None) -> LaxMatrix:
    """
    Invert through the leading ξ-block and a Neumann series.

    With ``N`` the relative ξ-degree and ``S`` the conjugated leading block,
    ``C_ij = (S^{−1})_ij ξ^{−N + c_i − c_j}`` satisfies ``C·A = 1 + E`` with
    ``E`` of relative ξ-degree ≤ −1, and ``A^{−1} = Σ (−E)^k C``.

    Args:
        a: Matrix to invert.
        floor: Lowest ξ-exponent to keep. Defaults to a depth of
            ``DEFAULT_INVERSE_DEPTH`` below the leading exponents for exact
            input, or to twice the leading shift below the input floor.

    Raises:
        MatrixNotInvertibleError: The leading block is singular; the block is
            attached to the exception.
    """
    n, block = _leading_block(a)
    spread = a.degrees.spread
    floors = [entry.floor for row in a.entries for entry in row if entry.floor is not None]
    if floor is None:
        floor = min(floors) - 2 * (n + spread) if floors else -n - spread - DEFAULT_INVERSE_DEPTH
    if floors:
        floor = max(floor, max(floors) - 2 * (n + spread))

    try:
        inverse_block = sm_invert(block, a.nvars)
    except NonUnitError as exc:
        raise MatrixNotInvertibleError(f"leading ξ^{n} block is singular", block) from exc

    seed = mat_xi_unconjugate(inverse_block, a.degrees, -n, a.neta)
    inner_floor = min(floor + n - spread, -1 - spread)
    defect = mat_sub(mat_mul(seed, a, inner_floor), mat_identity(a.degrees, a.nvars, a.neta))
    leftover = mat_xi_degree(defect)
    if leftover is not None and leftover >= 0:
        raise MatrixNotInvertibleError("leading block does not cancel against its inverse", block)
    step = mat_neg(defect)

    total = mat_truncate(seed, floor)
    term = seed
    while True:
        term = mat_mul(step, term, floor)
        if all(entry.top is None for row in term.entries for entry in row):
            break
        total = mat_add(total, term)
    logger.debug("Inverted %d×%d matrix with leading degree %s down to floor %s", a.dim, a.dim, n, floor)
    return mat_truncate(total, floor)
