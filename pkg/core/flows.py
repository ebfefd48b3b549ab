from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from core.coeffring import (
    TruncSeries,
    s_add,
    s_embed,
    s_integrate,
    s_project,
    s_random,
    s_restrict,
    s_scale,
    s_slice,
    s_truncate_bound,
    s_zero,
)
from core.laxmat import (
    DegreeVector,
    LaxMatrix,
    ModMatrix,
    mat_add,
    mat_commutator,
    mat_derive,
    mat_entry_coefficient,
    mat_filtered_order,
    mat_identity,
    mat_invert,
    mat_is_zero,
    mat_map_series,
    mat_mul,
    mat_order,
    mat_scalar,
    mat_split,
    mat_sub,
    mat_xi_degree,
    mat_zero,
)
from core.microp import (
    FloorExhaustedError,
    MicroOp,
    OpOrder,
    mo_coefficient,
    mo_commutator,
    mo_fractional_plus,
    mo_order,
    mo_xi,
    mo_zero,
)
from core.normalize import ModRecipe, RecipeError

logger = logging.getLogger(__name__)


class FlowError(Exception):
    """Base exception raised while building or integrating Lax flows."""


class FlowFloorError(FlowError):
    """Raised when a commutator needs ξ-exponents below every available floor."""


class HierarchyError(FlowError):
    """Raised when a pair or a flow request is malformed."""


FlowGenerator = Callable[["HierarchyPair"], LaxMatrix]


@dataclass(frozen=True)
class FlowTime:
    """A formal flow time: coefficient-ring variable ``index`` kept to order ``torder``."""

    index: int
    torder: int

    def __post_init__(self) -> None:
        if self.torder < 1:
            raise HierarchyError(f"flow-time order must be at least 1, got {self.torder}")


@dataclass
class HierarchyPair:
    lf: LaxMatrix
    lg: LaxMatrix
    recipe: Optional[ModRecipe] = None

    def __post_init__(self) -> None:
        if self.lf.degrees != self.lg.degrees:
            raise HierarchyError(
                f"L_f and L_g use degree vectors {self.lf.degrees.entries} and {self.lg.degrees.entries}"
            )
        if self.lf.nvars != self.lg.nvars or self.lf.neta != self.lg.neta:
            raise HierarchyError("L_f and L_g live over different rings")
        if self.recipe is not None:
            if len(self.recipe.rows) != self.lf.dim:
                raise HierarchyError(f"recipe has {len(self.recipe.rows)} rows for a {self.lf.dim}×{self.lf.dim} pair")
            try:
                self.recipe.validate()
            except RecipeError as exc:
                raise HierarchyError(f"invalid modification recipe: {exc}") from exc

    @property
    def degrees(self) -> DegreeVector:
        return self.lf.degrees

    @property
    def nvars(self) -> int:
        return self.lf.nvars

    @property
    def neta(self) -> int:
        return self.lf.neta


@dataclass
class KdvReport:
    r: int
    j: int
    torder: int
    initial: MicroOp
    generator: MicroOp
    commutator_order: OpOrder
    evolved: MicroOp
    # u_i by ξ-exponent i, one series in t per s-order
    slices: dict[int, tuple[TruncSeries, ...]] = field(default_factory=dict)

    @property
    def stays_affine(self) -> bool:
        return self.commutator_order.at_most(self.r - 2)


# -- generators ------------------------------------------------------------


def fl_quotient(p: HierarchyPair) -> LaxMatrix:
    """``L_g⁻¹L_f`` retained down to ``−spread``, deep enough for every recipe entry."""
    spread = p.degrees.spread
    top = mat_xi_degree(p.lf)
    if top is None:
        return mat_zero(p.degrees, p.nvars, p.neta)
    try:
        inverse = mat_invert(p.lg, floor=-top - 2 * spread)
        return mat_mul(inverse, p.lf, floor=-spread)
    except FloorExhaustedError as exc:
        raise FlowFloorError(f"L_g⁻¹L_f could not be formed: {exc}") from exc


def fl_modification(quotient: LaxMatrix, recipe: ModRecipe) -> ModMatrix:
    """Instantiate ``D`` by reading ``L_{i,j,k}`` off the quotient."""
    nvars = quotient.nvars
    diagonal: list[TruncSeries] = []
    for row in recipe.flattened():
        total = s_zero(nvars)
        for coefficient, i, j, k in row:
            entry = quotient.entries[i - 1][j - 1]
            if entry.floor is not None and k < entry.floor:
                raise FlowFloorError(f"L_{{{i},{j},{k}}} lies below the retained floor {entry.floor}")
            total = s_add(total, s_scale(mat_entry_coefficient(quotient, i - 1, j - 1, k), coefficient))
        diagonal.append(total)
    return ModMatrix(tuple(diagonal))


def fl_generator(p: HierarchyPair) -> LaxMatrix:
    """
    Flow generator ``M = (L_g⁻¹L_f)₊ − D``.

    ``D`` is zero without a recipe. With a recipe, each diagonal entry is the
    signed sum of the η-free ``L_{i,j,k}`` coefficients it names.

    Raises:
        MatrixNotInvertibleError: ``L_g`` has a singular leading block.
        FlowFloorError: A named coefficient is below the computed range.
    """
    quotient = fl_quotient(p)
    plus, _ = mat_split(quotient)
    if p.recipe is None:
        return plus
    modification = fl_modification(quotient, p.recipe)
    return mat_sub(plus, modification.as_lax(p.degrees, p.neta))


def fl_minus_order(p: HierarchyPair) -> Optional[int]:
    """Filtered order of ``(L_g⁻¹L_f)₋`` on its retained range; ``None`` when it vanishes."""
    _, minus = mat_split(fl_quotient(p))
    return mat_order(minus)


def kdv_generator(r: int, j: int) -> FlowGenerator:
    """Scalar generator ``(L^{j/r})₊`` read from the evolving ``L_f``."""

    def generate(p: HierarchyPair) -> LaxMatrix:
        return mat_scalar(mo_fractional_plus(p.lf[0, 0], r, j))

    return generate


# -- integration -----------------------------------------------------------


def fl_append_time(p: HierarchyPair, torder: int) -> tuple[HierarchyPair, FlowTime]:
    """Append a fresh flow-time variable to the coefficient ring."""
    nvars = p.nvars
    s = FlowTime(nvars, torder)
    positions = list(range(nvars))

    def lift(series: TruncSeries) -> TruncSeries:
        embedded = s_embed(series, nvars + 1, positions, extra=torder)
        return s_truncate_bound(embedded, (s.index,), torder)

    lf = mat_map_series(p.lf, lift, nvars + 1)
    lg = mat_map_series(p.lg, lift, nvars + 1)
    return HierarchyPair(lf, lg, p.recipe), s


def _bound_time(a: LaxMatrix, index: int, cap: int) -> LaxMatrix:
    return mat_map_series(a, lambda series: s_truncate_bound(series, (index,), cap), a.nvars)


def _restrict_time(a: LaxMatrix, index: int) -> LaxMatrix:
    return mat_map_series(a, lambda series: s_restrict(series, (index,)), a.nvars)


def _integrate_time(a: LaxMatrix, s: FlowTime) -> LaxMatrix:
    return mat_map_series(
        a,
        lambda series: s_truncate_bound(s_integrate(series, s.index), (s.index,), s.torder),
        a.nvars,
    )


def fl_picard(
    p: HierarchyPair,
    s: FlowTime,
    generator: Optional[FlowGenerator] = None,
) -> HierarchyPair:
    """
    Integrate ``d/ds L = [M(L_f, L_g), L]`` for both members of the pair.

    Each pass sets ``L ← L(0) + ∫₀^s [M, L] ds`` with ``M`` recomputed from the
    current iterate. The iterate starts known only at ``s⁰`` and every pass
    adds one known order, so no partially converged coefficient is ever
    stored and after ``torder`` passes every coefficient up to ``s^torder``
    is final.

    Args:
        p: Initial pair. When ``s.index == p.nvars`` the time is appended to
            the ring first; otherwise the existing variable is set to zero
            in the initial data.
        s: Flow time and its truncation order.
        generator: Override for ``fl_generator``.

    Raises:
        HierarchyError: The flow-time index is outside the ring.
        FlowFloorError: A product ran out of retained ξ-exponents.
    """
    generate = generator or fl_generator
    if s.index == p.nvars:
        initial, s = fl_append_time(p, s.torder)
    elif 0 <= s.index < p.nvars:
        at_zero = HierarchyPair(_restrict_time(p.lf, s.index), _restrict_time(p.lg, s.index), p.recipe)
        initial = HierarchyPair(
            _bound_time(at_zero.lf, s.index, s.torder),
            _bound_time(at_zero.lg, s.index, s.torder),
            p.recipe,
        )
    else:
        raise HierarchyError(f"flow time s{s.index} outside ring of {p.nvars} variables")

    current = HierarchyPair(
        _bound_time(initial.lf, s.index, 0),
        _bound_time(initial.lg, s.index, 0),
        p.recipe,
    )
    for step in range(1, s.torder + 1):
        try:
            m = generate(current)
            lf = mat_add(initial.lf, _integrate_time(mat_commutator(m, current.lf), s))
            lg = mat_add(initial.lg, _integrate_time(mat_commutator(m, current.lg), s))
        except FloorExhaustedError as exc:
            raise FlowFloorError(f"Picard pass {step} in s{s.index} ran out of floor: {exc}") from exc
        current = HierarchyPair(lf, lg, p.recipe)
        logger.debug("Picard pass %d/%d along s%d done", step, s.torder, s.index)
    return current


def fl_commutes(p: HierarchyPair) -> bool:
    """``[L_f, L_g] = 0`` on every retained coefficient."""
    return mat_is_zero(mat_commutator(p.lf, p.lg))


def fl_order_preserved(initial: HierarchyPair, evolved: HierarchyPair) -> bool:
    for before, after in ((initial.lf, evolved.lf), (initial.lg, evolved.lg)):
        order = mat_order(before)
        if order is not None and not mat_filtered_order(after, order):
            return False
    return True


# -- zero curvature --------------------------------------------------------


def fl_evolve_two(
    p: HierarchyPair,
    first: FlowGenerator,
    second: FlowGenerator,
    torder: int,
) -> tuple[HierarchyPair, FlowTime, FlowTime]:
    """Evolve along ``s₁`` with ``first``, then along a fresh ``s₂`` with ``second``."""
    s1 = FlowTime(p.nvars, torder)
    along_first = fl_picard(p, s1, first)
    s2 = FlowTime(along_first.nvars, torder)
    along_both = fl_picard(along_first, s2, second)
    return along_both, s1, s2


def fl_zs_residual(
    evolved: HierarchyPair,
    first: FlowGenerator,
    second: FlowGenerator,
    s1: FlowTime,
    s2: FlowTime,
) -> LaxMatrix:
    """``∂_{s₁}M₂ − ∂_{s₂}M₁ − [M₁, M₂]`` on the two-time pair."""
    m1 = first(evolved)
    m2 = second(evolved)
    return mat_sub(
        mat_sub(mat_derive(m2, s1.index), mat_derive(m1, s2.index)),
        mat_commutator(m1, m2),
    )


def fl_zs_check(
    p: HierarchyPair,
    first: FlowGenerator,
    second: FlowGenerator,
    torder: int,
) -> bool:
    """
    Zero-curvature check for two flows started from the same pair.

    The pair is evolved jointly in two fresh times and both generators are
    recomputed on the result, so each is seen along the other's flow.
    """
    evolved, s1, s2 = fl_evolve_two(p, first, second, torder)
    residual = fl_zs_residual(evolved, first, second, s1, s2)
    passed = mat_is_zero(residual)
    logger.debug("Zero-curvature residual to order %d vanishes: %s", torder, passed)
    return passed


# -- synthetic data --------------------------------------------------------


def _polynomial(rng: random.Random, nvars: int, degree: int, *, unit: bool = False) -> TruncSeries:
    drawn = s_random(rng, nvars, degree, unit=unit, density=0.7, spread=3)
    return TruncSeries(nvars, None, drawn.terms)


def fl_random_monic(
    rng: random.Random,
    degrees: DegreeVector,
    nvars: int = 1,
    coefficient_degree: int = 2,
    neta: int = 0,
) -> LaxMatrix:
    """
    ``A = ξ·1 + B`` of filtered order 1 with polynomial coefficients.

    Below the diagonal ``B_ab`` reaches ``ξ^{1 + c_a − c_b}``, elsewhere
    ``ξ^{c_a − c_b}``, so the leading block is unit lower triangular. With
    ``neta`` generators every ``η_i ξ^p`` of order at most ``top`` gets a
    coefficient too; none of them reaches the leading block.
    """
    zero_eta = (0,) * neta
    rows: list[list[MicroOp]] = []
    for a in range(degrees.dim):
        row: list[MicroOp] = []
        for b in range(degrees.dim):
            top = degrees.shift(a, b) + (1 if a > b else 0)
            slots = {
                (power, zero_eta): _polynomial(rng, nvars, coefficient_degree)
                for power in range(top + 1)
            }
            for power in range(top):
                for i in range(neta):
                    beta = tuple(1 if k == i else 0 for k in range(neta))
                    slots[(power, beta)] = _polynomial(rng, nvars, coefficient_degree)
            if a == b:
                slots[(1, zero_eta)] = TruncSeries(nvars, None, {(0,) * nvars: 1})
            row.append(MicroOp(nvars, neta, slots))
        rows.append(row)
    return LaxMatrix(degrees, rows)


def fl_synthetic_pair(
    rng: random.Random,
    degrees: DegreeVector,
    *,
    nvars: int = 1,
    coefficient_degree: int = 2,
    swapped: bool = False,
    neta: int = 0,
) -> HierarchyPair:
    """
    Commuting pair built from one random monic ``A``.

    ``L_f = A² + A, L_g = A³``; with ``swapped`` the pair is ``L_f = A³,
    L_g = A`` whose generator ``A²`` moves the pair nontrivially.
    """
    a = fl_random_monic(rng, degrees, nvars, coefficient_degree, neta)
    square = mat_mul(a, a)
    cube = mat_mul(square, a)
    if swapped:
        return HierarchyPair(cube, a)
    return HierarchyPair(mat_add(square, a), cube)


# -- scalar reduction ------------------------------------------------------


def fl_kdv_operator(coefficients: Sequence[TruncSeries], r: int) -> MicroOp:
    """``ξ^r + Σ u_i ξ^i`` from ``coefficients = (u_0, …, u_{r−2})``."""
    if len(coefficients) != r - 1:
        raise HierarchyError(f"expected {r - 1} coefficients for order {r}, got {len(coefficients)}")
    nvars = coefficients[0].nvars
    slots = {(i, ()): u for i, u in enumerate(coefficients)}
    slots[(r, ())] = TruncSeries(nvars, None, {(0,) * nvars: 1})
    return MicroOp(nvars, 0, slots)


def fl_kdv(
    r: int,
    j: int,
    torder: int,
    cap: int,
    seed: int,
    coefficients: Optional[Sequence[TruncSeries]] = None,
) -> KdvReport:
    """
    Run the scalar hierarchy flow ``d/ds L = [(L^{j/r})₊, L]``.

    Args:
        r: Order of ``L``; at least 2.
        j: Flow index; multiples of ``r`` give the trivial flow.
        torder: Order kept in the flow time.
        cap: Degree of the random polynomial coefficients ``u_i`` in ``t0``.
        seed: Seed for the coefficients.
        coefficients: Explicit ``(u_0, …, u_{r−2})`` overriding the random draw.

    Returns:
        The report with ``[B_j, L]`` order and the ``u_i`` per s-order.
    """
    if r < 2:
        raise HierarchyError(f"the scalar hierarchy needs r ≥ 2, got {r}")
    if j < 1:
        raise HierarchyError(f"flow index must be positive, got {j}")
    if j % r == 0:
        logger.info("Flow index %d is a multiple of %d; the flow is trivial", j, r)

    if coefficients is None:
        rng = random.Random(seed)
        coefficients = [_polynomial(rng, 1, cap) for _ in range(r - 1)]
    operator = fl_kdv_operator(coefficients, r)
    nvars = operator.nvars

    generator = mo_fractional_plus(operator, r, j)
    commutator_order = mo_order(mo_commutator(generator, operator))

    identity = mat_identity(DegreeVector((0,)), nvars, 0)
    pair = HierarchyPair(mat_scalar(operator), identity)
    evolved = fl_picard(pair, FlowTime(nvars, torder), kdv_generator(r, j))
    evolved_op = evolved.lf[0, 0]

    positions = list(range(nvars))
    slices: dict[int, tuple[TruncSeries, ...]] = {}
    for i in range(r - 1):
        coefficient = mo_coefficient(evolved_op, i)
        slices[i] = tuple(
            s_project(s_slice(coefficient, nvars, k), positions) for k in range(torder + 1)
        )
    logger.debug("KdV flow r=%d j=%d: [B_j, L] has order %s", r, j, commutator_order.value)
    return KdvReport(
        r=r,
        j=j,
        torder=torder,
        initial=operator,
        generator=generator,
        commutator_order=commutator_order,
        evolved=evolved_op,
        slices=slices,
    )


def fl_constant_generator(value: int) -> FlowGenerator:
    """Central generator ``value·1``; its flow leaves every pair fixed."""

    def generate(p: HierarchyPair) -> LaxMatrix:
        identity = mat_identity(p.degrees, p.nvars, p.neta)
        return mat_map_series(identity, lambda series: s_scale(series, value), p.nvars)

    return generate


def fl_shifted_generator(base: FlowGenerator, power: int) -> FlowGenerator:
    """``base`` plus ``ξ^power`` on the diagonal; a generator that breaks zero curvature."""

    def generate(p: HierarchyPair) -> LaxMatrix:
        extra = LaxMatrix(
            p.degrees,
            [
                [mo_xi(p.nvars, p.neta, power) if a == b else mo_zero(p.nvars, p.neta) for b in range(p.degrees.dim)]
                for a in range(p.degrees.dim)
            ],
        )
        return mat_add(base(p), extra)

    return generate
