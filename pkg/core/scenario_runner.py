from __future__ import annotations

import logging
import random
import time
from fractions import Fraction
from typing import Any, Callable, Optional

from config.settings import Settings
from core.coeffring import (
    TruncSeries,
    s_add,
    s_derive,
    s_mul,
    s_random,
    s_scale,
    s_agrees,
)
from core.display_formatter import DisplayFormatter
from core.error_utils import describe_exception, get_exception_location
from core.flows import (
    FlowTime,
    HierarchyPair,
    fl_commutes,
    fl_kdv,
    fl_minus_order,
    fl_order_preserved,
    fl_picard,
    fl_random_monic,
    fl_synthetic_pair,
    fl_zs_check,
    kdv_generator,
)
from core.hilbert import (
    FANO_HILBERT,
    FANO_N,
    chi_formula,
    degrees_from_hilbert,
    free_hilbert,
    ruled_surface_degrees,
)
from core.laxmat import DegreeVector, mat_filtered_order, mat_identity, mat_mul, mat_scalar
from core.localmodel import (
    LocalChart,
    lm_evaluate,
    lm_evaluation_shape_ok,
    lm_gauss_normalize,
    lm_is_good,
    lm_random_matrix,
    lm_tilde,
    lm_verify_elimination,
)
from core.microp import (
    MicroOp,
    mo_add,
    mo_agrees,
    mo_derive,
    mo_eta,
    mo_identity,
    mo_invert,
    mo_is_zero,
    mo_mul,
    mo_order,
    mo_power,
    mo_root,
    mo_scalar,
    mo_split,
    mo_xi,
)
from core.normalize import (
    CHAIN_DIFFERENCE_THEN_PREVIOUS,
    CHAIN_PREVIOUS_THEN_DIFFERENCE,
    POLICY_AUTO,
    POLICY_EXPLICIT,
    ChoiceTree,
    Combo,
    WorkedRecipe,
    Unit,
    nz_emit_recipe,
    nz_generic_psi,
    nz_worked_recipes,
    nz_fix_diagonal,
)
from models.report_model import Report
from models.scenario_model import (
    SUITE_ELIMINATION,
    SUITE_FANO,
    SUITE_KDV,
    SUITE_NORMALIZE,
    SUITE_PROPERTY,
    SUITE_RECIPES,
    SUITE_RULED,
    Scenario,
)

logger = logging.getLogger(__name__)

CheckOutcome = tuple[bool, dict[str, Any]]

FANO_DEGREES = (2, 3, 3, 3, 4)
RULED_SURFACE_ORDERS = {0: (1, 1), 1: (0, 1), 2: (0, 0)}
CHI_RANGE = range(-3, 4)

fmt = DisplayFormatter


# -- single checks ---------------------------------------------------------


def check_recipe(case: WorkedRecipe, seed: int, cap: int = 4) -> CheckOutcome:
    """Run the procedure on generic data and compare tree and recipe with the documented ones."""
    degrees = DegreeVector(case.degrees)
    psi = nz_generic_psi(random.Random(seed), degrees, cap=cap)
    tree, state = nz_fix_diagonal(psi, degrees, case.policy, case.choices)
    recipe = nz_emit_recipe(tree, degrees)
    flattened = recipe.flattened()
    passed = tree == case.tree and flattened == case.expected
    return passed, {
        "degrees": fmt.degrees(degrees),
        "policy": case.policy,
        "choices": fmt.choice_tree(tree),
        "recipe": fmt.recipe(flattened),
        "expected": fmt.recipe(case.expected),
        "adjoined": sorted(q + 1 for q in state.adjoined),
    }


def check_chain(chain: dict[int, tuple[int, ...]], seed: int, cap: int = 4) -> CheckOutcome:
    """An explicit chain on all-distinct degrees is accepted row by row."""
    size = max(chain) if chain else 1
    degrees = DegreeVector(tuple(range(size)))
    choices = {row: tuple(Fraction(c) for c in values) for row, values in chain.items()}
    psi = nz_generic_psi(random.Random(seed), degrees, cap=cap)
    tree, _ = nz_fix_diagonal(psi, degrees, POLICY_EXPLICIT, choices)
    expected = ChoiceTree((Unit(), *(Combo(choices[row]) for row in range(2, size + 1))))
    recipe = nz_emit_recipe(tree, degrees)
    return tree == expected, {"choices": fmt.choice_tree(tree), "recipe": fmt.recipe(recipe)}


def check_singleton(degrees: DegreeVector, seed: int, cap: int = 4) -> CheckOutcome:
    """Generic data ends the procedure with S = {Q1}."""
    psi = nz_generic_psi(random.Random(seed), degrees, cap=cap)
    _, state = nz_fix_diagonal(psi, degrees, POLICY_AUTO)
    adjoined = sorted(q + 1 for q in state.adjoined)
    return adjoined == [1], {"degrees": fmt.degrees(degrees), "adjoined": adjoined}


def check_elimination(chart: LocalChart, rowdeg: tuple[int, ...], seed: int) -> CheckOutcome:
    rng = random.Random(seed)
    chi = lm_random_matrix(rng, chart, rowdeg)
    elimination = lm_gauss_normalize(chi)
    values = lm_evaluate(lm_tilde(elimination.result))
    good = lm_is_good(elimination.result)
    shape = lm_evaluation_shape_ok(values, rowdeg)
    order_zero = mat_filtered_order(elimination.transform, 0)
    verified = lm_verify_elimination(chi, elimination)
    return good and shape and order_zero and verified, {
        "rowdeg": fmt.degrees(rowdeg),
        "good": good,
        "shape": shape,
        "order_zero": order_zero,
        "verified": verified,
        "permutation": list(elimination.permutation),
    }


def _kdv_rhs(u: TruncSeries, j: int) -> Optional[TruncSeries]:
    """Known right-hand sides of ``d/ds u`` for ``L = ξ² + u``."""
    if j == 1:
        return s_derive(u, 0)
    if j == 3:
        u1 = s_derive(u, 0)
        u3 = s_derive(s_derive(u1, 0), 0)
        return s_add(s_scale(u3, Fraction(1, 4)), s_scale(s_mul(u, u1), Fraction(3, 2)))
    return None


# -- randomized property cases ---------------------------------------------


def _random_coefficient(rng: random.Random, nvars: int, cap: int, unit: bool = False) -> TruncSeries:
    return s_random(rng, nvars, cap, unit=unit, density=0.5, spread=3)


def _random_op(rng: random.Random, cap: int, *, lowest: int = 0, floor: Optional[int] = None) -> MicroOp:
    """Operator in two variables and one η with slots ``ξ^lowest … ξ^1`` and ``η·ξ^0``."""
    slots = {(power, (0,)): _random_coefficient(rng, 2, cap) for power in range(lowest, 2)}
    slots[(0, (1,))] = _random_coefficient(rng, 2, cap)
    return MicroOp(2, 1, slots, floor)


def _unit_leading_op(rng: random.Random, cap: int) -> MicroOp:
    return MicroOp(
        2,
        1,
        {
            (1, (0,)): _random_coefficient(rng, 2, cap, unit=True),
            (0, (0,)): _random_coefficient(rng, 2, cap),
            (0, (1,)): _random_coefficient(rng, 2, cap),
        },
    )


def case_associativity(rng: random.Random, scenario: Scenario) -> bool:
    a, b, c = (_random_op(rng, scenario.series_cap, lowest=-1, floor=-2) for _ in range(3))
    return mo_agrees(mo_mul(mo_mul(a, b), c), mo_mul(a, mo_mul(b, c)))


def case_commutation(rng: random.Random, scenario: Scenario) -> bool:
    f = _random_coefficient(rng, 2, scenario.series_cap)
    xi_rule = MicroOp(2, 1, {(1, (0,)): f, (0, (0,)): s_derive(f, 0)})
    eta_rule = MicroOp(2, 1, {(0, (1,)): f, (0, (0,)): s_derive(f, 1)})
    return (
        mo_agrees(mo_mul(mo_xi(2, 1), mo_scalar(f, 1)), xi_rule)
        and mo_agrees(mo_mul(mo_eta(2, 1, 1), mo_scalar(f, 1)), eta_rule)
    )


def case_order_bounds(rng: random.Random, scenario: Scenario) -> bool:
    a = _random_op(rng, scenario.series_cap)
    b = _random_op(rng, scenario.series_cap)
    scalar_ok = mo_order(mo_mul(a, b)) <= mo_order(a) + mo_order(b)
    size = 1 + rng.randrange(3)
    degrees = DegreeVector(tuple(sorted(rng.randrange(3) for _ in range(size))))
    first = fl_random_monic(rng, degrees, coefficient_degree=2)
    second = fl_random_monic(rng, degrees, coefficient_degree=2)
    matrix_ok = mat_filtered_order(first, 1) and mat_filtered_order(mat_mul(first, second), 2)
    return scalar_ok and matrix_ok


def case_split(rng: random.Random, scenario: Scenario) -> bool:
    a = _random_op(rng, scenario.series_cap, lowest=-2, floor=-3)
    plus, minus = mo_split(a)
    first_plus, _ = mo_split(_random_op(rng, scenario.series_cap))
    second_plus, _ = mo_split(_random_op(rng, scenario.series_cap))
    _, product_minus = mo_split(mo_mul(first_plus, second_plus))
    return mo_agrees(mo_add(plus, minus), a) and mo_is_zero(product_minus) and plus.is_differential()


def case_round_trips(rng: random.Random, scenario: Scenario) -> bool:
    floor = scenario.xi_floor
    a = _unit_leading_op(rng, scenario.series_cap)
    inverse = mo_invert(a, floor=floor)
    inverse_ok = mo_agrees(mo_mul(a, inverse), mo_identity(2, 1)) and mo_agrees(mo_mul(inverse, a), mo_identity(2, 1))

    u0 = _random_coefficient(rng, 2, scenario.series_cap)
    u1 = _random_coefficient(rng, 2, scenario.series_cap)
    operator = MicroOp(2, 0, {(2, ()): TruncSeries(2, None, {(0, 0): 1}), (1, ()): u1, (0, ()): u0})
    root = mo_root(operator, 2, floor=floor)
    root_ok = mo_agrees(mo_power(root, 2, floor=floor + 1), operator)
    return inverse_ok and root_ok


def case_leibniz(rng: random.Random, scenario: Scenario) -> bool:
    a = _random_op(rng, scenario.series_cap, lowest=-1, floor=-2)
    b = _random_op(rng, scenario.series_cap)
    index = rng.randrange(2)
    left = mo_derive(mo_mul(a, b), index)
    right = mo_add(mo_mul(mo_derive(a, index), b), mo_mul(a, mo_derive(b, index)))
    return mo_agrees(left, right)


def case_signed_expansion(rng: random.Random, scenario: Scenario) -> bool:
    """``(aξ + η)⁻¹ = Σ (−1)^k a^{−k−1} η^k ξ^{−k−1}`` for a constant ``a``."""
    a = Fraction(rng.choice([-3, -2, -1, 1, 2, 3]), rng.randint(1, 3))
    operator = mo_add(mo_xi(2, 1, 1, TruncSeries(2, None, {(0, 0): a})), mo_eta(2, 1, 1))
    floor = scenario.xi_floor
    inverse = mo_invert(operator, floor=floor)
    expected = MicroOp(
        2,
        1,
        {(-k - 1, (k,)): TruncSeries(2, None, {(0, 0): (-1) ** k * a ** (-k - 1)}) for k in range(0, -floor)},
        floor,
    )
    product = mo_mul(operator, inverse)
    return mo_agrees(inverse, expected) and mo_agrees(product, mo_identity(2, 1))


def case_commuting_flow(rng: random.Random, scenario: Scenario) -> bool:
    size = 1 + rng.randrange(3)
    degrees = DegreeVector(tuple(sorted(rng.randrange(3) for _ in range(size))))
    swapped = rng.random() < 0.5
    pair = fl_synthetic_pair(rng, degrees, coefficient_degree=2, swapped=swapped)
    minus_order = fl_minus_order(pair)
    evolved = fl_picard(pair, FlowTime(pair.nvars, scenario.torder))
    return (
        fl_commutes(evolved)
        and fl_order_preserved(pair, evolved)
        and (minus_order is None or minus_order <= 0)
    )


def case_singleton(rng: random.Random, scenario: Scenario) -> bool:
    size = 2 + rng.randrange(3)
    degrees = DegreeVector(tuple(sorted(rng.sample(range(6), size))))
    passed, _ = check_singleton(degrees, rng.randrange(1 << 30), cap=min(scenario.series_cap, 4))
    return passed


PropertyCase = Callable[[random.Random, Scenario], bool]

PROPERTY_CASES: dict[str, PropertyCase] = {
    "associativity": case_associativity,
    "commutation": case_commutation,
    "order-bounds": case_order_bounds,
    "split": case_split,
    "round-trips": case_round_trips,
    "leibniz": case_leibniz,
    "signed-expansion": case_signed_expansion,
    "commuting-flow": case_commuting_flow,
    "singleton": case_singleton,
}


# -- the runner ------------------------------------------------------------


class ScenarioRunner:
    """
    Executes the suite named by a scenario and collects a report.

    Every check runs in isolation: an exception becomes a failing verdict
    with its message and source location, and the suite carries on.
    """

    def __init__(self, settings: Optional[Settings] = None) -> None:
        self._settings = settings or Settings()
        self._suites: dict[str, Callable[[Scenario, Report], None]] = {
            SUITE_KDV: self._run_kdv,
            SUITE_FANO: self._run_fano,
            SUITE_RULED: self._run_ruled,
            SUITE_ELIMINATION: self._run_elimination,
            SUITE_RECIPES: self._run_recipes,
            SUITE_NORMALIZE: self._run_normalize,
            SUITE_PROPERTY: self._run_properties,
        }

    def run(self, scenario: Scenario) -> Report:
        report = Report(scenario.name)
        report.add_scenario(
            suite=scenario.suite,
            degrees=fmt.degrees(scenario.degrees),
            n=scenario.n,
            d=scenario.d,
            series_cap=scenario.series_cap,
            xi_floor=scenario.xi_floor,
            torder=scenario.torder,
            policy=scenario.policy,
            seed=scenario.seed,
            count=scenario.count,
        )
        suite = self._suites.get(scenario.suite)
        if suite is None:
            report.add_check("suite", False, error=f"unknown suite {scenario.suite!r}")
            return report

        started = time.perf_counter()
        suite(scenario, report)
        elapsed = time.perf_counter() - started
        logger.info(
            "Scenario '%s' finished in %.2fs: %d/%d checks passed",
            scenario.name,
            elapsed,
            len(report.checks) - len(report.failures),
            len(report.checks),
        )
        return report

    def _check(self, report: Report, name: str, check: Callable[[], CheckOutcome]) -> bool:
        try:
            passed, details = check()
        except Exception as exc:
            location = get_exception_location(exc)
            logger.exception("Check '%s' raised at %s", name, location)
            report.add_check(name, False, error=describe_exception(exc), location=location)
            return False
        if not passed:
            logger.warning("Check '%s' failed: %s", name, details)
        report.add_check(name, passed, **details)
        return passed

    # -- suites ------------------------------------------------------------

    def _run_kdv(self, scenario: Scenario, report: Report) -> None:
        r, j = scenario.r, scenario.j
        state: dict[str, Any] = {}

        def flow() -> CheckOutcome:
            result = fl_kdv(r, j, scenario.torder, scenario.series_cap, scenario.seed)
            state["result"] = result
            for i, slices in sorted(result.slices.items()):
                report.add_value(
                    f"u{i}",
                    orders={str(k): fmt.series(series) for k, series in enumerate(slices)},
                )
            return result.stays_affine, {
                "generator": fmt.operator(result.generator),
                "commutator_order": result.commutator_order.value,
            }

        if not self._check(report, "kdv.flow", flow):
            return
        result = state["result"]

        if r == 2:
            u, u_s = result.slices[0][0], result.slices[0][1]
            expected = _kdv_rhs(u, j)
            if expected is not None:
                self._check(
                    report,
                    "kdv.rhs",
                    lambda: (s_agrees(u_s, expected), {"u_s": fmt.series(u_s), "expected": fmt.series(expected)}),
                )
        if j % r == 0:
            self._check(
                report,
                "kdv.trivial",
                lambda: (
                    all(series.is_zero() for slices in result.slices.values() for series in slices[1:]),
                    {},
                ),
            )
        if scenario.j2 is not None:
            j2 = scenario.j2

            def zero_curvature() -> CheckOutcome:
                pair = HierarchyPair(mat_scalar(result.initial), mat_identity(DegreeVector((0,)), result.initial.nvars, 0))
                passed = fl_zs_check(pair, kdv_generator(r, j), kdv_generator(r, j2), scenario.torder)
                return passed, {"flows": [j, j2]}

            self._check(report, "kdv.zero-curvature", zero_curvature)

    def _run_fano(self, scenario: Scenario, report: Report) -> None:
        counts = scenario.hilbert or FANO_HILBERT
        n = scenario.n if scenario.hilbert else FANO_N
        expected = scenario.degrees or FANO_DEGREES

        def degrees() -> CheckOutcome:
            found = degrees_from_hilbert(counts, n)
            reproduced = free_hilbert(found.entries, n, counts.keys()) == dict(counts)
            return found.entries == tuple(expected) and reproduced, {
                "degrees": fmt.degrees(found),
                "d": found.dim,
                "reproduces_counts": reproduced,
            }

        self._check(report, "fano.degrees", degrees)
        for case in nz_worked_recipes():
            if case.degrees == FANO_DEGREES:
                self._check(report, f"fano.recipe.{case.name}", lambda case=case: check_recipe(case, scenario.seed))
        self._check(
            report,
            "fano.singleton",
            lambda: check_singleton(DegreeVector(FANO_DEGREES), scenario.seed, min(scenario.series_cap, 4)),
        )

    def _run_ruled(self, scenario: Scenario, report: Report) -> None:
        kappas = [scenario.kappa] if scenario.kappa is not None else sorted(RULED_SURFACE_ORDERS)
        for kappa in kappas:
            report.add_value(f"chi.kappa{kappa}", values={str(b): chi_formula(kappa, b) for b in CHI_RANGE})

            def orders(kappa: int = kappa) -> CheckOutcome:
                found = ruled_surface_degrees(kappa)
                expected = RULED_SURFACE_ORDERS.get(kappa)
                passed = expected is None or found.entries == expected
                return passed, {"degrees": fmt.degrees(found)}

            self._check(report, f"ruled.orders.kappa{kappa}", orders)
        for case in nz_worked_recipes():
            if case.name == "ruled-surface":
                self._check(report, "ruled.recipe", lambda case=case: check_recipe(case, scenario.seed))

    def _run_elimination(self, scenario: Scenario, report: Report) -> None:
        chart = LocalChart(scenario.n, self._settings.zw_cap, self._settings.t_cap)
        for offset in range(scenario.count):
            seed = scenario.seed + offset
            if scenario.degrees:
                rowdeg = scenario.degrees
            else:
                rng = random.Random(seed)
                rowdeg = tuple(sorted(rng.randrange(3) for _ in range(scenario.d)))
            self._check(
                report,
                f"elimination.seed{seed}",
                lambda rowdeg=rowdeg, seed=seed: check_elimination(chart, rowdeg, seed),
            )

    def _run_recipes(self, scenario: Scenario, report: Report) -> None:
        for case in nz_worked_recipes():
            self._check(report, f"recipe.{case.name}", lambda case=case: check_recipe(case, scenario.seed))
        for name, chain in (
            ("previous-then-difference", CHAIN_PREVIOUS_THEN_DIFFERENCE),
            ("difference-then-previous", CHAIN_DIFFERENCE_THEN_PREVIOUS),
        ):
            self._check(report, f"chain.{name}", lambda chain=chain: check_chain(chain, scenario.seed))

    def _run_normalize(self, scenario: Scenario, report: Report) -> None:
        degrees = DegreeVector(scenario.degrees or tuple(range(scenario.d)))

        def normalize() -> CheckOutcome:
            psi = nz_generic_psi(random.Random(scenario.seed), degrees, cap=min(scenario.series_cap, 4))
            tree, state = nz_fix_diagonal(psi, degrees, scenario.policy, scenario.choices)
            recipe = nz_emit_recipe(tree, degrees)
            adjoined = sorted(q + 1 for q in state.adjoined)
            distinct = len(set(degrees.entries)) == degrees.dim
            return (not distinct or adjoined == [1]), {
                "choices": fmt.choice_tree(tree),
                "recipe": fmt.recipe(recipe),
                "adjoined": adjoined,
            }

        self._check(report, "normalize", normalize)

    def _run_properties(self, scenario: Scenario, report: Report) -> None:
        for name, case in PROPERTY_CASES.items():

            def family(name: str = name, case: PropertyCase = case) -> CheckOutcome:
                failed: list[int] = []
                for offset in range(scenario.count):
                    seed = scenario.seed + offset
                    try:
                        ok = case(random.Random(seed), scenario)
                    except Exception:
                        logger.exception("Property case '%s' raised for seed %d", name, seed)
                        ok = False
                    if not ok:
                        failed.append(seed)
                return not failed, {"cases": scenario.count, "failed_seeds": failed}

            self._check(report, f"property.{name}", family)


def run_scenario(scenario: Scenario, settings: Optional[Settings] = None) -> Report:
    return ScenarioRunner(settings).run(scenario)
