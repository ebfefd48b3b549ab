from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Optional, Sequence

from core.coeffring import Exponent, TruncSeries
from core.laxmat import DegreeVector, LaxMatrix
from core.microp import MicroOp
from core.normalize import ChoiceTree, Combo, ModRecipe


class DisplayFormatter:
    """
    Canonical text for the algebra objects that go into reports.

    Equal inputs always render to the same string; rationals are ``p/q``.
    """

    @staticmethod
    def rational(value: Fraction | int) -> str:
        value = Fraction(value)
        if value.denominator == 1:
            return str(value.numerator)
        return f"{value.numerator}/{value.denominator}"

    @staticmethod
    def monomial(exponent: Exponent, names: Optional[Sequence[str]] = None) -> str:
        parts = []
        for index, power in enumerate(exponent):
            if power == 0:
                continue
            name = names[index] if names else f"t{index}"
            parts.append(name if power == 1 else f"{name}^{power}")
        return "*".join(parts)

    @staticmethod
    def _signed_terms(terms: Iterable[tuple[Fraction, str]]) -> str:
        text = ""
        for coefficient, label in terms:
            magnitude = abs(coefficient)
            if not label:
                body = DisplayFormatter.rational(magnitude)
            elif magnitude == 1:
                body = label
            else:
                body = f"{DisplayFormatter.rational(magnitude)}*{label}"
            if not text:
                text = f"-{body}" if coefficient < 0 else body
            else:
                text += f" - {body}" if coefficient < 0 else f" + {body}"
        return text or "0"

    @staticmethod
    def series(series: TruncSeries, names: Optional[Sequence[str]] = None) -> str:
        """
        Terms by ascending total degree, then descending lexicographic exponent.

        A capped series ends with ``+ O(deg N)``; group bounds follow in braces.
        """
        ordered = sorted(series.items(), key=lambda item: (sum(item[0]), tuple(-x for x in item[0])))
        text = DisplayFormatter._signed_terms(
            (value, DisplayFormatter.monomial(exponent, names)) for exponent, value in ordered
        )
        if series.cap is not None:
            text += f" + O(deg {series.cap + 1})"
        if series.bounds:
            groups = ", ".join(
                f"{'+'.join(names[i] if names else f't{i}' for i in bound.variables)}<={bound.cap}"
                for bound in series.bounds
            )
            text += f" {{{groups}}}"
        return text

    @staticmethod
    def operator(op: MicroOp) -> str:
        """Slots by descending ξ-power, then descending η-index; ``(f)*eta1*xi^k``."""
        parts: list[str] = []
        for (power, beta), series in sorted(op.items(), key=lambda item: (-item[0][0], tuple(-x for x in item[0][1]))):
            if series.is_exact and series.is_zero():
                continue
            factors = [f"({DisplayFormatter.series(series)})"]
            for index, height in enumerate(beta, start=1):
                if height:
                    factors.append(f"eta{index}" if height == 1 else f"eta{index}^{height}")
            if power:
                factors.append("xi" if power == 1 else f"xi^{power}")
            parts.append("*".join(factors))
        text = " + ".join(parts) or "0"
        if op.floor is not None:
            text += f" + O(xi^{op.floor - 1})"
        return text

    @staticmethod
    def matrix(a: LaxMatrix) -> list[str]:
        return [
            f"[{i + 1},{j + 1}] {DisplayFormatter.operator(a.entries[i][j])}"
            for i in range(a.dim)
            for j in range(a.dim)
        ]

    @staticmethod
    def degrees(degrees: DegreeVector | Sequence[int]) -> str:
        entries = degrees.entries if isinstance(degrees, DegreeVector) else tuple(degrees)
        return "(" + ",".join(str(c) for c in entries) + ")"

    @staticmethod
    def recipe_row(terms: Sequence[tuple[Fraction, int, int, int]]) -> str:
        return DisplayFormatter._signed_terms(
            (coefficient, f"L[{i},{j},{k}]") for coefficient, i, j, k in terms
        )

    @staticmethod
    def recipe(recipe: ModRecipe | Sequence[Sequence[tuple[Fraction, int, int, int]]]) -> str:
        """``D11 = 0; D22 = L[1,2,-1]; …`` from the flattened diagonal."""
        rows = recipe.flattened() if isinstance(recipe, ModRecipe) else recipe
        return "; ".join(
            f"D{p}{p} = {DisplayFormatter.recipe_row(terms)}" for p, terms in enumerate(rows, start=1)
        )

    @staticmethod
    def choice_tree(tree: ChoiceTree) -> str:
        parts = []
        for row in tree.rows:
            if isinstance(row, Combo):
                parts.append("c(" + ",".join(DisplayFormatter.rational(c) for c in row.coefficients) + ")")
            else:
                parts.append("unit")
        return " ".join(parts)
