from __future__ import annotations

import logging
from math import comb
from typing import Iterable, Mapping, Sequence, Union

from core.laxmat import DegreeVector

logger = logging.getLogger(__name__)

# Section counts of the Fano example by twist, over Sym(W) in two variables.
FANO_HILBERT = {2: 1, 3: 6, 4: 16}
FANO_N = 2
RULED_SURFACE_N = 2

HilbertCounts = Union[Mapping[int, int], Sequence[int]]


class HilbertError(Exception):
    """Base exception raised for malformed section counts."""


class NotFreeError(HilbertError):
    """Raised when the counts cannot come from a free Sym(W)-module."""


def chi_formula(kappa: int, b: int) -> int:
    """Euler characteristic ``κ + (κ+1)b + b²`` of the ruled-surface twist ``b``."""
    return kappa + (kappa + 1) * b + b * b


def _free_count(degree: int, n: int, twist: int) -> int:
    if twist < degree:
        return 0
    return comb(twist - degree + n, n)


def free_hilbert(degrees: Iterable[int], n: int, twists: Iterable[int]) -> dict[int, int]:
    """
    Hilbert function of the free module with generators in ``degrees``.

    A generator of degree ``c`` contributes ``binom(k − c + n, n)`` sections
    at twist ``k ≥ c``.
    """
    generators = list(degrees)
    return {k: sum(_free_count(c, n, k) for c in generators) for k in twists}


def _as_mapping(counts: HilbertCounts) -> dict[int, int]:
    if isinstance(counts, Mapping):
        return {int(k): int(v) for k, v in counts.items()}
    return {k: int(v) for k, v in enumerate(counts)}


def degrees_from_hilbert(counts: HilbertCounts, n: int) -> DegreeVector:
    """
    Generator degrees recovered by peeling off free Hilbert functions.

    Args:
        counts: Section counts by twist, either a mapping or a list indexed
            from twist 0. Twists below the first listed one count as zero;
            listed twists must be consecutive.
        n: Number of variables of ``Sym(W)``.

    Raises:
        HilbertError: Gaps in the twists, or no generator at all.
        NotFreeError: Some twist has fewer sections than the generators found
            below it already produce.
    """
    if n < 0:
        raise HilbertError(f"variable count must be non-negative, got {n}")
    table = _as_mapping(counts)
    twists = sorted(table)
    if not twists:
        raise HilbertError("no section counts given")
    if twists != list(range(twists[0], twists[-1] + 1)):
        raise HilbertError(f"twists {twists} are not consecutive")

    found: list[int] = []
    for k in twists:
        produced = sum(_free_count(c, n, k) for c in found)
        new = table[k] - produced
        if new < 0:
            raise NotFreeError(f"twist {k} has {table[k]} sections but earlier generators give {produced}")
        found.extend([k] * new)
        if new:
            logger.debug("Twist %d adds %d generator(s)", k, new)
    if not found:
        raise HilbertError("counts vanish everywhere; no generator found")
    return DegreeVector(tuple(found))


def ruled_surface_hilbert(kappa: int, twists: Iterable[int]) -> dict[int, int]:
    """Section counts ``χ(b)`` for ``b ≥ −1``; lower twists are not listed."""
    return {b: chi_formula(kappa, b) for b in twists if b >= -1}


def ruled_surface_degrees(kappa: int, top_twist: int = 4) -> DegreeVector:
    return degrees_from_hilbert(ruled_surface_hilbert(kappa, range(-1, top_twist + 1)), RULED_SURFACE_N)


def fano_degrees() -> DegreeVector:
    return degrees_from_hilbert(FANO_HILBERT, FANO_N)
