from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

SUITE_KDV = "kdv"
SUITE_FANO = "fano"
SUITE_RULED = "ruled"
SUITE_ELIMINATION = "elimination"
SUITE_RECIPES = "recipes"
SUITE_NORMALIZE = "normalize"
SUITE_PROPERTY = "property-suite"
SUITES = (
    SUITE_KDV,
    SUITE_FANO,
    SUITE_RULED,
    SUITE_ELIMINATION,
    SUITE_RECIPES,
    SUITE_NORMALIZE,
    SUITE_PROPERTY,
)


@dataclass
class Scenario:
    name: str
    suite: str
    degrees: tuple[int, ...] = ()
    n: int = 1
    d: int = 1
    series_cap: int = 6
    xi_floor: int = -6
    torder: int = 3
    policy: str = "auto"
    choices: dict[int, tuple[Fraction, ...]] = field(default_factory=dict)
    seed: int = 1
    count: int = 1

    r: int = 2
    j: int = 3
    j2: Optional[int] = None
    hilbert: dict[int, int] = field(default_factory=dict)
    kappa: Optional[int] = None
