from __future__ import annotations

import pytest

from core.hilbert import (
    FANO_HILBERT,
    HilbertError,
    NotFreeError,
    chi_formula,
    degrees_from_hilbert,
    fano_degrees,
    free_hilbert,
    ruled_surface_degrees,
    ruled_surface_hilbert,
)


def test_chi_formula_values() -> None:
    assert [chi_formula(0, b) for b in range(-1, 3)] == [0, 0, 2, 6]
    assert [chi_formula(1, b) for b in range(-1, 3)] == [0, 1, 4, 9]
    assert chi_formula(2, -2) == 0


def test_single_generator_in_one_variable() -> None:
    assert free_hilbert([0], 1, range(3)) == {0: 1, 1: 2, 2: 3}
    assert degrees_from_hilbert([1, 2, 3], 1).entries == (0,)


def test_fano_counts_give_five_generators() -> None:
    degrees = fano_degrees()

    assert degrees.entries == (2, 3, 3, 3, 4)
    assert free_hilbert(degrees.entries, 2, FANO_HILBERT) == FANO_HILBERT


@pytest.mark.parametrize(("kappa", "expected"), [(0, (1, 1)), (1, (0, 1)), (2, (0, 0))])
def test_ruled_surface_rank_two(kappa: int, expected: tuple[int, ...]) -> None:
    assert ruled_surface_degrees(kappa).entries == expected


def test_ruled_surface_counts_skip_low_twists() -> None:
    assert sorted(ruled_surface_hilbert(1, range(-3, 2))) == [-1, 0, 1]


def test_counts_too_small_for_earlier_generators() -> None:
    with pytest.raises(NotFreeError):
        degrees_from_hilbert({0: 1, 1: 1}, 1)


def test_malformed_counts_are_rejected() -> None:
    with pytest.raises(HilbertError):
        degrees_from_hilbert({0: 1, 2: 3}, 1)
    with pytest.raises(HilbertError):
        degrees_from_hilbert({}, 1)
    with pytest.raises(HilbertError):
        degrees_from_hilbert([0, 0], 1)
