from __future__ import annotations

from core.error_utils import describe_exception, get_exception_location


class WrappedError(Exception):
    pass


def _explode() -> None:
    raise ValueError("inner failure")


def _wrap() -> None:
    try:
        _explode()
    except ValueError as exc:
        raise WrappedError("outer failure") from exc


def test_location_of_raised_exception() -> None:
    try:
        _explode()
    except ValueError as exc:
        location = get_exception_location(exc)

    assert location.startswith("test_error_utils.py:")
    assert location.endswith("in _explode")


def test_location_follows_cause_chain() -> None:
    try:
        _wrap()
    except WrappedError as exc:
        inner = get_exception_location(exc)
        outer = get_exception_location(exc, follow_cause=False)

    assert inner.endswith("in _explode")
    assert outer.endswith("in _wrap")


def test_location_of_unraised_exception_is_unknown() -> None:
    assert get_exception_location(ValueError("never raised")) == "unknown"


def test_describe_exception() -> None:
    assert describe_exception(ValueError("bad input")) == "ValueError: bad input"
    assert describe_exception(KeyError()) == "KeyError"
