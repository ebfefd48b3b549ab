from __future__ import annotations

from pathlib import Path
from traceback import extract_tb


def get_exception_location(exc: BaseException, *, follow_cause: bool = True) -> str:
    """
    Return a concise source location for an exception.

    Format: ``filename:line in function``. With ``follow_cause`` the explicit
    ``raise … from`` chain is walked to the innermost raise.
    """
    innermost = exc
    if follow_cause:
        while innermost.__cause__ is not None and innermost.__cause__.__traceback__ is not None:
            innermost = innermost.__cause__

    tb = innermost.__traceback__
    if tb is None:
        return "unknown"

    frames = extract_tb(tb)
    if not frames:
        return "unknown"

    frame = frames[-1]
    return f"{Path(frame.filename).name}:{frame.lineno} in {frame.name}"


def describe_exception(exc: BaseException) -> str:
    """``TypeName: message`` for report records."""
    message = str(exc)
    return f"{type(exc).__name__}: {message}" if message else type(exc).__name__
