from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Mapping, Optional

logger = logging.getLogger(__name__)

ENV_PREFIX = "LAXALG_"


class SettingsError(Exception):
    """Raised when an environment override is malformed or out of range."""


@dataclass(frozen=True)
class Settings:
    series_cap: int = 6
    xi_floor: int = -6
    torder: int = 3
    zw_cap: int = 6
    t_cap: int = 4
    seed: int = 1
    log_level: str = "INFO"
    log_file: str = "laxalg.log"


def _read_int(environ: Mapping[str, str], key: str, default: int) -> int:
    raw = environ.get(key, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise SettingsError(f"{key} must be an integer, got {raw!r}") from exc


def load_settings(environ: Optional[Mapping[str, str]] = None) -> Settings:
    """
    Build settings from ``LAXALG_*`` variables, falling back to defaults.

    Raises:
        SettingsError: A value is not an integer, a cap is negative, the ξ
            floor is positive or the flow-time order is below 1.
    """
    env = os.environ if environ is None else environ
    defaults = Settings()
    values = {
        name: _read_int(env, f"{ENV_PREFIX}{name.upper()}", getattr(defaults, name))
        for name in ("series_cap", "xi_floor", "torder", "zw_cap", "t_cap", "seed")
    }

    for name in ("series_cap", "zw_cap", "t_cap"):
        if values[name] < 0:
            raise SettingsError(f"{ENV_PREFIX}{name.upper()} must be non-negative, got {values[name]}")
    if values["xi_floor"] > 0:
        raise SettingsError(f"{ENV_PREFIX}XI_FLOOR must be at most 0, got {values['xi_floor']}")
    if values["torder"] < 1:
        raise SettingsError(f"{ENV_PREFIX}TORDER must be at least 1, got {values['torder']}")

    settings = Settings(
        **values,
        log_level=env.get("LOG_LEVEL", defaults.log_level).upper(),
        log_file=env.get("LOG_FILE", defaults.log_file),
    )
    logger.debug("Loaded settings %s", settings)
    return settings
