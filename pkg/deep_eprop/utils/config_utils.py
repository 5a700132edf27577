'''
@description:
- Environment settings. A ``.env`` file in the working directory is loaded first,
  so ``DEEP_EPROP_THREADS=4`` there behaves like exporting it.
'''

import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

THREADS_VARIABLE = "DEEP_EPROP_THREADS"
LOG_LEVEL_VARIABLE = "DEEP_EPROP_LOG_LEVEL"
LOG_LEVELS_VARIABLE = "DEEP_EPROP_LOG_LEVELS"
LEVEL_NAMES = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


@dataclass(frozen=True)
class Settings:
    '''
    **Attributes:**
    - ``threads (int)``: Upper bound on worker processes for the verify battery and parallel bench points.
    - ``log_level (str)``: Root logging level.
    - ``log_levels (dict)``: Logger name -> level, applied after the engine defaults.
    '''

    threads: int = 1
    log_level: str = "INFO"
    log_levels: dict = field(default_factory=dict)


def _level(raw: str, variable: str) -> str:
    level = raw.strip().upper()
    if level not in LEVEL_NAMES:
        raise ValueError(f"{variable} must be one of {', '.join(LEVEL_NAMES)}, got {raw!r}")
    return level


def parse_log_levels(raw: str) -> dict:
    '''
    Parse ``name=LEVEL`` pairs separated by commas, e.g.
    ``deep_eprop.oracles=DEBUG,deep_eprop.online=INFO``.
    '''

    levels = {}
    for item in filter(None, (part.strip() for part in raw.split(","))):
        name, sep, level = item.partition("=")
        if not sep or not name.strip():
            raise ValueError(f"{LOG_LEVELS_VARIABLE} entries look like logger=LEVEL, got {item!r}")
        levels[name.strip()] = _level(level, LOG_LEVELS_VARIABLE)
    return levels


def load_settings() -> Settings:
    '''
    **Purpose:**
    - Read the environment (after ``load_dotenv``) into a ``Settings``.

    **Raises:**
    - ``ValueError``: If ``DEEP_EPROP_THREADS`` is not an integer >= 1 or a log level
      is not a standard level name.
    '''

    load_dotenv()
    raw = os.getenv(THREADS_VARIABLE, "1").strip()
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_VARIABLE} must be an integer, got {raw!r}")
    if threads < 1:
        raise ValueError(f"{THREADS_VARIABLE} must be >= 1, got {threads}")
    return Settings(
        threads=threads,
        log_level=_level(os.getenv(LOG_LEVEL_VARIABLE, "INFO"), LOG_LEVEL_VARIABLE),
        log_levels=parse_log_levels(os.getenv(LOG_LEVELS_VARIABLE, "")),
    )
