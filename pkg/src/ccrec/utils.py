"""ccrec.utils
===========

Utility functions shared across the package.

Provides:
- Logging setup driven by the ``CCREC_LOG`` environment variable
- Id-bound validation
- Seeded random generators
"""

import logging
import os
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np

from .exceptions import CcrecValidationError

logger = logging.getLogger(__name__)

LOG_ENV_VAR = "CCREC_LOG"
_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None, log_file: Optional[Union[str, Path]] = None) -> int:
    """
    Configure the ``ccrec`` logger hierarchy.

    Library modules never install handlers themselves; only entry points
    call this.

    Args:
        level: Level name; falls back to ``$CCREC_LOG`` and then WARNING
        log_file: Optional file receiving the same records

    Returns:
        The numeric level that was applied
    """
    name = (level or os.getenv(LOG_ENV_VAR) or "WARNING").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise CcrecValidationError(
            f"Unknown log level: {name}",
            field_errors={LOG_ENV_VAR: f"expected DEBUG, INFO, WARNING or ERROR, got {name!r}"},
        )

    root = logging.getLogger("ccrec")
    root.setLevel(numeric)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    stream = logging.StreamHandler()
    stream.setFormatter(logging.Formatter(_LOG_FORMAT))
    root.addHandler(stream)
    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setFormatter(logging.Formatter(_LOG_FORMAT))
        root.addHandler(file_handler)
    return numeric


def validate_index(value: int, bound: int, name: str) -> int:
    """
    Check that a dense id lies in ``[0, bound)``.

    Example:
        >>> validate_index(3, 10, "user")
        3
    """
    if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
        raise CcrecValidationError(
            f"{name} id must be an integer, not {type(value).__name__}",
            field_errors={name: f"Invalid type: {type(value).__name__}"},
        )
    if not 0 <= int(value) < bound:
        raise CcrecValidationError(
            f"{name} id {value} out of range [0, {bound})",
            field_errors={name: f"{value} not in [0, {bound})"},
        )
    return int(value)


def validate_indices(values: Iterable[int], bound: int, name: str) -> np.ndarray:
    """Array version of :func:`validate_index`."""
    array = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.int64)
    if array.size and (array.min() < 0 or array.max() >= bound):
        bad = array[(array < 0) | (array >= bound)]
        raise CcrecValidationError(
            f"{bad.size} {name} id(s) out of range [0, {bound})",
            field_errors={name: f"first offending id: {int(bad[0])}"},
        )
    return array


def make_rng(seed: Optional[int], *stream: int) -> np.random.Generator:
    """
    Seeded generator, optionally split into an independent stream.

    ``make_rng(seed, 1)`` and ``make_rng(seed, 2)`` never share state, so
    different consumers of one experiment seed stay reproducible on their own.
    """
    if seed is None:
        return np.random.default_rng()
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, stream)]))
