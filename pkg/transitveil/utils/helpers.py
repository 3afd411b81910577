import hashlib
import math
import time
from typing import Any, Optional, Union

import numpy as np

INF = math.inf


def derive_seed(*parts: Any) -> int:
    """Derive a 64-bit seed from instance identifiers.

    The digest is stable across processes and Python versions, unlike ``hash``.

    Args:
        parts: Identifiers such as domain name, start, goal, m and user seed

    Returns:
        Unsigned 64-bit integer seed
    """
    text = '\x1f'.join(repr(p) for p in parts)
    digest = hashlib.blake2b(text.encode('utf-8'), digest_size=8).digest()
    return int.from_bytes(digest, 'big')


def make_rng(*parts: Any) -> np.random.Generator:
    """Seeded generator keyed on ``derive_seed(*parts)``."""
    return np.random.default_rng(derive_seed(*parts))


class Deadline:
    """Wall-clock time budget shared by a search and its subsolvers."""

    def __init__(self, time_limit: Optional[float] = None):
        self.time_limit = time_limit
        self.started = time.monotonic()

    def elapsed(self) -> float:
        return time.monotonic() - self.started

    def expired(self) -> bool:
        return self.time_limit is not None and self.elapsed() >= self.time_limit


def parse_m(value: Union[int, float, str, None]) -> Union[int, float]:
    """Parse a prefix length; ``"inf"`` and None mean compare whole paths."""
    if value is None:
        return INF
    if isinstance(value, str):
        if value.strip().lower() in ('inf', 'infinity', '∞'):
            return INF
        value = int(value)
    if value != INF and (int(value) != value or value < 1):
        raise ValueError(f"m must be a positive integer or 'inf', got {value!r}")
    return INF if value == INF else int(value)


def format_m(m: Union[int, float]) -> str:
    return 'inf' if m == INF else str(int(m))


def format_node(label: Any) -> str:
    """Render a node label for CSV/text output: grid cells as ``x:y``."""
    if isinstance(label, tuple):
        return ':'.join(str(v) for v in label)
    return str(label)


def format_significant(value: Optional[float], digits: int = 6) -> str:
    """Format with ``digits`` significant digits; None/NaN print as empty."""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ''
    return f"{value:.{digits}g}"
