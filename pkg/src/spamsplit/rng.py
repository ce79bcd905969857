"""Counter-based random streams keyed by a master seed and task identifiers.

Every independent task (a twirl randomization, a PEC realization, a grid
point) gets its own generator derived from ``(seed, *ids)``, so results do
not depend on execution order or thread count.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream identifiers must be non-negative")
        return int(part)
    return zlib.crc32(str(part).encode())


def stream(seed: int, *ids) -> np.random.Generator:
    """Independent Philox generator for task ``ids`` under master ``seed``."""
    ss = np.random.SeedSequence([_key(seed), *(_key(i) for i in ids)])
    return np.random.Generator(np.random.Philox(ss))
