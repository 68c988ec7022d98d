"""Counter-based random streams.

Every sampler draws from Philox-4x64 keyed by the user seed. Work is split
into fixed-size chunks and chunk ``c`` uses the generator jumped ``c`` times
(each jump skips 2^128 draws), so results do not depend on how chunks are
scheduled.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

SEED_BITS = 64
DEFAULT_CHUNK = 1 << 16


def check_seed(seed) -> int:
    seed = int(seed)
    if not 0 <= seed < 1 << SEED_BITS:
        raise ValidationError(f"seed must be a {SEED_BITS}-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator number ``index`` for ``seed``."""
    bitgen = np.random.Philox(key=check_seed(seed))
    if index:
        bitgen = bitgen.jumped(index)
    return np.random.Generator(bitgen)


def chunks(total: int, size: int = DEFAULT_CHUNK):
    """Yield ``(index, start, stop)`` covering ``range(total)``."""
    for index, start in enumerate(range(0, total, size)):
        yield index, start, min(start + size, total)
