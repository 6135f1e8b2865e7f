"""Counter-based random number streams.

All randomness in the package flows through Philox generators keyed by
``(master_seed, stream_index)``. Streams for distinct indices are
statistically independent and can be consumed in any order, which makes
replicate-level parallelism reproducible: replicate ``r`` of a run always
sees the same draws no matter how many workers executed it.
"""

import numpy as np

_MAX_SEED = 2**64


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= seed < _MAX_SEED:
        raise ValueError(f"seed must be in [0, 2^64), got {seed}")
    return int(seed)


def stream(master_seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for stream ``index`` under ``master_seed``."""
    key = np.array([_check_seed(master_seed), _check_seed(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
