"""Deterministic seed derivation for independent trials.

Per-trial seeds are produced by mixing the master seed with the trial
index through splitmix64, so trials are decorrelated and reproducible
regardless of evaluation order or parallelism.
"""

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_seed(master: int, index: int) -> int:
    """Mix a master seed and a trial index into an independent 64-bit seed."""
    z = (master ^ (index * _GOLDEN)) & _MASK
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)
