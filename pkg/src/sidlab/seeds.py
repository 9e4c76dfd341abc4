"""Deterministic derivation of per-task seeds from one master seed.

All randomness in the package flows from explicit 64-bit seeds; derived
streams (per solver start, per Monte Carlo run) use the splitmix64
finalizer of master + (i+1)*golden, so results are independent of worker
count and scheduling.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(master: int, i: int) -> int:
    """splitmix64-style mix of a master seed and a task index."""
    z = (master + (i + 1) * _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK
