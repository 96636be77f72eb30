"""Deterministic seed derivation.

Every random draw in the toolkit is keyed off a 64-bit seed derived from
the run's global seed plus structural coordinates (provenance tag, record
index, replica index, sweep cell, ...). Derivation uses a splitmix-style
mixer over a chain of tokens, so regenerating any record in isolation
yields the same bytes as generating it inside a full run.

The recipe is a format contract (resume and replay determinism depend on
it): strings hash via FNV-1a 64, floats via their shortest-repr string,
and each token folds in as splitmix64(state XOR token).
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the given state."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & _MASK
    return h


def _token(value: int | str | float) -> int:
    if isinstance(value, bool):
        raise TypeError("bool is not a seed token")
    if isinstance(value, int):
        return value & _MASK
    if isinstance(value, float):
        return fnv1a64(repr(value).encode("utf-8"))
    return fnv1a64(value.encode("utf-8"))


def derive_seed(global_seed: int, *tokens: int | str | float) -> int:
    """Fold tokens into global_seed; returns a uint64."""
    state = global_seed & _MASK
    for tok in tokens:
        state = splitmix64(state ^ _token(tok))
    return state


def derive_record_seed(
    global_seed: int, provenance: str, index: int, replica: int = 0
) -> int:
    """Per-record generation seed: hash of (global seed, provenance tag, record index, replica index)."""
    return derive_seed(global_seed, provenance, index, replica)
