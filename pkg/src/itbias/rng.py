"""Counter-based pseudo-random numbers.

Every draw in this package is a pure function of ``(seed, subject, draw)``;
nothing carries hidden stream state, so subjects can be simulated in any
order (or in parallel) and still produce identical output.  The mixing
function is the splitmix64 finalizer applied to a chain of xor-folded keys:

    h0 = finalize(seed)
    h1 = finalize(h0 ^ (subject * K1))
    h2 = finalize(h1 ^ (draw * K2))
    uniform = (h2 >> 11) / 2**53

with K1 = 0x9E3779B97F4A7C15 and K2 = 0xC2B2AE3D27D4EB4F.  ``mix64`` chains
the same finalizer over arbitrary integer keys and is used to derive
replicate and oracle seeds from a master seed.
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLD = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB
_K1 = 0x9E3779B97F4A7C15
_K2 = 0xC2B2AE3D27D4EB4F


def _finalize(z: int) -> int:
    z = (z + _GOLD) & _MASK
    z = ((z ^ (z >> 30)) * _MUL1) & _MASK
    z = ((z ^ (z >> 27)) * _MUL2) & _MASK
    return z ^ (z >> 31)


def mix64(*keys: int) -> int:
    """Fold integer keys into a 64-bit value; used for seed derivation."""
    h = 0x8EBC6AF09C88C6E3
    for k in keys:
        h = _finalize(h ^ (k & _MASK))
    return h


def uniform(seed: int, subject: int, draw: int) -> float:
    """Uniform variate in [0, 1) for one (seed, subject, draw) key."""
    h = _finalize(mix64(seed) ^ ((subject * _K1) & _MASK))
    h = _finalize(h ^ ((draw * _K2) & _MASK))
    return (h >> 11) * 2.0**-53


def _finalize_array(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(_GOLD)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def uniform_matrix(seed: int, n_subjects: int, n_draws: int) -> np.ndarray:
    """Matrix of uniforms, entry [i, j] equal to ``uniform(seed, i, j)``."""
    with np.errstate(over="ignore"):
        base = np.uint64(mix64(seed))
        subj = np.arange(n_subjects, dtype=np.uint64) * np.uint64(_K1)
        drw = np.arange(n_draws, dtype=np.uint64) * np.uint64(_K2)
        h = _finalize_array(base ^ subj)[:, None]
        h = _finalize_array(h ^ drw[None, :])
        return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53
