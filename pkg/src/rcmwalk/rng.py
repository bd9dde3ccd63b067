"""Counter-based random numbers for reproducible parallel sampling.

Every random quantity in the library is a pure function of a 64-bit master
seed and a tuple of integer indices (edge coordinates, walker id, step
number, task id, ...).  There is no sequential stream: values can be
generated in any order, in any partition, on any number of workers, and the
result is bit-identical.  The mixer is SplitMix64, which passes BigCrush and
is more than adequate for Monte Carlo work (it is not cryptographic).
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)

# Signed lattice coordinates are folded into uint64 via this offset, which
# keeps small negative and positive values distinct.
_COORD_OFFSET = np.uint64(1) << np.uint64(32)

# Domain tags keep the edge, site, walker and task streams disjoint.
TAG_EDGE = 0x45444745  # "EDGE"
TAG_SITE = 0x53495445  # "SITE"
TAG_WALK = 0x57414C4B  # "WALK"
TAG_TASK = 0x5441534B  # "TASK"


def splitmix64(x):
    """One SplitMix64 round; works on uint64 scalars and arrays."""
    with np.errstate(over="ignore"):  # wraparound is the point
        x = (np.uint64(x) + _GAMMA) & _MASK
        x = ((x ^ (x >> np.uint64(30))) * _MUL1) & _MASK
        x = ((x ^ (x >> np.uint64(27))) * _MUL2) & _MASK
        return x ^ (x >> np.uint64(31))


def _fold(h, value):
    """Absorb one integer (scalar or array) into the running hash."""
    with np.errstate(over="ignore"):
        v = (np.asarray(value).astype(np.int64).view(np.uint64) + _COORD_OFFSET) & _MASK
    return splitmix64(h ^ v)


def mix(seed, *indices):
    """Hash (seed, i0, i1, ...) to a uint64.

    Array-valued indices broadcast against each other so whole blocks of
    keys can be produced at once.
    """
    h = splitmix64(np.uint64(int(seed) % (1 << 64)))
    for idx in indices:
        h = _fold(h, idx)
    return h


def uniform(seed, *indices):
    """Uniform [0, 1) float64 keyed on (seed, indices), broadcasting."""
    bits = mix(seed, *indices)
    return (bits >> np.uint64(11)) * np.float64(2.0**-53)


def derive_seed(master, *indices):
    """A fresh 64-bit seed for a subtask, keyed on the master seed."""
    return int(mix(master, TAG_TASK, *indices))
