"""Seeded random-number plumbing shared by sampling, calibration, and simulation.

Reproducibility contract (scheme tag ``pcg64-fy-v1``):

* Bit source: numpy's PCG64, a named, versioned, platform-independent
  64-bit generator.
* Substream derivation: ``derive_seed(seed, *keys)`` feeds the integer
  entropy tuple ``[seed, *keys]`` to ``numpy.random.SeedSequence`` and
  returns the first 64-bit word of its output state.  Distinct key paths
  give statistically independent substreams; the mapping is documented
  numpy behaviour and does not depend on OS, word size, or endianness.
* Selection: :func:`srs_indices` runs a partial Fisher-Yates shuffle over
  ``range(n_population)`` in canonical (file) order, consuming one bounded
  integer per selected unit.

Given the same seed and key path, every function here returns identical
results on every platform for a fixed numpy major/minor version.
"""

from __future__ import annotations

import numpy as np

SCHEME = "pcg64-fy-v1"


def derive_seed(seed: int, *keys: int) -> int:
    """Derive the 64-bit sub-seed for the substream addressed by ``keys``.

    Parameters
    ----------
    seed : int
        Root seed (any Python int >= 0).
    *keys : int
        Integer path components, e.g. a stratum index or a replication
        index.  ``derive_seed(s)`` with no keys is a plain whitening of
        ``s`` and is *not* equal to ``s``.

    Returns
    -------
    int
        Sub-seed in ``[0, 2**64)``.
    """
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0])


def generator(seed: int) -> np.random.Generator:
    """PCG64 generator seeded directly with ``seed``."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for the substream addressed by ``keys`` under ``seed``."""
    return generator(derive_seed(seed, *keys))


def srs_indices(rng: np.random.Generator, n_population: int, n_sample: int) -> np.ndarray:
    """Draw a simple random sample of positions without replacement.

    Partial Fisher-Yates over ``0..n_population-1``: step ``j`` swaps
    position ``j`` with a uniform position in ``[j, n_population)``.  Only
    the touched entries of the virtual permutation are stored, so the cost
    is O(n_sample) regardless of population size.  Every size-``n_sample``
    subset is equally likely, and the *order* of the result is the
    selection order (itself uniform over arrangements).

    Parameters
    ----------
    rng : numpy.random.Generator
        Source of bounded integers; consumed state is exactly one bounded
        draw per selected unit.
    n_population : int
        Population size N.
    n_sample : int
        Sample size n, ``0 <= n <= N``.

    Returns
    -------
    numpy.ndarray
        ``n_sample`` distinct positions, dtype int64.
    """
    if not 0 <= n_sample <= n_population:
        raise ValueError(
            f"sample size {n_sample} outside [0, {n_population}]"
        )
    if n_sample == 0:
        return np.empty(0, dtype=np.int64)
    spans = np.arange(n_population, n_population - n_sample, -1, dtype=np.int64)
    offsets = rng.integers(spans)  # offsets[j] uniform in [0, N - j)
    out = np.empty(n_sample, dtype=np.int64)
    swapped: dict[int, int] = {}
    for j in range(n_sample):
        k = j + int(offsets[j])
        out[j] = swapped.get(k, k)
        swapped[k] = swapped.get(j, j)
    return out
