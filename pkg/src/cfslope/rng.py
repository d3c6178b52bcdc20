"""Counter-based random number streams for reproducible, order-independent simulation.

Every random column is drawn from its own Philox stream keyed by
``(seed, *stream ids)``. Philox is counter-based: the i-th value of a stream is
a pure function of the key and the counter position, so the value used for row
i of a column never depends on how many draws other columns or replications
consumed. Scalar transforms (inverse-CDF normal, uniform thresholding) consume
exactly one 64-bit word per row, which keeps the (seed, row, variable) keying
exact.
"""

from __future__ import annotations

import numpy as np
from numpy.random import Generator, Philox, SeedSequence
from scipy.special import ndtri


def stream(seed: int, *ids: int) -> Generator:
    """Return the Philox generator for stream ``(seed, *ids)``."""
    return Generator(Philox(SeedSequence((int(seed),) + tuple(int(i) for i in ids))))


def uniform_column(n: int, seed: int, *ids: int) -> np.ndarray:
    """n uniforms on [0, 1), one counter slot per row."""
    return stream(seed, *ids).random(n)


def normal_column(n: int, seed: int, *ids: int) -> np.ndarray:
    """n standard normals via the inverse CDF, one counter slot per row.

    ndtri(u) is used instead of the ziggurat sampler so that row i is a pure
    function of the stream key and i.
    """
    u = uniform_column(n, seed, *ids)
    # keep ndtri finite at u == 0
    return ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))


def bernoulli_column(p, n: int, seed: int, *ids: int) -> np.ndarray:
    """n Bernoulli(p) draws as floats, one counter slot per row."""
    return (uniform_column(n, seed, *ids) < np.asarray(p)).astype(np.float64)


def derive_seed(seed: int, *ids: int) -> int:
    """Derive a well-mixed child seed, e.g. one per replication."""
    return int(SeedSequence((int(seed),) + tuple(int(i) for i in ids)).generate_state(1)[0])
