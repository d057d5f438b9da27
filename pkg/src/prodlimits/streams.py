"""Counter-based random streams.

Every replicate of an experiment owns a stream identified by ``(seed, key)``.
The ``c``-th uniform of that stream is a pure function of ``(seed, key, c)``,
so results never depend on how replicates are distributed over workers.

The mixing function is the SplitMix64 finalizer. The same arithmetic is
available as plain Python (``CounterStream``) and as numba-compiled helpers
used by the batch kernels; both produce bit-identical uniforms.
"""

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_KEY_MULT = 0xD1B54A32D192ED03
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z):
    """SplitMix64 finalizer on a Python int (a bijection of 64-bit words)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def stream_key(seed, key):
    """64-bit state word of stream ``key`` under master ``seed``.

    Injective in ``key`` for a fixed seed.
    """
    s = mix64((seed + GOLDEN) & MASK64)
    return mix64(s ^ ((key * _KEY_MULT + GOLDEN) & MASK64))


def uniform_at(skey, counter):
    """The ``counter``-th uniform in [0, 1) of the stream with state ``skey``."""
    h = mix64((counter + 1) * GOLDEN)
    return (mix64((skey + h) & MASK64) >> 11) * _INV_2_53


class CounterStream:
    """Sequential view of one counter-based stream.

    Exposes ``random()`` like :class:`numpy.random.Generator`, so it can be
    passed wherever the library expects an ``rng``.

    Parameters
    ----------
    seed : int
        Master seed (reduced modulo 2**64).
    key : int
        Stream index, typically the replicate number.
    counter : int, optional
        Position of the next draw.
    """

    def __init__(self, seed, key=0, counter=0):
        self.seed = int(seed) & MASK64
        self.key = int(key) & MASK64
        self.counter = int(counter)
        self._skey = stream_key(self.seed, self.key)

    def random(self, size=None):
        if size is None:
            u = uniform_at(self._skey, self.counter)
            self.counter += 1
            return u
        m = int(np.prod(size))
        out = np.array([uniform_at(self._skey, self.counter + i) for i in range(m)])
        self.counter += m
        return out.reshape(size)

    def spawn(self, key):
        """Independent stream ``key`` under the same master seed."""
        return CounterStream(self.seed, key)

    def __repr__(self):
        return f"CounterStream(seed={self.seed}, key={self.key}, counter={self.counter})"


def split(seed, i):
    """Stream for replicate ``i`` of a run seeded with ``seed``."""
    return CounterStream(seed, i)


# numba versions; all constants are uint64 so arithmetic wraps modulo 2**64

_U_GOLDEN = np.uint64(GOLDEN)
_U_KEY_MULT = np.uint64(_KEY_MULT)
_U_M1 = np.uint64(_M1)
_U_M2 = np.uint64(_M2)
_U30 = np.uint64(30)
_U27 = np.uint64(27)
_U31 = np.uint64(31)
_U11 = np.uint64(11)
_U1 = np.uint64(1)


@njit(cache=True, nogil=True)
def nb_mix64(z):
    z = (z ^ (z >> _U30)) * _U_M1
    z = (z ^ (z >> _U27)) * _U_M2
    return z ^ (z >> _U31)


@njit(cache=True, nogil=True)
def nb_stream_key(seed, key):
    s = nb_mix64(seed + _U_GOLDEN)
    return nb_mix64(s ^ (key * _U_KEY_MULT + _U_GOLDEN))


@njit(cache=True, nogil=True)
def nb_uniform_at(skey, counter):
    h = nb_mix64((counter + _U1) * _U_GOLDEN)
    return np.float64(nb_mix64(skey + h) >> _U11) * _INV_2_53
