"""Per-trial random streams usable from both Python and numba kernels.

Trial ``i`` of an experiment with master seed ``s`` draws from a
xoshiro256** stream whose state is expanded from ``trial_seed(s, i)`` by
splitmix64.  The same arithmetic is implemented twice (plain Python and
numba) so that seeds can be derived on either side.
"""

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
# numba sees these as typed constants
_GOLDEN_U = np.uint64(_GOLDEN)
_M1_U = np.uint64(_M1)
_M2_U = np.uint64(_M2)


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (state is advanced by the golden gamma)."""
    z = (x + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed: int, index: int) -> int:
    """64-bit seed of trial ``index`` under ``master_seed``.

    The map is a fixed hash, so a trial's stream does not depend on which
    other trials ran or in what order.
    """
    return splitmix64((master_seed & MASK64) ^ splitmix64(index & MASK64))


@njit(cache=True, inline="always")
def _splitmix64_nb(x):
    z = x + _GOLDEN_U
    z = (z ^ (z >> np.uint64(30))) * _M1_U
    z = (z ^ (z >> np.uint64(27))) * _M2_U
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def trial_seed_nb(master_seed, index):
    return _splitmix64_nb(np.uint64(master_seed) ^ _splitmix64_nb(np.uint64(index)))


@njit(cache=True)
def rng_init(seed):
    """Return a generator state: 4 words of xoshiro256** plus a 2-word bit reservoir."""
    st = np.zeros(6, dtype=np.uint64)
    x = np.uint64(seed)
    for i in range(4):
        x = x + _GOLDEN_U
        z = x
        z = (z ^ (z >> np.uint64(30))) * _M1_U
        z = (z ^ (z >> np.uint64(27))) * _M2_U
        st[i] = z ^ (z >> np.uint64(31))
    return st


@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, inline="always")
def next_u64(st):
    result = _rotl(st[1] * np.uint64(5), 7) * np.uint64(9)
    t = st[1] << np.uint64(17)
    st[2] ^= st[0]
    st[3] ^= st[1]
    st[1] ^= st[2]
    st[0] ^= st[3]
    st[2] ^= t
    st[3] = _rotl(st[3], 45)
    return result


@njit(cache=True, inline="always")
def next_double(st):
    """Uniform on [0, 1) with 53 random bits."""
    return float(next_u64(st) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def next_open_double(st):
    """Uniform on (0, 1]."""
    return (float(next_u64(st) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def next_below(st, nbits, limit):
    """Uniform integer in [0, limit) using ``nbits``-bit chunks with rejection.

    Chunks are taken from a 64-bit reservoir kept in ``st[4]`` (bits) and
    ``st[5]`` (chunks left).
    """
    mask = np.uint64((1 << nbits) - 1)
    while True:
        if st[5] == 0:
            st[4] = next_u64(st)
            st[5] = np.uint64(64 // nbits)
        v = st[4] & mask
        st[4] = st[4] >> np.uint64(nbits)
        st[5] -= np.uint64(1)
        if v < np.uint64(limit):
            return np.int64(v)


@njit(cache=True, inline="always")
def next_geometric(st, log_q):
    """Number of failures before the first success, ``log_q = log(1 - p)``.

    Inversion: P(h >= k) = q^k, so h = floor(log U / log q) for U in (0, 1].
    """
    return np.int64(np.floor(np.log(next_open_double(st)) / log_q))


def direction_bits(dimension: int) -> int:
    """Chunk width used to draw one of the 2d unit steps."""
    return max(1, int(2 * dimension - 1).bit_length())
