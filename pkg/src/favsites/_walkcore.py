"""numba kernels shared by the walk engine and the experiment drivers."""

import numpy as np
from numba import njit

from ._rng import _GOLDEN_U, _M1_U, next_below, rng_init, trial_seed_nb

INT64_MAX = np.iinfo(np.int64).max


@njit(cache=True, inline="always")
def apply_step(pos, k):
    # direction k: axis k >> 1, positive when k is even
    if k & 1:
        pos[k >> 1] -= 1
    else:
        pos[k >> 1] += 1


@njit(cache=True)
def gen_path(seed, d, steps, start, nbits):
    st = rng_init(seed)
    path = np.empty((steps + 1, d), dtype=np.int64)
    pos = start.copy()
    path[0] = pos
    for t in range(1, steps + 1):
        apply_step(pos, next_below(st, nbits, 2 * d))
        path[t] = pos
    return path


@njit(cache=True)
def gen_until_exit(seed, d, r2, cap, start, nbits, retain):
    """Walk until |S|^2 > r2 (first exit of the closed Euclidean ball).

    Returns (path or last point, steps taken, exited flag).
    """
    st = rng_init(seed)
    pos = start.copy()
    size = 1024 if retain else 1
    path = np.empty((size, d), dtype=np.int64)
    path[0] = pos
    n = 0
    exited = False
    while n < cap:
        s2 = 0
        for i in range(d):
            s2 += pos[i] * pos[i]
        if s2 > r2:
            exited = True
            break
        apply_step(pos, next_below(st, nbits, 2 * d))
        n += 1
        if retain:
            if n >= path.shape[0]:
                grown = np.empty((2 * path.shape[0], d), dtype=np.int64)
                grown[: path.shape[0]] = path
                path = grown
            path[n] = pos
    if retain:
        return path[: n + 1].copy(), n, exited
    out = np.empty((1, d), dtype=np.int64)
    out[0] = pos
    return out, n, exited


@njit(cache=True)
def exit_times(master, trials, d, r2, cap, nbits):
    out = np.empty(trials, dtype=np.int64)
    start = np.zeros(d, dtype=np.int64)
    for i in range(trials):
        _, n, exited = gen_until_exit(trial_seed_nb(master, i), d, r2, cap, start, nbits, False)
        out[i] = n if exited else -1
    return out


# ---------------------------------------------------------------------------
# open-addressing site table keyed by full coordinates (any dimension)


@njit(cache=True, inline="always")
def _hash_coords(pos):
    h = _GOLDEN_U
    for i in range(pos.shape[0]):
        h ^= np.uint64(pos[i] & 0xFFFFFFFFFFFF) + _GOLDEN_U + (h << np.uint64(6)) + (h >> np.uint64(2))
        h *= _M1_U
        h ^= h >> np.uint64(29)
    return h


@njit(cache=True)
def table_new(d, cap):
    keys = np.zeros((cap, d), dtype=np.int64)
    used = np.zeros(cap, dtype=np.bool_)
    vals = np.zeros(cap, dtype=np.int64)
    return keys, used, vals


@njit(cache=True)
def table_slot(keys, used, pos):
    """Slot holding ``pos`` or the empty slot where it would go."""
    mask = keys.shape[0] - 1
    j = np.int64(_hash_coords(pos) & np.uint64(mask))
    d = pos.shape[0]
    while used[j]:
        same = True
        for i in range(d):
            if keys[j, i] != pos[i]:
                same = False
                break
        if same:
            return j
        j = (j + 1) & mask
    return j


@njit(cache=True)
def table_grow(keys, used, vals):
    nk, nu, nv = table_new(keys.shape[1], 2 * keys.shape[0])
    for j in range(keys.shape[0]):
        if used[j]:
            s = table_slot(nk, nu, keys[j])
            nk[s] = keys[j]
            nu[s] = True
            nv[s] = vals[j]
    return nk, nu, nv


@njit(cache=True)
def walk_until_level(seed, d, m, cap, start, nbits, retain):
    """Walk until some site reaches local time ``m`` (counting time 0).

    Returns (path or last point, steps, reached flag).
    """
    st = rng_init(seed)
    keys, used, vals = table_new(d, 1024)
    count = 0
    pos = start.copy()
    size = 1024 if retain else 1
    path = np.empty((size, d), dtype=np.int64)
    path[0] = pos
    s = table_slot(keys, used, pos)
    keys[s] = pos
    used[s] = True
    vals[s] = 1
    count = 1
    n = 0
    reached = m <= 1
    while not reached and n < cap:
        apply_step(pos, next_below(st, nbits, 2 * d))
        n += 1
        if retain:
            if n >= path.shape[0]:
                grown = np.empty((2 * path.shape[0], d), dtype=np.int64)
                grown[: path.shape[0]] = path
                path = grown
            path[n] = pos
        s = table_slot(keys, used, pos)
        if not used[s]:
            keys[s] = pos
            used[s] = True
            vals[s] = 0
            count += 1
        vals[s] += 1
        if vals[s] >= m:
            reached = True
        if 2 * count > keys.shape[0]:
            keys, used, vals = table_grow(keys, used, vals)
    if retain:
        return path[: n + 1].copy(), n, reached
    out = np.empty((1, d), dtype=np.int64)
    out[0] = pos
    return out, n, reached


# ---------------------------------------------------------------------------
# exhaustive enumeration


@njit(cache=True)
def enumerate_argmax(d, n):
    """Exhaustive DFS over all (2d)^n paths.

    Returns (counts of #K values indexed 1..n+1, sum over paths of xi*).
    Local times live on a (2n+1)^d box; the number of sites at each local
    time level is maintained so #K is read off in O(1) at every leaf.
    """
    w = 2 * n + 1
    size = w ** d
    grid = np.zeros(size, dtype=np.int64)
    strides = np.empty(d, dtype=np.int64)
    s = 1
    for i in range(d):
        strides[i] = s
        s *= w
    centre = 0
    for i in range(d):
        centre += n * strides[i]
    at_level = np.zeros(n + 3, dtype=np.int64)
    hist = np.zeros(n + 2, dtype=np.int64)
    xi_sum = np.int64(0)
    # explicit stack of (position index, next direction, previous max)
    idx = np.empty(n + 1, dtype=np.int64)
    nxt = np.zeros(n + 1, dtype=np.int64)
    prev_max = np.zeros(n + 1, dtype=np.int64)
    idx[0] = centre
    grid[centre] = 1
    at_level[1] = 1
    cur_max = 1
    if n == 0:
        hist[1] = 1
        return hist, 1
    depth = 0
    nd = 2 * d
    while depth >= 0:
        if nxt[depth] == nd:
            # undo the visit at this depth
            if depth == 0:
                break
            p = idx[depth]
            c = grid[p]
            at_level[c] -= 1
            grid[p] = c - 1
            at_level[c - 1] += 1
            cur_max = prev_max[depth]
            depth -= 1
            continue
        k = nxt[depth]
        nxt[depth] += 1
        ax = k >> 1
        p = idx[depth] + (strides[ax] if (k & 1) == 0 else -strides[ax])
        c = grid[p]
        at_level[c] -= 1
        grid[p] = c + 1
        at_level[c + 1] += 1
        prev_max[depth + 1] = cur_max
        if c + 1 > cur_max:
            cur_max = c + 1
        if depth + 1 == n:
            hist[at_level[cur_max]] += 1
            xi_sum += cur_max
            # undo immediately
            at_level[c + 1] -= 1
            grid[p] = c
            at_level[c] += 1
            cur_max = prev_max[depth + 1]
        else:
            depth += 1
            idx[depth] = p
            nxt[depth] = 0
    return hist, xi_sum
