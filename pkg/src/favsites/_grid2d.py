"""Fast 2D batch kernels on a dense local-time grid.

Each kernel draws trial i from ``trial_seed(master, i)`` with the same
direction stream as :func:`favsites.walk.simulate_walk`, so any single
trial can be replayed through the public API.  A trial whose walk leaves
the grid is flagged (status -1) and the caller replays it exactly through
the slower sparse code path.
"""

import numpy as np
from numba import njit

from ._rng import next_below, rng_init, trial_seed_nb

# direction k: axis k >> 1, + when k even.  Flat index is X * W + Y with
# X = x + W/2, so +e1 is +W and +e2 is +1.


@njit(cache=True, inline="always")
def _flat_step(k, W):
    if k == 0:
        return W
    if k == 1:
        return -W
    if k == 2:
        return 1
    return -1


@njit(cache=True, inline="always")
def _inside(f, W):
    X = f // W
    Y = f - X * W
    return 1 <= X < W - 1 and 1 <= Y < W - 1


class Grid:
    """Reusable zeroed int16 grids plus a touched-site list."""

    def __init__(self, width: int = 4096, layers: int = 1):
        if width % 2:
            raise ValueError("width must be even")
        self.width = width
        self.cells = np.zeros((layers, width * width), dtype=np.int16)
        self.touched = np.zeros(1 << 16, dtype=np.int64)

    @property
    def centre(self) -> int:
        h = self.width // 2
        return h * self.width + h


# ---------------------------------------------------------------------------
# simultaneous favorites: T_m^2 < T_{m+1}^1


@njit(cache=True)
def _second_favorite_one(seed, m, W, cnt, touched, cap):
    st = rng_init(seed)
    f = (W // 2) * W + W // 2
    nt = 0
    touched[nt] = f
    nt += 1
    cnt[f] = 1
    reached = 1 if m == 1 else 0
    status = -2
    steps = 0
    if m == 1:
        # the start already has local time 1; any new site is the second
        status = 1
    while status == -2:
        if steps >= cap:
            status = -3
            break
        f += _flat_step(next_below(st, 2, 4), W)
        steps += 1
        if not _inside(f, W):
            status = -1
            break
        c = cnt[f]
        if c == 0:
            if nt >= touched.shape[0]:
                status = -4
                break
            touched[nt] = f
            nt += 1
        c += 1
        cnt[f] = c
        if c == m:
            reached += 1
            if reached == 2:
                status = 1
        elif c == m + 1:
            status = 0
    for j in range(nt):
        cnt[touched[j]] = 0
    return status


@njit(cache=True)
def second_favorite_batch(master, first, trials, m, W, cnt, touched, cap):
    """Indicator of {T_m^2 < T_{m+1}^1} per trial; -1 grid exit, -3 step cap, -4 table full."""
    out = np.empty(trials, dtype=np.int8)
    for i in range(trials):
        out[i] = _second_favorite_one(trial_seed_nb(master, first + i), m, W, cnt, touched, cap)
    return out


# ---------------------------------------------------------------------------
# maximal local time at checkpoints


@njit(cache=True)
def _max_local_time_one(seed, checkpoints, W, cnt, touched, out_row):
    st = rng_init(seed)
    f = (W // 2) * W + W // 2
    nt = 0
    touched[nt] = f
    nt += 1
    cnt[f] = 1
    top = 1
    ok = 1
    j = 0
    n_last = checkpoints[checkpoints.shape[0] - 1]
    for t in range(1, n_last + 1):
        f += _flat_step(next_below(st, 2, 4), W)
        if not _inside(f, W):
            ok = -1
            break
        c = cnt[f]
        if c == 0:
            if nt >= touched.shape[0]:
                ok = -4
                break
            touched[nt] = f
            nt += 1
        c += 1
        cnt[f] = c
        if c > top:
            top = c
        while j < checkpoints.shape[0] and checkpoints[j] == t:
            out_row[j] = top
            j += 1
    if checkpoints[0] == 0:
        out_row[0] = 1
    for q in range(nt):
        cnt[touched[q]] = 0
    return ok


@njit(cache=True)
def max_local_time_batch(master, first, trials, checkpoints, W, cnt, touched):
    """xi*(n) at each checkpoint (sorted, ascending) for every trial."""
    out = np.zeros((trials, checkpoints.shape[0]), dtype=np.int64)
    status = np.empty(trials, dtype=np.int8)
    for i in range(trials):
        status[i] = _max_local_time_one(trial_seed_nb(master, first + i), checkpoints, W, cnt, touched, out[i])
    return out, status


# ---------------------------------------------------------------------------
# lazy local time of the origin pair at a fixed odd jump-chain time


@njit(cache=True)
def _origin_lazy_one(seed, n_jump):
    """Return (xi~(0, n), xi_L(0, N^-1_-(n))) for odd n, in one pass.

    Time t is classified once S_{t+1} is known: an even t is removed iff
    t is in L, an odd t iff t + 1 is in L.
    """
    st = rng_init(seed)
    # positions of S_{t-1}, S_t, S_{t+1}
    x0 = 0
    y0 = 0
    xm = 0
    ym = 0
    kept = 0
    xt0 = 0
    lz0 = 0
    # time 0 is kept (0 is never in L)
    kept = 1
    xt0 = 1
    if n_jump == 0:
        return xt0, 0
    t = 0
    xc, yc = x0, y0  # S_t
    while True:
        k = next_below(st, 2, 4)
        xn, yn = xc, yc
        if k == 0:
            xn += 1
        elif k == 1:
            xn -= 1
        elif k == 2:
            yn += 1
        else:
            yn -= 1
        t += 1
        # now S_{t-1} = (xc, yc), S_t = (xn, yn); decide kept status of time t-1 when odd,
        # and of time t when even
        if t % 2 == 0:
            in_l = t >= 2 and xm == xn and ym == yn and xc == xm + 1 and yc == ym
            if in_l and xm == 0 and ym == 0:
                lz0 += 1
            # odd time t-1 is kept iff t not in L
            if not in_l:
                kept += 1
                if xc == 0 and yc == 0:
                    xt0 += 1
                if kept == n_jump + 1:
                    return xt0, lz0
                # even time t is kept iff t not in L
                kept += 1
                if xn == 0 and yn == 0:
                    xt0 += 1
                if kept == n_jump + 1:
                    return xt0, lz0
        xm, ym = xc, yc
        xc, yc = xn, yn


@njit(cache=True)
def origin_lazy_table(master, first, trials, n_jump, imax, lmax):
    """Counts table[i, l] of (xi~(0, n), xi_L(0, N^-1_-(n))) with overflow in the last cells."""
    tab = np.zeros((imax + 1, lmax + 1), dtype=np.int64)
    for r in range(trials):
        i, l = _origin_lazy_one(trial_seed_nb(master, first + r), n_jump)
        tab[min(i, imax), min(l, lmax)] += 1
    return tab


# ---------------------------------------------------------------------------
# lazy counts of all pairs at T_m^1


@njit(cache=True)
def _truncated_one(seed, m, W, cnt, kt, lz, touched, path, tab):
    """Walk to T_m^1 and add (xi~(x, N_T), cap, xi_L(x, T)) of every other X-pair to tab.

    Returns (status, violations): status 1 ok, -1 grid exit, -4 buffer full.
    """
    st = rng_init(seed)
    f = (W // 2) * W + W // 2
    nt = 0
    touched[nt] = f
    nt += 1
    cnt[f] = 1
    path[0] = f
    T = 0
    status = 1
    if m > 1:
        while True:
            f += _flat_step(next_below(st, 2, 4), W)
            T += 1
            if not _inside(f, W):
                status = -1
                break
            if T >= path.shape[0]:
                status = -4
                break
            path[T] = f
            c = cnt[f]
            if c == 0:
                if nt >= touched.shape[0]:
                    status = -4
                    break
                touched[nt] = f
                nt += 1
            c += 1
            cnt[f] = c
            if c == m:
                break
    viol = 0
    if status == 1:
        # removed times from L excursions completed by T
        for t in range(T + 1):
            kt[path[t]] += 1
        for k in range(2, T + 1, 2):
            a = path[k - 2]
            if path[k] == a and path[k - 1] == a + W:
                kt[path[k - 1]] -= 1
                kt[path[k]] -= 1
                lz[a] += 1
        fav = path[T]
        for q in range(nt):
            s = touched[q]
            X = s // W
            Y = s - X * W
            if (X + Y) % 2 != 0:
                continue  # odd members are handled through their even partner
            # the X-pair of the favorite site is excluded
            if s == fav or s + W == fav:
                continue
            i = kt[s]
            if i == 0:
                continue
            top = i if i > kt[s + W] else kt[s + W]
            capv = m - top
            l = lz[s]
            if l >= capv or capv <= 0:
                viol += 1
                continue
            tab[i, capv, l] += 1
        # odd members whose even partner was never visited carry no lazy time
    for q in range(nt):
        s = touched[q]
        cnt[s] = 0
        kt[s] = 0
        lz[s] = 0
        if s + W < cnt.shape[0]:
            kt[s + W] = 0
    return status, viol


@njit(cache=True)
def truncated_lazy_table(master, first, trials, m, W, cnt, kt, lz, touched, path):
    """Aggregate table[i, cap, l] over trials, plus per-trial status and violation count."""
    tab = np.zeros((m + 1, m + 1, m + 1), dtype=np.int64)
    status = np.empty(trials, dtype=np.int8)
    viol = 0
    for r in range(trials):
        s, v = _truncated_one(trial_seed_nb(master, first + r), m, W, cnt, kt, lz, touched, path, tab)
        status[r] = s
        viol += v
    return tab, status, viol


# ---------------------------------------------------------------------------
# number of argmax sites after n steps (any dimension, small n)


@njit(cache=True)
def argmax_count_batch(master, first, trials, d, n):
    """#K(n) per trial on a (2n+1)^d box."""
    w = 2 * n + 1
    strides = np.empty(d, dtype=np.int64)
    s = 1
    for i in range(d):
        strides[i] = s
        s *= w
    grid = np.zeros(s, dtype=np.int64)
    centre = 0
    for i in range(d):
        centre += n * strides[i]
    nbits = 1
    while (1 << nbits) < 2 * d:
        nbits += 1
    visited = np.empty(n + 1, dtype=np.int64)
    out = np.empty(trials, dtype=np.int64)
    for r in range(trials):
        st = rng_init(trial_seed_nb(master, first + r))
        p = centre
        grid[p] = 1
        visited[0] = p
        top = 1
        for t in range(1, n + 1):
            k = next_below(st, nbits, 2 * d)
            ax = k >> 1
            if k & 1:
                p -= strides[ax]
            else:
                p += strides[ax]
            grid[p] += 1
            visited[t] = p
            if grid[p] > top:
                top = grid[p]
        nk = 0
        for t in range(n + 1):
            q = visited[t]
            if grid[q] == top:
                nk += 1
                grid[q] = -grid[q]  # count each site once
        for t in range(n + 1):
            grid[visited[t]] = 0
        out[r] = nk
    return out
