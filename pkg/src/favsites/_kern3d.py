"""numba kernels for the transient (d = 3) experiments.

Far-field returns are handled with the asymptotic Green's function
G(y) ~ 3 / (2 pi |y|); its relative error is O(|y|^-2), far below the
Monte Carlo error at the radii used here.
"""

import math

import numpy as np
from numba import njit

from ._rng import next_below, next_double, rng_init, trial_seed_nb
from ._walkcore import table_grow, table_new, table_slot

_G_FAR = 3.0 / (2.0 * math.pi)


@njit(cache=True, inline="always")
def _step3(pos, k):
    if k & 1:
        pos[k >> 1] -= 1
    else:
        pos[k >> 1] += 1


@njit(cache=True, inline="always")
def _norm2(pos):
    return pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]


@njit(cache=True)
def escape_weight_batch(master, first, trials, R, cap):
    """Importance-sampled escape from the origin out of the ball |z| <= R.

    The walk is conditioned never to step onto the origin: at a neighbour
    of 0 it picks uniformly among the other five directions, which costs a
    likelihood factor 5/6 per such step.  Returns per trial the weight
    (5/6)^K, the distance |z| of the exit point, and a status (1 ok, -3 cap).
    """
    w = np.empty(trials)
    dist = np.empty(trials)
    status = np.empty(trials, dtype=np.int8)
    r2 = R * R
    pos = np.zeros(3, dtype=np.int64)
    for i in range(trials):
        st = rng_init(trial_seed_nb(master, first + i))
        pos[0] = 0
        pos[1] = 0
        pos[2] = 0
        _step3(pos, next_below(st, 3, 6))
        logw = 0.0
        steps = 1
        ok = 1
        while _norm2(pos) <= r2:
            if steps >= cap:
                ok = -3
                break
            a = abs(pos[0]) + abs(pos[1]) + abs(pos[2])
            if a == 1:
                # blocked direction points back to the origin
                if pos[0] == 1:
                    blocked = 1
                elif pos[0] == -1:
                    blocked = 0
                elif pos[1] == 1:
                    blocked = 3
                elif pos[1] == -1:
                    blocked = 2
                elif pos[2] == 1:
                    blocked = 5
                else:
                    blocked = 4
                k = next_below(st, 3, 5)
                if k >= blocked:
                    k += 1
                logw += math.log(5.0 / 6.0)
            else:
                k = next_below(st, 3, 6)
            _step3(pos, k)
            steps += 1
        w[i] = math.exp(logw)
        dist[i] = math.sqrt(_norm2(pos))
        status[i] = ok
    return w, dist, status


@njit(cache=True)
def second_favorite_3d_batch(master, first, trials, m, cap):
    """Indicator of U_m^2: the walk avoids L_m^1 on (T_m^1, T_m^2].

    1 avoided, 0 revisited, -3 step cap reached.
    """
    out = np.empty(trials, dtype=np.int8)
    pos = np.zeros(3, dtype=np.int64)
    for i in range(trials):
        st = rng_init(trial_seed_nb(master, first + i))
        keys, used, vals = table_new(3, 1 << 12)
        pos[:] = 0
        s = table_slot(keys, used, pos)
        keys[s] = pos
        used[s] = True
        vals[s] = 1
        count = 1
        steps = 0
        phase = 0 if m > 1 else 1
        fav = pos.copy()
        res = -3
        while steps < cap:
            _step3(pos, next_below(st, 3, 6))
            steps += 1
            s = table_slot(keys, used, pos)
            if not used[s]:
                keys[s] = pos
                used[s] = True
                vals[s] = 0
                count += 1
            vals[s] += 1
            if phase == 1 and pos[0] == fav[0] and pos[1] == fav[1] and pos[2] == fav[2]:
                res = 0
                break
            if vals[s] == m:
                if phase == 0:
                    phase = 1
                    fav[:] = pos
                else:
                    res = 1
                    break
            if 2 * count > keys.shape[0]:
                keys, used, vals = table_grow(keys, used, vals)
        out[i] = res
    return out


@njit(cache=True)
def delayed_hitting_batch(master, first, trials, n, half, R, gamma, cap):
    """Per-target estimates of P(H_x(n) < inf) for the box |x|_inf <= half.

    After n steps the walk continues until every target is hit or it leaves
    |z| <= R; an unhit target x then contributes gamma * G(z - x) evaluated
    at the exit point z.  Returns (sum, sum of squares, status counts).
    """
    w = 2 * half + 1
    nt = w * w * w
    acc = np.zeros(nt)
    acc2 = np.zeros(nt)
    hit = np.zeros(nt, dtype=np.bool_)
    pos = np.zeros(3, dtype=np.int64)
    r2 = R * R
    capped = 0
    for i in range(trials):
        st = rng_init(trial_seed_nb(master, first + i))
        pos[:] = 0
        for t in range(n):
            _step3(pos, next_below(st, 3, 6))
        hit[:] = False
        nhit = 0
        steps = n
        # time n itself counts
        while True:
            if abs(pos[0]) <= half and abs(pos[1]) <= half and abs(pos[2]) <= half:
                j = ((pos[0] + half) * w + (pos[1] + half)) * w + (pos[2] + half)
                if not hit[j]:
                    hit[j] = True
                    nhit += 1
            if nhit == nt or _norm2(pos) > r2:
                break
            if steps >= cap:
                capped += 1
                break
            _step3(pos, next_below(st, 3, 6))
            steps += 1
        for a in range(-half, half + 1):
            for b in range(-half, half + 1):
                for c in range(-half, half + 1):
                    j = ((a + half) * w + (b + half)) * w + (c + half)
                    if hit[j]:
                        v = 1.0
                    else:
                        dx = pos[0] - a
                        dy = pos[1] - b
                        dz = pos[2] - c
                        v = gamma * _G_FAR / math.sqrt(dx * dx + dy * dy + dz * dz)
                    acc[j] += v
                    acc2[j] += v * v
    return acc, acc2, capped


@njit(cache=True)
def pair_visit_batch(master, first, trials, y, R, umax, gamma, g_pair, cap):
    """Total visits Z = xi(0, inf) + xi(y, inf) of the pair {0, y}, capped at umax + 1.

    Each excursion from the pair runs until it returns to the pair or
    leaves |z| <= R.  From an exit point z the walk returns with probability
    (G(z) + G(z - y)) / (G(0) + G(y)) (the pair's equilibrium measure is
    uniform by the reflection symmetry swapping 0 and y), and a return
    lands on either member, which by the same symmetry restarts an
    identically distributed excursion.  ``g_pair`` is G(0) + G(y).
    Returns per trial Z (or -3 on the step cap).
    """
    out = np.empty(trials, dtype=np.int64)
    pos = np.zeros(3, dtype=np.int64)
    r2 = R * R
    for i in range(trials):
        st = rng_init(trial_seed_nb(master, first + i))
        z = 1
        steps = 0
        bad = False
        while z <= umax:
            pos[:] = 0
            returned = False
            while True:
                _step3(pos, next_below(st, 3, 6))
                steps += 1
                if (pos[0] == 0 and pos[1] == 0 and pos[2] == 0) or (
                        pos[0] == y[0] and pos[1] == y[1] and pos[2] == y[2]):
                    returned = True
                    break
                if _norm2(pos) > r2:
                    break
                if steps >= cap:
                    bad = True
                    break
            if bad:
                break
            if not returned:
                d0 = math.sqrt(_norm2(pos))
                dx = pos[0] - y[0]
                dy = pos[1] - y[1]
                dz = pos[2] - y[2]
                d1 = math.sqrt(dx * dx + dy * dy + dz * dz)
                p = _G_FAR * (1.0 / d0 + 1.0 / d1) / g_pair
                u = next_double(st)
                if u >= p:
                    break
            z += 1
        out[i] = -3 if bad else z
    return out
