"""Concentric-annuli excursion counts and the upcrossing jump chain.

Circles are the one-site-thick bands C(r) = {z : (r-1)^2 < |z - x|^2 <= r^2}.
A nearest-neighbour step changes |z|^2 by at most 2|z| + 1, so a walk
cannot pass from inside to outside of a band without landing on it; the
"hit the circle" events are then exact lattice events and all membership
tests are integer comparisons of squared norms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy import stats

from ._rng import next_below, next_double, rng_init, trial_seed, trial_seed_nb
from .analytics import _annulus_cached


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class AnnulusGeometry:
    """Radii r_0 > r_1 > ... > r_{n+1} around ``center`` plus the outer radius K_n.

    mode "paper": K_n = 16 e^n n^9, r_k = e^(n-k) n^9, r_{n+1} = n^6 (real radii).
    mode "desk":  r_k = base^(n-k) * poly, r_{n+1} = ceil(poly / n), K_n = 16 r_0
                  with poly = n^2 unless given (integer radii).
    """

    center: Tuple[int, int]
    n: int
    radii: Tuple[float, ...]
    outer: float
    mode: str
    base: float = math.e

    def __post_init__(self):
        r = self.radii
        if len(r) != self.n + 2:
            raise ValueError("need radii r_0..r_{n+1}")
        if any(a <= b for a, b in zip(r[:-1], r[1:])):
            raise ValueError("radii must strictly decrease")
        if r[-1] < 1:
            raise ValueError("innermost radius must be >= 1")

    @classmethod
    def paper(cls, n: int, center=(0, 0)) -> "AnnulusGeometry":
        if n < 2:
            raise ValueError("n >= 2")
        radii = tuple(math.exp(n - k) * n**9 for k in range(n + 1)) + (float(n**6),)
        return cls(tuple(center), n, radii, 16 * math.exp(n) * n**9, "paper", math.e)

    @classmethod
    def desk(cls, n: int, base: int = 2, poly: Optional[int] = None, center=(0, 0)) -> "AnnulusGeometry":
        if n < 2:
            raise ValueError("n >= 2")
        if poly is None:
            poly = n * n
        radii = tuple(int(base ** (n - k) * poly) for k in range(n + 1)) + (int(math.ceil(poly / n)),)
        return cls(tuple(center), n, radii, 16 * radii[0], "desk", float(base))

    @property
    def top_ratio(self) -> float:
        """log(r_n / r_{n+1}) in units of log(base); equals 3 log n in paper mode."""
        return math.log(self.radii[-2] / self.radii[-1]) / math.log(self.base)

    @property
    def top_up_probability(self) -> float:
        """Probability that the skeleton chain steps n -> n+1 from n: 1 / (1 + top_ratio)."""
        return 1.0 / (1.0 + self.top_ratio)

    def squared(self) -> Tuple[np.ndarray, np.ndarray]:
        """(r_k^2, (r_k - 1)^2) as int64 (band k is (r_k-1)^2 < |z|^2 <= r_k^2).

        Raises
        ------
        OverflowError
            If the radii do not fit an int64 squared norm.
        """
        if self.radii[0] > 2**31:
            raise OverflowError("radii too large for exact integer circle tests")
        hi = np.array([math.floor(r * r) for r in self.radii], dtype=np.int64)
        lo = np.array([math.floor((r - 1) ** 2) for r in self.radii], dtype=np.int64)
        return hi, lo


# ---------------------------------------------------------------------------
# scanning


@njit(cache=True, inline="always")
def _band(s2, hi, lo):
    for k in range(hi.shape[0]):
        if lo[k] < s2 <= hi[k]:
            return k
    return -1


@njit(cache=True)
def _scan_core(path, cx, cy, hi, lo, stop_lo, from_outside, skeleton):
    """Excursion counts along a retained path.

    state[k] for level k (excursions C_{k-1} -> C_k): 0 unseen, 1 last on
    C_{k-1}, 2 last on C_k.  Stops at the first time |S - center|^2 > stop_lo
    after time 0, i.e. the first hit of the stop band from inside.
    Returns (counts[0..n+1], stop index or -1, number of skeleton entries).
    """
    nb = hi.shape[0]
    counts = np.zeros(nb, dtype=np.int64)
    state = np.zeros(nb, dtype=np.int64)
    last = -2
    ns = 0
    if from_outside:
        # the walk is treated as having just arrived from C_0 at its start
        counts[1] = 1
        state[1] = 2
    stop = -1
    for t in range(path.shape[0]):
        dx = path[t, 0] - cx
        dy = path[t, 1] - cy
        s2 = dx * dx + dy * dy
        if t > 0 and s2 > stop_lo:
            stop = t
        b = _band(s2, hi, lo)
        if b >= 0 and b != last:
            if b >= 1 and state[b] == 1:
                counts[b] += 1
                state[b] = 2
            if b >= 1 and state[b] == 0 and not (from_outside and b == 1):
                state[b] = 2
            if b + 1 < nb:
                state[b + 1] = 1
            if ns < skeleton.shape[0]:
                skeleton[ns] = b
            ns += 1
            last = b
        if stop >= 0:
            break
    return counts, stop, ns


@dataclass
class ExcursionLedger:
    """Counts N_{n,k} (index k = 1..n+1; index 0 unused), the skeleton of circle hits and nested times."""

    n: int
    counts: np.ndarray
    stopped: bool
    stop_time: int
    skeleton: np.ndarray
    eta: List[int] = field(default_factory=list)
    eta_bar: List[int] = field(default_factory=list)
    zeta: List[List[int]] = field(default_factory=list)
    zeta_bar: List[List[int]] = field(default_factory=list)
    Z: List[int] = field(default_factory=list)
    xi_center: int = 0

    def N(self, k: int) -> int:
        return int(self.counts[k])

    def check_interleaving(self) -> None:
        """Nested times satisfy eta_i <= zeta_{i,1} <= zeta_bar_{i,1} <= ... <= eta_bar_i."""
        prev = -1
        for i, e in enumerate(self.eta):
            seq = [e]
            for a, b in zip(self.zeta[i], self.zeta_bar[i]):
                seq += [a, b]
            if i < len(self.eta_bar):
                seq.append(self.eta_bar[i])
            if any(a > b for a, b in zip(seq[:-1], seq[1:])) or seq[0] < prev:
                raise AssertionError(f"interleaving fails in excursion {i}")
            prev = seq[-1]


def count_excursions(path: np.ndarray, geometry: AnnulusGeometry, from_outside: bool = False,
                     stop_radius: Optional[float] = None, nested: Tuple[int, int, int] = (0, 1, 2)) -> ExcursionLedger:
    """Exact excursion counts of a 2D path for the circles of ``geometry``.

    Parameters
    ----------
    path : (T+1, 2) int array
    geometry : AnnulusGeometry
    from_outside : bool
        Treat time 0 as the end of an excursion C_0 -> C_1 (the path starts
        on C_1 having come from C_0), so N_{n,1} starts at 1.
    stop_radius : float, optional
        Counting stops at the first hit of the circle of this radius around
        the centre, approached from inside.  Default: K_n, or r_0 when
        ``from_outside``.
    nested : (outer, mid, inner) circle indices
        Circles used for the nested times: eta_i hits mid after outer,
        eta_bar_i hits outer after eta_i, zeta/zeta_bar alternate inner/mid
        within, and Z^i counts completed inner -> mid excursions.
    """
    path = np.asarray(path, dtype=np.int64).reshape(-1, 2)
    hi, lo = geometry.squared()
    if stop_radius is None:
        stop_radius = geometry.radii[0] if from_outside else geometry.outer
    stop_lo = np.int64(math.floor((stop_radius - 1) ** 2))
    cx, cy = geometry.center
    skel = np.empty(len(path), dtype=np.int64)
    counts, stop, ns = _scan_core(path, cx, cy, hi, lo, stop_lo, from_outside, skel)
    end = stop if stop >= 0 else len(path) - 1
    led = ExcursionLedger(n=geometry.n, counts=counts, stopped=stop >= 0, stop_time=int(stop),
                          skeleton=skel[:ns].copy())
    # nested times, straight from the definitions
    o, mid, inn = nested
    d2 = (path[: end + 1, 0] - cx) ** 2 + (path[: end + 1, 1] - cy) ** 2
    on = {k: (lo[k] < d2) & (d2 <= hi[k]) for k in (o, mid, inn)}
    t = 0
    while True:
        hits = np.flatnonzero(on[mid][t:])
        if len(hits) == 0:
            break
        e = t + int(hits[0])
        led.eta.append(e)
        out_hits = np.flatnonzero(on[o][e:])
        eb = e + int(out_hits[0]) if len(out_hits) else None
        zs, zbs = [], []
        s = e
        limit = eb if eb is not None else end + 1
        while True:
            ih = np.flatnonzero(on[inn][s:limit])
            if len(ih) == 0:
                break
            z = s + int(ih[0])
            mh = np.flatnonzero(on[mid][z:limit])
            if len(mh) == 0:
                break
            zb = z + int(mh[0])
            zs.append(z)
            zbs.append(zb)
            s = zb
        led.zeta.append(zs)
        led.zeta_bar.append(zbs)
        led.Z.append(len(zbs))
        if eb is None:
            break
        led.eta_bar.append(eb)
        t = eb
    led.xi_center = int(np.sum((path[: end + 1, 0] == cx) & (path[: end + 1, 1] == cy)))
    return led


def upcrossings_from_states(states: Sequence[int], n: int, start_from_outside: bool = True) -> np.ndarray:
    """u_l = number of l-1 -> l transitions of a nearest-neighbour state sequence.

    With ``start_from_outside`` the entry into the starting state 1 counts as one 0 -> 1 step.
    """
    u = np.zeros(n + 2, dtype=np.int64)
    s = np.asarray(states)
    if len(s) and start_from_outside and s[0] == 1:
        u[1] = 1
    up = s[1:] == s[:-1] + 1
    np.add.at(u, s[1:][up], 1)
    return u


# ---------------------------------------------------------------------------
# successful profiles


def successful_indicator(ledger: ExcursionLedger, n: int, delta: float, xi_at_center: Optional[int] = None,
                         K_n: Optional[float] = None, delta_prime: Optional[float] = None,
                         top_ratio: Optional[float] = None) -> Tuple[bool, bool]:
    """(Y, Y'): the (n, delta)-successful profile test and its local-time refinement.

    Y: N_1 = 1, |N_k - 2k^2| <= k^(1+delta) for k = 2..n, and
    N_{n+1} in [(2n^2 - n^(1+delta)) / top_ratio, n^3], top_ratio = 3 log n by default.
    Y' additionally needs xi_at_center >= (4/pi)(log K_n)^2 - (log K_n)^(1+delta_prime).

    Raises
    ------
    ValueError
        If the ledger did not reach its stopping circle.
    """
    if not ledger.stopped:
        raise ValueError("incomplete ledger")
    if top_ratio is None:
        top_ratio = 3 * math.log(n)
    c = ledger.counts
    return _success(c, n, delta, top_ratio, xi_at_center, K_n, delta_prime)


def _success(c, n, delta, top_ratio, xi_at_center=None, K_n=None, delta_prime=None):
    y = c[1] == 1
    for k in range(2, n + 1):
        if abs(c[k] - 2 * k * k) > k ** (1 + delta):
            y = False
            break
    if y:
        lo_top = (2 * n * n - n ** (1 + delta)) / top_ratio
        y = lo_top <= c[n + 1] <= n**3
    yp = False
    if y and xi_at_center is not None and K_n is not None and delta_prime is not None:
        lk = math.log(K_n)
        yp = xi_at_center >= 4 / math.pi * lk * lk - lk ** (1 + delta_prime)
    return bool(y), bool(yp)


# ---------------------------------------------------------------------------
# fast walk kernel for the desk experiments


@njit(cache=True)
def _walk_counts_one(seed, hi, lo, stop_lo, start_x, cap, counts, state):
    st = rng_init(seed)
    nb = hi.shape[0]
    for k in range(nb):
        counts[k] = 0
        state[k] = 0
    counts[1] = 1
    state[1] = 2
    if nb > 2:
        state[2] = 1
    x = start_x
    y = 0
    last = 1
    steps = 0
    while True:
        k = next_below(st, 2, 4)
        if k == 0:
            x += 1
        elif k == 1:
            x -= 1
        elif k == 2:
            y += 1
        else:
            y -= 1
        steps += 1
        s2 = x * x + y * y
        if s2 > stop_lo:
            return 1
        if steps >= cap:
            return -3
        b = _band(s2, hi, lo)
        if b >= 0 and b != last:
            if b >= 1 and state[b] == 1:
                counts[b] += 1
                state[b] = 2
            elif b >= 1 and state[b] == 0:
                state[b] = 2
            if b + 1 < nb:
                state[b + 1] = 1
            last = b


@njit(cache=True)
def walk_counts_batch(master, first, trials, hi, lo, cap):
    """N_{n,k} per trial for walks started at (r_1, 0) on C_1 and stopped on C_0 (centre 0)."""
    nb = hi.shape[0]
    out = np.zeros((trials, nb), dtype=np.int64)
    status = np.empty(trials, dtype=np.int8)
    state = np.zeros(nb, dtype=np.int64)
    start_x = np.int64(math.floor(math.sqrt(hi[1])))
    stop_lo = lo[0]
    for i in range(trials):
        status[i] = _walk_counts_one(trial_seed_nb(master, first + i), hi, lo, stop_lo, start_x, cap, out[i], state)
    return out, status


def simulate_walk_counts(geometry: AnnulusGeometry, trials: int, master: int, first: int = 0,
                         cap: int = 10**9) -> Tuple[np.ndarray, np.ndarray]:
    """Walks from (r_1, 0) until they reach C_0; returns (counts[trials, n+2], status)."""
    if geometry.center != (0, 0):
        raise ValueError("the batch kernel uses centre 0")
    hi, lo = geometry.squared()
    return walk_counts_batch(master, first, trials, hi, lo, cap)


def replay_walk_path(geometry: AnnulusGeometry, master: int, index: int, cap: int = 10**8) -> np.ndarray:
    """The path of one batch trial, for checks through :func:`count_excursions`."""
    hi, lo = geometry.squared()
    return _replay(np.uint64(trial_seed(master, index)), np.int64(math.floor(math.sqrt(hi[1]))), lo[0], cap)


@njit(cache=True)
def _replay(seed, start_x, stop_lo, cap):
    st = rng_init(seed)
    buf = np.empty((1024, 2), dtype=np.int64)
    buf[0, 0] = start_x
    buf[0, 1] = 0
    x = start_x
    y = 0
    t = 0
    while t < cap:
        k = next_below(st, 2, 4)
        if k == 0:
            x += 1
        elif k == 1:
            x -= 1
        elif k == 2:
            y += 1
        else:
            y -= 1
        t += 1
        if t >= buf.shape[0]:
            nbuf = np.empty((2 * buf.shape[0], 2), dtype=np.int64)
            nbuf[: buf.shape[0]] = buf
            buf = nbuf
        buf[t, 0] = x
        buf[t, 1] = y
        if x * x + y * y > stop_lo:
            break
    return buf[: t + 1].copy()


# ---------------------------------------------------------------------------
# Markov jump chain


@dataclass
class MJPChain:
    n: int
    states: np.ndarray
    upcrossings: np.ndarray  # index l = 1..n+1


@njit(cache=True)
def _mjp_core(seed, n, start, p_top, cap):
    st = rng_init(seed)
    buf = np.empty(64, dtype=np.int64)
    buf[0] = start
    s = start
    t = 0
    while s != 0:
        if t >= cap:
            return buf[: t + 1].copy(), False
        if s == n + 1:
            s = n
        elif s == n:
            s = n + 1 if next_double(st) < p_top else n - 1
        else:
            s = s + 1 if next_below(st, 1, 2) == 0 else s - 1
        t += 1
        if t >= buf.shape[0]:
            nb = np.empty(2 * buf.shape[0], dtype=np.int64)
            nb[: buf.shape[0]] = buf
            buf = nb
        buf[t] = s
    return buf[: t + 1].copy(), True


def simulate_mjp_upcrossings(n: int, seed: int, start_state: int = 1, p_top: Optional[float] = None,
                             cap: int = 10**8) -> MJPChain:
    """Run the chain on {0..n+1} to absorption at 0 and count upcrossings.

    Interior states step +/-1 with probability 1/2, n+1 -> n surely and
    n -> n+1 with probability p_top = 1 / (1 + 3 log n) by default.
    u_1 counts the entry into a start at 1 as one upcrossing, matching the
    walk ledger convention.

    Raises
    ------
    RuntimeError
        If absorption does not occur within ``cap`` steps.
    """
    if n < 2:
        raise ValueError("n >= 2")
    if not 1 <= start_state <= n + 1:
        raise ValueError("start_state must lie in [1, n+1]")
    if p_top is None:
        p_top = 1.0 / (1.0 + 3 * math.log(n))
    states, ok = _mjp_core(np.uint64(seed & (2**64 - 1)), n, start_state, p_top, cap)
    if not ok:
        raise RuntimeError("step cap reached before absorption")
    return MJPChain(n=n, states=states, upcrossings=upcrossings_from_states(states, n))


@njit(cache=True)
def mjp_counts_batch(master, first, trials, n, p_top, cap):
    out = np.zeros((trials, n + 2), dtype=np.int64)
    status = np.ones(trials, dtype=np.int8)
    for i in range(trials):
        st = rng_init(trial_seed_nb(master, first + i))
        s = 1
        out[i, 1] = 1
        t = 0
        while s != 0:
            if t >= cap:
                status[i] = -3
                break
            if s == n + 1:
                s = n
            elif s == n:
                if next_double(st) < p_top:
                    s = n + 1
                    out[i, s] += 1
                else:
                    s = n - 1
            else:
                if next_below(st, 1, 2) == 0:
                    s += 1
                    out[i, s] += 1
                else:
                    s -= 1
            t += 1
    return out, status


def mjp_success_probability(n: int, delta: float, p_top: Optional[float] = None, top_ratio: Optional[float] = None) -> float:
    """Exact P(Y) for the jump chain started at 1, by dynamic programming over u_2..u_{n+1}.

    u_{l+1} given u_l = b is a sum of b geometric counts with success 1/2
    (success 1 - p_top at the top level).
    """
    if p_top is None:
        p_top = 1.0 / (1.0 + 3 * math.log(n))
    if top_ratio is None:
        top_ratio = (1 - p_top) / p_top
    B = int(2 * n * n + n ** (1 + delta)) + 2
    grid = np.arange(B)
    dist = np.zeros(B)
    dist[1] = 1.0
    for k in range(2, n + 1):
        new = np.zeros(B)
        for a in np.flatnonzero(dist):
            new += dist[a] * stats.nbinom.pmf(grid, a, 0.5)
        keep = np.abs(grid - 2 * k * k) <= k ** (1 + delta)
        dist = new * keep
    lo_top = (2 * n * n - n ** (1 + delta)) / top_ratio
    hi_top = n**3
    tot = 0.0
    for a in np.flatnonzero(dist):
        tot += dist[a] * (stats.nbinom.cdf(hi_top, a, 1 - p_top) - stats.nbinom.cdf(math.ceil(lo_top) - 1, a, 1 - p_top))
    return float(tot)


def success_rate(counts: np.ndarray, n: int, delta: float, top_ratio: float) -> Tuple[int, int]:
    """(number of successful profiles, number of profiles)."""
    hits = sum(_success(row, n, delta, top_ratio)[0] for row in counts)
    return int(hits), int(len(counts))


# ---------------------------------------------------------------------------
# comparison


class SampleStarvation(ValueError):
    pass


def _two_sample_chi2(a: np.ndarray, b: np.ndarray, min_bin: float = 5.0) -> Tuple[float, float, int]:
    top = int(max(a.max(), b.max()))
    ca = np.bincount(a, minlength=top + 1).astype(float)
    cb = np.bincount(b, minlength=top + 1).astype(float)
    # pool adjacent values until both expected counts reach min_bin
    groups, cur, acc = [], [], 0.0
    tot = ca + cb
    fa, fb = len(a) / (len(a) + len(b)), len(b) / (len(a) + len(b))
    for v in range(top + 1):
        cur.append(v)
        acc += tot[v]
        if acc * min(fa, fb) >= min_bin:
            groups.append(cur)
            cur, acc = [], 0.0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    if len(groups) < 2:
        return 0.0, 1.0, 0
    table = np.array([[ca[g].sum() for g in groups], [cb[g].sum() for g in groups]])
    chi2, p, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(chi2), float(p), int(dof)


def excursion_vs_mjp_divergence(walk_samples: np.ndarray, mjp_samples: np.ndarray, n: int,
                                min_samples: int = 100) -> Dict:
    """Per-level comparison of walk counts N_{n,k} and chain upcrossings u_k, k = 2..n.

    Returns per-level means, variances, relative mean gaps, standardized
    mean gaps, two-sample chi-square on the marginal histograms, and the
    maximal standardized gap.
    """
    if len(walk_samples) < min_samples or len(mjp_samples) < min_samples:
        raise SampleStarvation("too few samples for a comparison")
    levels = []
    for k in range(2, n + 1):
        a = np.asarray(walk_samples[:, k])
        b = np.asarray(mjp_samples[:, k])
        ma, mb = a.mean(), b.mean()
        va, vb = a.var(ddof=1), b.var(ddof=1)
        se = math.sqrt(va / len(a) + vb / len(b))
        chi2, p, dof = _two_sample_chi2(a, b)
        levels.append({"level": k, "walk_mean": ma, "mjp_mean": mb, "walk_var": va, "mjp_var": vb,
                       "rel_gap": abs(ma - mb) / mb if mb else float("inf"),
                       "z": (ma - mb) / se if se > 0 else 0.0, "chi2": chi2, "p": p, "dof": dof})
    return {"n": n, "levels": levels, "max_abs_z": max(abs(l["z"]) for l in levels),
            "max_rel_gap": max(l["rel_gap"] for l in levels)}


def traversal_probability_exact(geometry: AnnulusGeometry, k: int) -> float:
    """P(from (r_k, 0), reach C_{k+1} before C_{k-1}) by the annulus linear solve."""
    if not 1 <= k <= geometry.n:
        raise ValueError("k must be in 1..n")
    r_in, r_out = geometry.radii[k + 1], geometry.radii[k - 1]
    s, h = _annulus_cached(float(r_in), float(r_out))
    return 1.0 - float(h[s.index((int(geometry.radii[k]), 0))])


def level_log_ratio(geometry: AnnulusGeometry, k: int) -> float:
    """The continuum value log(r_{k-1}/r_k) / log(r_{k-1}/r_{k+1}) of the same probability."""
    r = geometry.radii
    return math.log(r[k - 1] / r[k]) / math.log(r[k - 1] / r[k + 1])


def _lattice_disks_meet(x, y, r: float) -> bool:
    """Whether {z in Z^2 : |z - x| <= r} and {z : |z - y| <= r} share a point."""
    dx, dy = y[0] - x[0], y[1] - x[1]
    d2 = dx * dx + dy * dy
    if d2 > 4 * r * r:
        return False
    if math.sqrt(d2) <= 2 * r - 2:
        # the intersection contains a unit disk around the midpoint
        return True
    mx, my = (x[0] + y[0]) / 2, (y[1] + x[1]) / 2
    h = math.ceil(r) + 1
    # the lens lies within distance sqrt(r^2 - d^2/4) + 1 of the midpoint
    w = math.sqrt(max(0.0, r * r - d2 / 4)) + 1
    r2 = r * r
    for a in range(math.floor(mx - w), math.ceil(mx + w) + 1):
        for b in range(math.floor(my - w), math.ceil(my + w) + 1):
            if (a - x[0]) ** 2 + (b - x[1]) ** 2 <= r2 and (a - y[0]) ** 2 + (b - y[1]) ** 2 <= r2:
                return True
    return False


def separation_level(geometry: AnnulusGeometry, x, y) -> int:
    """l(x, y) = min{m >= 1 : D(x, r_m) and D(y, r_m) are disjoint}; n + 2 if none is."""
    for m in range(1, geometry.n + 2):
        if not _lattice_disks_meet(x, y, geometry.radii[m]):
            return m
    return geometry.n + 2
