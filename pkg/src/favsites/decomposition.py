"""Two-dimensional split of local time into jump-chain and lazy parts.

A two-step excursion (x, x+e1, x) that starts at an even time is removed
from the path to give the jump chain; those starting at odd times and
going the other way, (x, x-e1, x), are removed for the primed chain.
Local time then splits as

    xi(x, n) = xi~(x, N_n) + xi_L(x, n)  =  xi~'(x, N'_n) + xi'_L(x, n).

Sites are 2D integer points.  Internally every site is packed into one
int64 key so numpy set operations can be used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Optional, Tuple

import numpy as np
from numba import njit

from .walk import FavoriteEventLog, LocalTimeField, WalkRecord, favorite_event_scan, local_time_profile

_OFF = np.int64(1 << 30)  # packed coordinates must lie in (-2^30, 2^30)
SIGMA2 = 16.0 / 225.0


def pack(points: np.ndarray) -> np.ndarray:
    """Pack (n, 2) integer points into int64 keys (order preserving in x1)."""
    p = np.asarray(points, dtype=np.int64)
    if p.size and np.abs(p).max() >= _OFF:
        raise OverflowError("coordinates too large to pack")
    return ((p[..., 0] + _OFF) << np.int64(32)) | (p[..., 1] + _OFF)


def unpack(keys) -> np.ndarray:
    k = np.asarray(keys, dtype=np.int64)
    return np.stack([(k >> np.int64(32)) - _OFF, (k & np.int64(0xFFFFFFFF)) - _OFF], axis=-1)


_E1 = np.int64(1) << np.int64(32)  # key offset of +e1


def is_even_site(x) -> bool:
    return (int(x[0]) + int(x[1])) % 2 == 0


def default_c_star() -> float:
    """Smallest c with (16/15) c^2 / (2 sigma^2) >= 18."""
    return math.sqrt(18.0 * 2.0 * SIGMA2 * 15.0 / 16.0)


# ---------------------------------------------------------------------------
# excursion index sets


def excursion_sets(path: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Index sets L and L' for the whole retained path.

    L  = {k even >= 2 : S_{k-2} = S_k = S_{k-1} - e1}
    L' = {k odd  >= 3 : S_{k-2} = S_k = S_{k-1} + e1}
    """
    p = np.asarray(path)
    if len(p) < 3:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    back = np.all(p[2:] == p[:-2], axis=1)
    dx = p[1:-1, 0] - p[:-2, 0]
    k = np.arange(2, len(p))
    right = back & (dx == 1) & (k % 2 == 0)
    left = back & (dx == -1) & (k % 2 == 1)
    return k[right], k[left]


def _kept_mask(length: int, lset: np.ndarray) -> np.ndarray:
    kept = np.ones(length + 1, dtype=bool)
    kept[lset - 1] = False
    kept[lset] = False
    return kept


# ---------------------------------------------------------------------------
# pairings


@dataclass(frozen=True)
class SitePairing:
    """A perfect matching of Z^2 into horizontal pairs (x, x+e1).

    ``kind`` is "X" (left member has x1+x2 even), "Y" (left member has x1
    even) or "Y'" (left member has x1 odd).
    """

    kind: str

    def __post_init__(self):
        if self.kind not in ("X", "Y", "Y'"):
            raise ValueError(f"unknown pairing {self.kind!r}")

    def is_left(self, x) -> bool:
        if self.kind == "X":
            return (int(x[0]) + int(x[1])) % 2 == 0
        if self.kind == "Y":
            return int(x[0]) % 2 == 0
        return int(x[0]) % 2 != 0

    def pair_of(self, x) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        """(left, right) members of the pair containing x."""
        x = (int(x[0]), int(x[1]))
        if self.is_left(x):
            return x, (x[0] + 1, x[1])
        return (x[0] - 1, x[1]), x

    def partner(self, x) -> Tuple[int, int]:
        a, b = self.pair_of(x)
        return b if (int(x[0]), int(x[1])) == a else a

    def left_keys(self, keys: np.ndarray) -> np.ndarray:
        """Vectorized left-member key for packed sites."""
        pts = unpack(keys)
        if self.kind == "X":
            left = (pts[..., 0] + pts[..., 1]) % 2 == 0
        elif self.kind == "Y":
            left = pts[..., 0] % 2 == 0
        else:
            left = pts[..., 0] % 2 != 0
        return np.where(left, keys, keys - _E1)


PAIRING_X = SitePairing("X")


def paired_profile(field: LocalTimeField, pairing: SitePairing = PAIRING_X) -> Dict[Tuple, Tuple[int, int]]:
    """Map each visited pair, keyed by its left member, to (xi^-, xi^+)."""
    out: Dict[Tuple, Tuple[int, int]] = {}
    for x in field.counts:
        left, right = pairing.pair_of(x)
        if left in out:
            continue
        a = field.counts.get(left, 0)
        b = field.counts.get(right, 0)
        out[left] = (min(a, b), max(a, b))
    return out


# ---------------------------------------------------------------------------
# the view


@dataclass
class DecompositionView:
    """Jump-chain / lazy split of a 2D walk at time n.

    Attributes
    ----------
    n : int
    L, Lp : ndarray
        Excursion times (whole retained path; entries <= n + 1 matter at time n).
    N, Np : ndarray
        Clocks N_j, N'_j for j = 0..n.
    jump_times, jump_times_p : ndarray
        Original times kept in the jump chains up to N_n (resp. N'_n).
    jump_chain, jump_chain_p : ndarray
        Materialized S~[0, N_n] and S~'[0, N'_n].
    xi_tilde, xi_tilde_p : dict
        xi~(x, N_n) and xi~'(x, N'_n).
    xi_lazy, xi_lazy_p : dict
        xi_L(x, n) and xi'_L(x, n) (zero entries omitted).
    holding, holding_p : dict
        (x, l) -> h(x, l), for the jump-chain visits up to N_n.  The entry of
        the current visit may be incomplete when more excursions follow n.
    pending, pending_p : bool
        Whether n + 1 is in L (resp. L').
    """

    n: int
    L: np.ndarray
    Lp: np.ndarray
    N: np.ndarray
    Np: np.ndarray
    jump_times: np.ndarray
    jump_times_p: np.ndarray
    jump_chain: np.ndarray
    jump_chain_p: np.ndarray
    xi_tilde: Dict[Tuple[int, int], int]
    xi_tilde_p: Dict[Tuple[int, int], int]
    xi_lazy: Dict[Tuple[int, int], int]
    xi_lazy_p: Dict[Tuple[int, int], int]
    holding: Dict[Tuple[Tuple[int, int], int], int]
    holding_p: Dict[Tuple[Tuple[int, int], int], int]
    pending: bool
    pending_p: bool

    def xi_tilde_at(self, x) -> int:
        return self.xi_tilde.get(tuple(x), 0)

    def xi_lazy_at(self, x) -> int:
        return self.xi_lazy.get(tuple(x), 0)

    def reconstruct(self, primed: bool = False) -> np.ndarray:
        """Re-insert the holding excursions into the jump chain.

        Returns S[0, n], or S[0, n-1] when time n itself is a pending
        excursion step.
        """
        chain = self.jump_chain_p if primed else self.jump_chain
        hold = self.holding_p if primed else self.holding
        step = np.array([-1, 0]) if primed else np.array([1, 0])
        parity = 1 if primed else 0
        visits: Dict[Tuple[int, int], int] = {}
        out = []
        for j, x in enumerate(chain):
            xt = (int(x[0]), int(x[1]))
            visits[xt] = visits.get(xt, 0) + 1
            out.append(x)
            if j % 2 == parity:
                for _ in range(hold.get((xt, visits[xt]), 0)):
                    out.append(x + step)
                    out.append(x)
        return np.array(out, dtype=np.int64).reshape(-1, 2)


def _counts(keys: np.ndarray) -> Dict[Tuple[int, int], int]:
    if len(keys) == 0:
        return {}
    u, c = np.unique(keys, return_counts=True)
    pts = unpack(u)
    return {(int(p[0]), int(p[1])): int(v) for p, v in zip(pts, c)}


def _holding(chain_times: np.ndarray, chain_keys: np.ndarray, N_full: np.ndarray, parity: int,
             horizon: int) -> Dict[Tuple[Tuple[int, int], int], int]:
    """h(x, l) from the clock: number of excursions after each jump-chain visit."""
    out = {}
    visits: Dict[int, int] = {}
    # first and last original time with N_j = jump time j (restricted to the horizon)
    nj = N_full[: horizon + 1]
    firsts = np.searchsorted(nj, np.arange(len(chain_keys)), side="left")
    lasts = np.searchsorted(nj, np.arange(len(chain_keys)), side="right") - 1
    pts = unpack(chain_keys)
    for j in range(len(chain_keys)):
        key = int(chain_keys[j])
        visits[key] = visits.get(key, 0) + 1
        if j % 2 != parity:
            continue
        x = (int(pts[j][0]), int(pts[j][1]))
        out[(x, visits[key])] = int((lasts[j] - firsts[j]) // 2)
    return out


def _lazy(path: np.ndarray, lset: np.ndarray, n: int, pending: bool, primed: bool,
          length: int) -> Dict[Tuple[int, int], int]:
    """xi_L(., n) (or the primed version) straight from the definition."""
    ks = lset[(lset >= 2) & (lset <= n)]
    homes = pack(path[ks - 2])
    base = _counts(homes)
    # the partner of each home is home + e1 (unprimed) or home - e1 (primed)
    sgn = -1 if primed else 1
    out = dict(base)
    for (a, b), c in base.items():
        out[(a + sgn, b)] = out.get((a + sgn, b), 0) + c
    if pending:
        h = path[n - 1]
        key = (int(h[0]) + sgn, int(h[1]))
        out[key] = out.get(key, 0) + 1
    return {k: v for k, v in out.items() if v}


def decompose(walk: WalkRecord, n: Optional[int] = None, check: bool = True) -> DecompositionView:
    """Jump-chain / lazy decomposition of a retained 2D walk at time n.

    Whether n + 1 belongs to L needs S_{n+1}; when n is the last time of
    the record the walk is treated as ending there, so n + 1 is not in L.

    Parameters
    ----------
    walk : WalkRecord
        Two-dimensional walk with retained path.
    n : int, optional
        Defaults to the walk length.
    check : bool
        Assert the local-time identities at every visited site.

    Raises
    ------
    ValueError
        If the walk is not two-dimensional or n is out of range.
    """
    if walk.dimension != 2:
        raise ValueError("decomposition is defined for d = 2")
    path = walk.require_path()
    if n is None:
        n = walk.length
    if not 0 <= n <= walk.length:
        raise ValueError("n out of range")
    L, Lp = excursion_sets(path)
    views = []
    for lset in (L, Lp):
        kept = _kept_mask(walk.length, lset)
        N_full = np.cumsum(kept) - 1
        times = np.flatnonzero(kept[: n + 1])
        views.append((N_full, times))
    (N_full, times), (Np_full, times_p) = views
    pending = bool(np.any(L == n + 1))
    pending_p = bool(np.any(Lp == n + 1))
    keys = pack(path[times])
    keys_p = pack(path[times_p])
    view = DecompositionView(
        n=n, L=L, Lp=Lp, N=N_full[: n + 1], Np=Np_full[: n + 1],
        jump_times=times, jump_times_p=times_p,
        jump_chain=path[times], jump_chain_p=path[times_p],
        xi_tilde=_counts(keys), xi_tilde_p=_counts(keys_p),
        xi_lazy=_lazy(path, L, n, pending, False, walk.length),
        xi_lazy_p=_lazy(path, Lp, n, pending_p, True, walk.length),
        holding=_holding(times, keys, N_full, 0, n),
        holding_p=_holding(times_p, keys_p, Np_full, 1, n),
        pending=pending, pending_p=pending_p,
    )
    if check:
        xi = _counts(pack(path[: n + 1]))
        bad = identity_violations(xi, view)
        if bad:
            raise AssertionError(f"decomposition identity fails at {bad[:5]}")
    return view


def identity_violations(xi: Dict, view: DecompositionView) -> list:
    """Sites where either local-time identity fails."""
    sites = set(xi) | set(view.xi_tilde) | set(view.xi_lazy) | set(view.xi_tilde_p) | set(view.xi_lazy_p)
    bad = []
    for x in sites:
        v = xi.get(x, 0)
        if v != view.xi_tilde.get(x, 0) + view.xi_lazy.get(x, 0):
            bad.append((x, "plain"))
        if v != view.xi_tilde_p.get(x, 0) + view.xi_lazy_p.get(x, 0):
            bad.append((x, "primed"))
    return bad


# ---------------------------------------------------------------------------
# every-prefix identity check (numba)


@njit(cache=True)
def _prefix_violations(ids, right_id, left_id, nsites):
    """Count (time, site) violations of both identities over all prefixes.

    ``ids[t]`` is the site index of S_t; ``right_id``/``left_id`` give the
    index of x + e1 / x - e1 for each site (or -1 when never visited).
    The three sides are updated from their definitions one step at a time
    and compared at every site whose value could have changed, which by
    induction covers every site at every prefix.
    """
    T = ids.shape[0]
    xi = np.zeros(nsites, np.int64)
    xt = np.zeros(nsites, np.int64)
    xtp = np.zeros(nsites, np.int64)
    base = np.zeros(nsites, np.int64)   # completed excursions from each home (plain)
    basep = np.zeros(nsites, np.int64)  # same for primed
    # dense indicator of membership in L / L'
    inL = np.zeros(T + 1, np.bool_)
    inLp = np.zeros(T + 1, np.bool_)
    for k in range(2, T):
        if ids[k - 2] == ids[k]:
            if right_id[ids[k - 2]] == ids[k - 1] and right_id[ids[k - 2]] >= 0 and k % 2 == 0:
                inL[k] = True
            if left_id[ids[k - 2]] == ids[k - 1] and left_id[ids[k - 2]] >= 0 and k % 2 == 1:
                inLp[k] = True
    removed = np.zeros(T, np.bool_)
    removedp = np.zeros(T, np.bool_)
    for k in range(2, T):
        if inL[k]:
            removed[k - 1] = True
            removed[k] = True
        if inLp[k]:
            removedp[k - 1] = True
            removedp[k] = True
    bad = 0
    chk = np.empty(12, np.int64)
    for n in range(T):
        s = ids[n]
        xi[s] += 1
        if not removed[n]:
            xt[s] += 1
        if not removedp[n]:
            xtp[s] += 1
        if n >= 2 and inL[n]:
            base[ids[n - 2]] += 1
        if n >= 2 and inLp[n]:
            basep[ids[n - 2]] += 1
        pend = n + 1 < T and inL[n + 1]
        pendp = n + 1 < T and inLp[n + 1]
        nc = 0
        for back in range(3):
            if n - back >= 0:
                y = ids[n - back]
                chk[nc] = y
                chk[nc + 1] = right_id[y]
                chk[nc + 2] = left_id[y]
                nc += 3
        for c in range(nc):
            y = chk[c]
            if y < 0:
                continue
            # plain lazy count at y: excursions from y, or from y - e1 when y is a partner
            lazy = base[y]
            w = left_id[y]
            if w >= 0:
                lazy += base[w]
                if pend and ids[n - 1] == w:
                    lazy += 1
            lazyp = basep[y]
            w = right_id[y]
            if w >= 0:
                lazyp += basep[w]
                if pendp and ids[n - 1] == w:
                    lazyp += 1
            if xi[y] != xt[y] + lazy:
                bad += 1
            if xi[y] != xtp[y] + lazyp:
                bad += 1
    return bad


def prefix_identity_violations(path: np.ndarray) -> int:
    """Number of identity failures over all prefixes and sites of a 2D path."""
    keys = pack(path)
    uniq, ids = np.unique(keys, return_inverse=True)
    ids = ids.reshape(-1).astype(np.int64)

    def lookup(target):
        pos = np.searchsorted(uniq, target)
        pos = np.minimum(pos, len(uniq) - 1)
        return np.where(uniq[pos] == target, pos, -1).astype(np.int64)

    return int(_prefix_violations(ids, lookup(uniq + _E1), lookup(uniq - _E1), len(uniq)))


# ---------------------------------------------------------------------------
# near-favorite and Theta sets


@dataclass
class NearFavoriteSet:
    """Near-favorite sites at time T_m^k and their even/odd pair-maximum parts."""

    m: int
    k: int
    alpha: float
    members: FrozenSet[Tuple[int, int]]
    even_part: FrozenSet[Tuple[int, int]]
    odd_part: FrozenSet[Tuple[int, int]]


def _time_of(log: FavoriteEventLog, m: int, k: int) -> int:
    t = log.time(m, k)
    if t is None:
        raise ValueError(f"T_{m}^{k} is not reached on this walk")
    return t


def near_favorite_sets(walk: WalkRecord, m: int, k: int, alpha: float,
                       log: Optional[FavoriteEventLog] = None) -> NearFavoriteSet:
    """Sites x with xi(x, T_m^k) in (m - m^alpha, m), outside the X-pairs of L_m^1..L_m^k.

    Raises
    ------
    ValueError
        If T_m^k is not reached, or alpha is outside (0, 1].
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if walk.dimension != 2:
        raise ValueError("near-favorite sets are defined for d = 2")
    if log is None:
        log = favorite_event_scan(walk, m)
    t = _time_of(log, m, k)
    field = local_time_profile(walk, t)
    excluded = {PAIRING_X.pair_of(log.entries[(m, j)][1])[0] for j in range(1, k + 1)}
    lo = m - m**alpha
    members, even, odd = set(), set(), set()
    for x, v in field.counts.items():
        if not lo < v < m:
            continue
        left, right = PAIRING_X.pair_of(x)
        if left in excluded:
            continue
        members.add(x)
        top = max(field.counts.get(left, 0), field.counts.get(right, 0))
        if v == top:
            (even if is_even_site(x) else odd).add(x)
    return NearFavoriteSet(m=m, k=k, alpha=alpha, members=frozenset(members),
                           even_part=frozenset(even), odd_part=frozenset(odd))


def theta_sets(walk: WalkRecord, m: int, k: int, interval: Tuple[float, float],
               c_star: Optional[float] = None, kappa1: float = 0.34,
               log: Optional[FavoriteEventLog] = None):
    """Sites whose jump-chain local time is atypical for their total local time.

    With T = T_m^k and I = [a, b), Theta collects even sites x with xi(x, T)
    in I and either xi~(x, N_T) <= (15/16) a - c m^(1 - kappa1) or
    xi~(x, N_T) > (15/16) b + c m^(1 - kappa1).  Theta' is the same over odd
    sites with the primed chain.  Total local time is the same for both
    decompositions, so xi(x, T) is used on both sides.

    Returns
    -------
    (frozenset, frozenset)
    """
    a, b = interval
    if not (0 <= a and b <= m):
        raise ValueError("interval must lie in [0, m)")
    if c_star is None:
        c_star = default_c_star()
    if log is None:
        log = favorite_event_scan(walk, m)
    t = _time_of(log, m, k)
    if a >= b:
        return frozenset(), frozenset()
    view = decompose(walk, t, check=False)
    field = local_time_profile(walk, t)
    dev = c_star * m ** (1 - kappa1)
    lo = 15.0 / 16.0 * a - dev
    hi = 15.0 / 16.0 * b + dev
    theta, theta_p = set(), set()
    for x, v in field.counts.items():
        if not a <= v < b:
            continue
        if is_even_site(x):
            xt = view.xi_tilde.get(x, 0)
            if xt <= lo or xt > hi:
                theta.add(x)
        else:
            xt = view.xi_tilde_p.get(x, 0)
            if xt <= lo or xt > hi:
                theta_p.add(x)
    return frozenset(theta), frozenset(theta_p)
