"""Simple random walk on Z^d with local-time bookkeeping and favorite-site events.

The walk is S_0 = start, S_{n+1} = S_n +/- e_i with each of the 2d unit
steps equally likely.  The local time xi(x, n) counts the visits to x at
times 0..n (the starting visit included), and K(n) is the set of sites at
which xi(., n) attains its maximum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _walkcore as core
from ._rng import direction_bits

LatticePoint = Tuple[int, ...]

DEFAULT_STEP_CAP = 10**9
ENUMERATION_CAP = 10**8
_INT64_MAX = np.iinfo(np.int64).max


# ---------------------------------------------------------------------------
# stop rules


@dataclass(frozen=True)
class FixedSteps:
    """Run exactly ``steps`` steps."""

    steps: int
    retain_path: bool = True


@dataclass(frozen=True)
class ExitDisk:
    """Run until the first exit from the closed Euclidean ball D(0, radius)."""

    radius: float
    retain_path: bool = True


@dataclass(frozen=True)
class LocalTimeLevel:
    """Run until some site first reaches local time ``m``."""

    m: int
    retain_path: bool = True


class CappedRunError(RuntimeError):
    """Raised when a stop rule is not met within the step cap.

    The partially simulated record is available as ``partial``.
    """

    def __init__(self, message: str, partial: "WalkRecord"):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# records


@dataclass
class WalkRecord:
    """A seeded lattice path.

    Attributes
    ----------
    dimension : int
    seed : int
    length : int
        Number of steps n; the path has n + 1 points.
    path : ndarray of shape (n + 1, d) or None
        Omitted when the stop rule asked not to retain the path.
    start : tuple of int
    end : tuple of int
        Final position (always kept).
    """

    dimension: int
    seed: int
    length: int
    path: Optional[np.ndarray]
    start: LatticePoint
    end: LatticePoint = ()

    def require_path(self) -> np.ndarray:
        if self.path is None:
            raise ValueError("walk was simulated without retaining the path")
        return self.path

    @classmethod
    def from_points(cls, points, seed: int = 0) -> "WalkRecord":
        """Build a record from an explicit nearest-neighbour path."""
        path = np.atleast_2d(np.asarray(points, dtype=np.int64))
        if path.ndim != 2 or path.shape[0] == 0:
            raise ValueError("need a non-empty sequence of points")
        if path.shape[0] > 1:
            steps = np.abs(np.diff(path, axis=0)).sum(axis=1)
            if np.any(steps != 1):
                raise ValueError("consecutive points must differ by one unit step")
        return cls(
            dimension=path.shape[1],
            seed=seed,
            length=path.shape[0] - 1,
            path=path,
            start=tuple(int(v) for v in path[0]),
            end=tuple(int(v) for v in path[-1]),
        )


@dataclass
class LocalTimeField:
    """Site -> local time map at a fixed time, with maximum and argmax set."""

    counts: Dict[LatticePoint, int]
    time: int
    max_value: int
    argmax_set: frozenset

    def __getitem__(self, x) -> int:
        return self.counts.get(tuple(x), 0)


@dataclass
class FavoriteEventLog:
    """Stopping times T_m^k, locations L_m^k and the events M_m^k.

    Attributes
    ----------
    entries : dict
        (m, k) -> (T_m^k, L_m^k) for every level crossing seen on the path.
    m_max : int
        Largest m for which T_{m+1}^1 was reached, so that every flag at
        levels <= m_max is resolved.  0 when no level is fully resolved.
    flags : dict
        (m, k) -> bool, the event T_m^k < T_{m+1}^1, for resolved pairs.
    N : dict
        m -> sup{k : T_m^k < T_{m+1}^1} for fully resolved levels.
    m_limit : int
        Highest level requested.
    """

    entries: Dict[Tuple[int, int], Tuple[int, LatticePoint]]
    m_max: int
    flags: Dict[Tuple[int, int], bool]
    N: Dict[int, int]
    m_limit: int
    partial: bool = False

    def time(self, m: int, k: int) -> Optional[int]:
        e = self.entries.get((m, k))
        return None if e is None else e[0]

    def records(self) -> List[dict]:
        """Rows for JSONL output, one per resolved (m, k) crossing."""
        rows = []
        for (m, k), (t, loc) in sorted(self.entries.items()):
            if (m, k) in self.flags:
                rows.append({"m": m, "k": k, "t": t, "loc": list(loc), "simultaneous": self.flags[(m, k)]})
        return rows


# ---------------------------------------------------------------------------
# simulation


def _check_start(start: Sequence[int], dimension: int, cap: int) -> np.ndarray:
    if len(start) != dimension:
        raise ValueError("start has the wrong dimension")
    for v in start:
        if abs(int(v)) > _INT64_MAX - cap:
            raise OverflowError("coordinates could leave the signed 64-bit range")
    return np.asarray(start, dtype=np.int64)


def simulate_walk(dimension: int, steps: int, seed: int, stop_rule=None, start=None,
                  step_cap: int = DEFAULT_STEP_CAP) -> WalkRecord:
    """Simulate a simple random walk.

    Parameters
    ----------
    dimension : int
        Lattice dimension d >= 1.
    steps : int
        Number of steps for the fixed-steps rule (ignored by the other rules).
    seed : int
        64-bit seed; the path is a deterministic function of the arguments.
    stop_rule : FixedSteps, ExitDisk or LocalTimeLevel, optional
        Defaults to ``FixedSteps(steps)``.
    start : sequence of int, optional
        Starting site, the origin by default.
    step_cap : int
        Upper bound on the number of steps for the unbounded rules.

    Returns
    -------
    WalkRecord

    Raises
    ------
    CappedRunError
        If an unbounded stop rule is not met within ``step_cap`` steps.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if stop_rule is None:
        stop_rule = FixedSteps(steps)
    if start is None:
        start = (0,) * dimension
    seed = int(seed) & ((1 << 64) - 1)
    nbits = direction_bits(dimension)

    if isinstance(stop_rule, FixedSteps):
        st = _check_start(start, dimension, stop_rule.steps)
        path = core.gen_path(np.uint64(seed), dimension, stop_rule.steps, st, nbits)
        return _record(dimension, seed, path, stop_rule.retain_path, stop_rule.steps, st)
    st = _check_start(start, dimension, step_cap)
    if isinstance(stop_rule, ExitDisk):
        r2 = math.floor(stop_rule.radius**2)
        path, n, ok = core.gen_until_exit(np.uint64(seed), dimension, r2, step_cap, st, nbits,
                                          stop_rule.retain_path)
    elif isinstance(stop_rule, LocalTimeLevel):
        if stop_rule.m < 1:
            raise ValueError("level m must be >= 1")
        path, n, ok = core.walk_until_level(np.uint64(seed), dimension, stop_rule.m, step_cap, st,
                                            nbits, stop_rule.retain_path)
    else:
        raise TypeError(f"unknown stop rule {stop_rule!r}")
    rec = _record(dimension, seed, path, stop_rule.retain_path, n, st)
    if not ok:
        raise CappedRunError(f"stop rule not met within {step_cap} steps", rec)
    return rec


def _record(dimension, seed, path, retain, n, start) -> WalkRecord:
    return WalkRecord(
        dimension=dimension,
        seed=seed,
        length=int(n),
        path=path if retain else None,
        start=tuple(int(v) for v in start),
        end=tuple(int(v) for v in path[-1]),
    )


# ---------------------------------------------------------------------------
# local times


def _site_keys(points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Unique rows and, for each point, the index of its row."""
    uniq, inv = np.unique(points, axis=0, return_inverse=True)
    return uniq, inv.reshape(-1)


def local_time_profile(walk: WalkRecord, n: Optional[int] = None) -> LocalTimeField:
    """Local times xi(., n) of a retained walk.

    Parameters
    ----------
    walk : WalkRecord
    n : int, optional
        Time horizon, ``walk.length`` by default.

    Returns
    -------
    LocalTimeField
    """
    path = walk.require_path()
    if n is None:
        n = walk.length
    if not 0 <= n <= walk.length:
        raise ValueError(f"n={n} outside [0, {walk.length}]")
    uniq, inv = _site_keys(path[: n + 1])
    cnt = np.bincount(inv, minlength=len(uniq))
    counts = {tuple(int(v) for v in row): int(c) for row, c in zip(uniq, cnt)}
    top = int(cnt.max())
    arg = frozenset(tuple(int(v) for v in row) for row, c in zip(uniq, cnt) if c == top)
    return LocalTimeField(counts=counts, time=n, max_value=top, argmax_set=arg)


def argmax_trace(walk: WalkRecord) -> Tuple[np.ndarray, np.ndarray]:
    """xi*(n) and #K(n) for every n, maintained incrementally along the path."""
    path = walk.require_path()
    _, inv = _site_keys(path)
    counts = np.zeros(inv.max() + 1, dtype=np.int64)
    at_level = np.zeros(len(path) + 2, dtype=np.int64)
    xi_star = np.empty(len(path), dtype=np.int64)
    nk = np.empty(len(path), dtype=np.int64)
    top = 0
    for t, s in enumerate(inv):
        c = counts[s] + 1
        counts[s] = c
        at_level[c - 1] -= 1
        at_level[c] += 1
        if c > top:
            top = c
        xi_star[t] = top
        nk[t] = at_level[top]
    return xi_star, nk


# ---------------------------------------------------------------------------
# favorite-site events


def _level_crossings(inv: np.ndarray, m_top: int) -> Dict[int, List[int]]:
    """For each m <= m_top, the times at which a site reaches local time m (in order)."""
    order = np.argsort(inv, kind="stable")
    sorted_ids = inv[order]
    starts = np.r_[0, np.flatnonzero(np.diff(sorted_ids)) + 1]
    group_start = np.repeat(starts, np.diff(np.r_[starts, len(inv)]))
    visit = np.empty(len(inv), dtype=np.int64)
    visit[order] = np.arange(len(inv)) - group_start + 1  # local time reached at each step
    out = {}
    for m in range(1, m_top + 1):
        out[m] = np.flatnonzero(visit == m).tolist()
    return out


def favorite_event_scan(walk: WalkRecord, m_limit: int) -> FavoriteEventLog:
    """Stopping times T_m^k, locations L_m^k and events M_m^k for m <= m_limit.

    T_m^k is the time at which the k-th distinct site reaches local time m.
    The flag of (m, k) is T_m^k < T_{m+1}^1.  It is also evaluated through
    the path-avoidance form: for j = 2..k the walk must not visit any of
    L_m^1..L_m^{j-1} during (T_m^{j-1}, T_m^j].  The two evaluations are
    asserted to agree.

    Parameters
    ----------
    walk : WalkRecord
        Must retain its path.
    m_limit : int
        Highest level of interest.

    Returns
    -------
    FavoriteEventLog
        ``partial`` is set when T_{m_limit+1}^1 was not reached on the path.
    """
    path = walk.require_path()
    if m_limit < 1:
        raise ValueError("m_limit must be >= 1")
    uniq, inv = _site_keys(path)
    crossings = _level_crossings(inv, m_limit + 1)
    entries = {}
    for m in range(1, m_limit + 2):
        locs = path[crossings[m]].tolist()
        for k, (t, loc) in enumerate(zip(crossings[m], locs), start=1):
            entries[(m, k)] = (t, tuple(loc))

    flags: Dict[Tuple[int, int], bool] = {}
    N: Dict[int, int] = {}
    m_max = 0
    for m in range(1, m_limit + 1):
        above = crossings[m + 1]
        t_up = above[0] if above else None
        ks = crossings[m]
        for k, t in enumerate(ks, start=1):
            flags[(m, k)] = t_up is None or t < t_up
        if t_up is not None:
            # every later k is resolved false; record up to one past the last true flag
            N[m] = sum(1 for t in ks if t < t_up)
            if len(ks) > N[m]:
                flags[(m, N[m] + 1)] = False
            m_max = m
        _assert_avoidance(inv, crossings[m], flags, m)
    entries = {key: val for key, val in entries.items() if key[0] <= m_limit or key[1] == 1}
    return FavoriteEventLog(entries=entries, m_max=m_max, flags=flags, N=N, m_limit=m_limit,
                            partial=not crossings[m_limit + 1])


def _assert_avoidance(inv: np.ndarray, times: List[int], flags, m: int) -> None:
    """Cross-check flags against the intersection of avoidance events."""
    held = True
    for j in range(2, len(times) + 1):
        if (m, j) not in flags:
            break
        if held:  # the events are nested, so once one fails every later one must too
            prev = inv[times[: j - 1]]
            seg = inv[times[j - 2] + 1: times[j - 1] + 1]
            held = not np.isin(seg, prev).any()
        if held != flags[(m, j)]:
            raise AssertionError(f"event flag mismatch at (m={m}, k={j})")


# ---------------------------------------------------------------------------
# pairs of thick points (d >= 3)


def pair_thick_statistic(walk: WalkRecord, n: int, epsilon: float, alpha_const: float,
                         delta: Optional[float] = None) -> int:
    """Count pairs of thick points created within a short time window.

    Counts i in [1, n] and j in (i, min(i + alpha log n, n)] such that both
    S_i and S_j have local time at least (1 - eps) alpha log n at time n,
    S_i != S_j, and neither S_i nor S_j is visited at times i+1..j-1.

    Parameters
    ----------
    walk : WalkRecord
        Retained path of a walk in d >= 3.
    n : int
    epsilon : float
    alpha_const : float
        The constant -1/log(1 - gamma_d).
    delta : float, optional
        When given, warns if (1 + delta)(1 - eps)^2 <= 1 + delta/2.

    Returns
    -------
    int
    """
    if walk.dimension < 3:
        raise ValueError("pair statistic is defined for d >= 3")
    path = walk.require_path()
    if not 0 <= n <= walk.length:
        raise ValueError("n out of range")
    if delta is not None and (1 + delta) * (1 - epsilon) ** 2 <= 1 + delta / 2:
        warnings.warn("(1+delta)(1-eps)^2 <= 1+delta/2: parameters outside the useful range",
                      stacklevel=2)
    if n < 2:
        return 0
    logn = math.log(n)
    thresh = (1 - epsilon) * alpha_const * logn
    if thresh > n + 1:
        return 0
    window = int(math.floor(alpha_const * logn))
    _, inv = _site_keys(path[: n + 1])
    xi = np.bincount(inv)
    thick = xi[inv] >= thresh
    total = 0
    for i in range(1, n + 1):
        if not thick[i]:
            continue
        si = inv[i]
        for j in range(i + 1, min(i + window, n) + 1):
            sj = inv[j]
            if sj == si:
                break  # S_i is revisited: no later j qualifies
            if thick[j]:
                between = inv[i + 1: j]
                if not (np.any(between == sj)):
                    total += 1
    return total


# ---------------------------------------------------------------------------
# exhaustive enumeration


@dataclass
class ExactDistribution:
    """Exact law of #K(n) and E[xi*(n)] from exhaustive enumeration."""

    dimension: int
    n: int
    counts: Dict[int, int]
    total: int
    mean_xi_star: float

    @property
    def probabilities(self) -> Dict[int, float]:
        return {k: c / self.total for k, c in self.counts.items()}

    def probability(self, k: int) -> float:
        return self.counts.get(k, 0) / self.total


def enumerate_exact_distribution(dimension: int, n: int) -> ExactDistribution:
    """Enumerate all (2d)^n paths of length n.

    Raises
    ------
    ValueError
        If (2d)^n exceeds the cap of 10^8 paths.
    """
    if dimension < 1 or n < 0:
        raise ValueError("need dimension >= 1 and n >= 0")
    total = (2 * dimension) ** n
    if total > ENUMERATION_CAP:
        raise ValueError(f"(2d)^n = {total} exceeds the enumeration cap {ENUMERATION_CAP}")
    hist, xi_sum = core.enumerate_argmax(dimension, n)
    counts = {int(k): int(c) for k, c in enumerate(hist) if c > 0}
    return ExactDistribution(dimension=dimension, n=n, counts=counts, total=total,
                             mean_xi_star=float(xi_sum) / total)
