"""Lazy local times given the jump chain.

Given the jump chain, the two-step e1-excursions attached to the visits of
the even (resp. odd, primed) jump times are i.i.d. geometric with success
probability 15/16.  Summing them over the i visits of a site gives the
negative binomial p(i, .); stopping at T_m^k truncates it to values
keeping both members of a pair below m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .analytics import NegBinomTable, SUCCESS, negbinom_pmf
from .decomposition import DecompositionView, decompose
from .walk import LocalTimeLevel, WalkRecord, simulate_walk

LOG_FAIL = math.log(1.0 - SUCCESS)
_TABLE = NegBinomTable()


@dataclass(frozen=True)
class HoldingLaw:
    """One of the three holding laws.

    kind : "unconditioned_geometric" | "negbinom_sum" | "truncated_negbinom"
    """

    kind: str
    i: int = 1
    m: Optional[int] = None
    top: Optional[int] = None

    def pmf(self, size: Optional[int] = None) -> np.ndarray:
        if self.kind == "unconditioned_geometric":
            return _TABLE.row(1) if size is None else _pad(_TABLE.row(1), size)
        if self.kind == "negbinom_sum":
            return _TABLE.row(self.i) if size is None else _pad(_TABLE.row(self.i), size)
        if self.kind == "truncated_negbinom":
            return truncated_lazy_pmf(self.i, self.m - self.top)
        raise ValueError(f"unknown kind {self.kind!r}")


def _pad(p: np.ndarray, size: int) -> np.ndarray:
    out = np.zeros(size)
    k = min(size, len(p))
    out[:k] = p[:k]
    return out


def geometric_draws(rng: np.random.Generator, size) -> np.ndarray:
    """Failures before the first success (success 15/16), by inversion.

    h = floor(log U / log(1/16)) with U uniform on (0, 1].
    """
    u = 1.0 - rng.random(size)
    return np.floor(np.log(u) / LOG_FAIL).astype(np.int64)


def _chain_of(jump_chain) -> np.ndarray:
    if isinstance(jump_chain, DecompositionView):
        return jump_chain.jump_chain
    arr = np.asarray(jump_chain, dtype=np.int64)
    return arr.reshape(-1, 2)


def sample_holding_sequence(jump_chain, seed: int, primed: bool = False) -> Dict[Tuple[Tuple[int, int], int], int]:
    """Independent geometric holding counts h(x, l) for a 2D jump chain.

    Parameters
    ----------
    jump_chain : array of shape (N+1, 2) or DecompositionView
        The chain S~[0, N] (for a view, the unprimed chain is used unless
        ``primed``).
    seed : int
    primed : bool
        Attach holdings to odd jump times (the primed chain) instead of even.

    Returns
    -------
    dict
        (x, l) -> h for the l-th visit of x at a holding time.  A chain of
        length zero yields the single draw for its starting point.
    """
    if isinstance(jump_chain, DecompositionView):
        chain = jump_chain.jump_chain_p if primed else jump_chain.jump_chain
    else:
        chain = _chain_of(jump_chain)
    parity = 1 if primed else 0
    rng = np.random.default_rng(seed)
    slots = np.arange(parity, len(chain), 2)
    draws = geometric_draws(rng, len(slots))
    visits: Dict[Tuple[int, int], int] = {}
    out = {}
    for j, x in enumerate(chain):
        xt = (int(x[0]), int(x[1]))
        visits[xt] = visits.get(xt, 0) + 1
        if j % 2 == parity:
            out[(xt, visits[xt])] = int(draws[j // 2])
    return out


def expand_path(jump_chain, holding: Dict, primed: bool = False) -> np.ndarray:
    """Insert h(x, l) excursions (x, x +/- e1, x) after the matching chain visits."""
    chain = _chain_of(jump_chain)
    step = np.array([-1, 0]) if primed else np.array([1, 0])
    parity = 1 if primed else 0
    visits: Dict[Tuple[int, int], int] = {}
    out = []
    for j, x in enumerate(chain):
        xt = (int(x[0]), int(x[1]))
        visits[xt] = visits.get(xt, 0) + 1
        out.append(x)
        if j % 2 == parity:
            for _ in range(holding.get((xt, visits[xt]), 0)):
                out.append(x + step)
                out.append(x)
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def lazy_counts(holding: Dict) -> Dict[Tuple[int, int], int]:
    """Total holding count per home site."""
    out: Dict[Tuple[int, int], int] = {}
    for (x, _), h in holding.items():
        out[x] = out.get(x, 0) + h
    return out


# ---------------------------------------------------------------------------
# truncated law at T_m^k


def truncated_lazy_pmf(i: int, cap: int) -> np.ndarray:
    """p(i, .) on {0, ..., cap - 1}, renormalized; cap = m - xi~+."""
    if cap <= 0:
        raise ValueError("empty support: the pair already has local time >= m")
    return _TABLE.truncated(i, cap)


def sample_lazy_truncated(xi_tilde_pair: Sequence[int], m: int, seed: int) -> int:
    """Draw the pair's lazy count given its jump-chain local times at N_{T_m^k}.

    Parameters
    ----------
    xi_tilde_pair : (i_home, i_partner)
        Jump-chain local times of the home site (whose visits carry the
        holdings) and of its partner.
    m : int

    Raises
    ------
    ValueError
        If max(xi_tilde_pair) >= m.
    """
    i, j = int(xi_tilde_pair[0]), int(xi_tilde_pair[1])
    cap = m - max(i, j)
    p = truncated_lazy_pmf(i, cap)
    if cap == 1:
        return 0
    rng = np.random.default_rng(seed)
    return int(rng.choice(cap, p=p))


def even_endpoint_pmf(i: int, lmax: int) -> np.ndarray:
    """Joint law of (xi_L(x, N^-1_-(n)), xi_L(x, N^-1_+(n))) for the pair at S~_n, n even.

    The last visit's holding is not yet complete at N^-1_-(n), so the law is
    p(i - 1, l1) p(1, l2 - l1).  For i = 1 the first factor is the point mass at 0.
    Returns a (lmax+1, lmax+1) array indexed [l1, l2].
    """
    if i < 1:
        raise ValueError("the pair at S~_n has been visited")
    a = np.zeros(lmax + 1)
    if i == 1:
        a[0] = 1.0
    else:
        a = _pad(_TABLE.row(i - 1), lmax + 1)
    b = _pad(_TABLE.row(1), lmax + 1)
    out = np.zeros((lmax + 1, lmax + 1))
    for l1 in range(lmax + 1):
        out[l1, l1:] = a[l1] * b[: lmax + 1 - l1]
    return out


def truncated_pairs_from_walk(walk: WalkRecord, m: int, k: int = 1) -> List[Tuple[int, int, int]]:
    """(xi~(x, N_T), cap, xi_L(x, T)) for every visited X-pair not containing L_m^1..L_m^k.

    T = T_m^k; the walk must end exactly at T (e.g. a LocalTimeLevel run
    for k = 1).  Pairs with xi~(x) = 0 at their even member carry no
    holding slot and are skipped.
    """
    view = decompose(walk, walk.length, check=False)
    path = walk.require_path()
    from .walk import favorite_event_scan
    log = favorite_event_scan(walk, m)
    excluded = set()
    for j in range(1, k + 1):
        if (m, j) not in log.entries:
            raise ValueError(f"T_{m}^{j} not resolved on this walk")
        x = log.entries[(m, j)][1]
        left = x if (x[0] + x[1]) % 2 == 0 else (x[0] - 1, x[1])
        excluded.add(tuple(left))
    out = []
    for x, i in view.xi_tilde.items():
        if (x[0] + x[1]) % 2 != 0 or x in excluded:
            continue
        partner = (x[0] + 1, x[1])
        cap = m - max(i, view.xi_tilde.get(partner, 0))
        out.append((i, cap, view.xi_lazy.get(x, 0)))
    return out


# ---------------------------------------------------------------------------
# goodness of fit


class InsufficientSamples(ValueError):
    pass


def _pool(expected: np.ndarray, min_bin: float) -> List[List[int]]:
    """Greedy left-to-right merge of adjacent bins until each expects >= min_bin.

    A short final group is merged into its left neighbour.
    """
    groups: List[List[int]] = []
    cur: List[int] = []
    acc = 0.0
    for j, e in enumerate(expected):
        cur.append(j)
        acc += e
        if acc >= min_bin:
            groups.append(cur)
            cur, acc = [], 0.0
    if cur:
        if groups:
            groups[-1].extend(cur)
        else:
            groups.append(cur)
    return groups


def chi_square_counts(observed, expected, min_bin: float = 5.0, ddof: int = 0) -> Tuple[float, float, int]:
    """Pearson statistic for counts against expected counts after pooling.

    Returns (statistic, p_value, degrees of freedom).  A single pooled bin
    has no degrees of freedom: the statistic is 0 and p = 1.

    Raises
    ------
    InsufficientSamples
        If the total expectation is below ``min_bin``.
    """
    obs = np.asarray(observed, dtype=float)
    exp = np.asarray(expected, dtype=float)
    if min_bin < 5:
        raise ValueError("min_bin must be >= 5")
    if exp.sum() < min_bin:
        raise InsufficientSamples("fewer expected counts than one bin needs")
    groups = _pool(exp, min_bin)
    o = np.array([obs[g].sum() for g in groups])
    e = np.array([exp[g].sum() for g in groups])
    dof = len(groups) - 1 - ddof
    if dof <= 0:
        stat = float(((o - e) ** 2 / e).sum()) if len(groups) > 1 else 0.0
        return stat, 1.0 if stat == 0 else 0.0, 0
    stat = float(((o - e) ** 2 / e).sum())
    return stat, float(stats.chi2.sf(stat, dof)), dof


def chi_square_gof(samples, pmf, min_bin: float = 5.0) -> Tuple[float, float]:
    """Chi-square test of integer samples against a pmf on {0, 1, ...}.

    Mass of the pmf beyond its listed support, and samples beyond it, go to
    the last bin.  Returns (statistic, p_value).
    """
    s = np.asarray(samples, dtype=np.int64)
    p = np.asarray(pmf, dtype=float)
    if np.any(s < 0):
        raise ValueError("samples must be nonnegative integers")
    if np.any(p < 0) or p.sum() > 1 + 1e-9:
        raise ValueError("pmf must be nonnegative with total <= 1")
    J = len(p)
    obs = np.bincount(np.minimum(s, J - 1), minlength=J).astype(float)
    probs = p.copy()
    probs[-1] += max(0.0, 1.0 - p.sum())
    stat, pv, _ = chi_square_counts(obs, len(s) * probs, min_bin)
    return stat, pv


def stratified_truncated_test(tab: np.ndarray, min_samples: int = 500, min_bin: float = 5.0) -> List[dict]:
    """Per-stratum tests of an aggregated table tab[i, cap, l] against the truncated law.

    Within stratum i the expected count of l is sum over caps of
    n(i, cap) * p_cap(l), the exact mean under the conditional law; each
    (i, cap) cell is multinomial, so the Pearson statistic of the sum is
    stochastically no larger than chi-square with the pooled degrees of
    freedom (a conservative test).  Strata below ``min_samples`` are
    reported as skipped.
    """
    out = []
    for i in range(1, tab.shape[0]):
        sub = tab[i]
        n = int(sub.sum())
        if n == 0:
            continue
        rec = {"stratum": i, "n_samples": n}
        if n < min_samples:
            rec.update(skipped=True)
            out.append(rec)
            continue
        exp = np.zeros(tab.shape[2])
        for cap in range(1, tab.shape[1]):
            c = sub[cap].sum()
            if c:
                exp[:cap] += c * truncated_lazy_pmf(i, cap)
        obs = sub.sum(axis=0)
        stat, pv, dof = chi_square_counts(obs, exp, min_bin)
        rec.update(skipped=False, chi2=stat, dof=dof, p=pv)
        out.append(rec)
    return out


def stratified_untruncated_test(tab: np.ndarray, min_samples: int = 500, min_bin: float = 5.0) -> List[dict]:
    """Per-stratum tests of tab[i, l] against p(i, .); the last row and column are overflow cells."""
    out = []
    for i in range(1, tab.shape[0] - 1):
        row = tab[i]
        n = int(row.sum())
        if n == 0:
            continue
        rec = {"stratum": i, "n_samples": n}
        if n < min_samples:
            rec.update(skipped=True)
            out.append(rec)
            continue
        p = _pad(_TABLE.row(i), tab.shape[1])
        p[-1] = max(0.0, 1.0 - p[:-1].sum())
        stat, pv, dof = chi_square_counts(row, n * p, min_bin)
        rec.update(skipped=False, chi2=stat, dof=dof, p=pv)
        out.append(rec)
    return out
