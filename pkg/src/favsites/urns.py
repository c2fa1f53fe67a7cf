"""Balls-in-urns toy models for local-time profiles.

n distinguishable balls are placed independently, ball -> urn k with
probability p_k.  The infinite urn list is cut at K; the leftover mass
1 - sum(p) goes to an absorbing overflow urn with label K + 1 that no
query refers to.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class UrnConfig:
    probabilities: Tuple[float, ...]
    balls: int
    seed: int = 0

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if len(p) == 0 or np.any(p <= 0):
            raise ValueError("all urn probabilities must be positive")
        if p.sum() > 1 + 1e-12:
            raise ValueError("probabilities sum to more than 1")
        if self.balls < 0:
            raise ValueError("balls must be >= 0")

    @property
    def K(self) -> int:
        return len(self.probabilities)

    @property
    def overflow(self) -> float:
        return max(0.0, 1.0 - float(sum(self.probabilities)))

    def full_probabilities(self) -> np.ndarray:
        """p_1..p_K followed by the overflow mass."""
        return np.append(np.asarray(self.probabilities, dtype=float), self.overflow)


@dataclass
class UrnOutcome:
    """F[k-1] is the count of urn k (the overflow urn last); X is 0 when no ball was placed."""

    F: np.ndarray
    X: int


def _max_label(F: np.ndarray) -> int:
    nz = np.flatnonzero(F)
    return int(nz[-1]) + 1 if len(nz) else 0


def simulate_urns(config: UrnConfig) -> UrnOutcome:
    rng = np.random.default_rng(config.seed)
    F = rng.multinomial(config.balls, config.full_probabilities())
    return UrnOutcome(F=F, X=_max_label(F))


def simulate_urns_batch(config: UrnConfig, trials: int) -> np.ndarray:
    """trials x (K+1) matrix of counts, seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    return rng.multinomial(config.balls, config.full_probabilities(), size=trials)


# ---------------------------------------------------------------------------
# exact law


def _compositions(n: int, parts: int) -> Iterator[Tuple[int, ...]]:
    # stars and bars
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(n + parts - 2 - prev)
        yield tuple(out)


def exact_law(n: int, probabilities: Sequence[float]) -> Dict[Tuple[int, ...], float]:
    """P(F = f) for every count vector f (overflow urn last), by multinomial weights.

    Raises
    ------
    ValueError
        If (K+1)^n exceeds the enumeration cap.
    """
    cfg = UrnConfig(tuple(probabilities), n)
    p = cfg.full_probabilities()
    if len(p) ** n > ENUMERATION_CAP:
        raise ValueError("enumeration cap exceeded")
    logp = np.log(np.where(p > 0, p, 1.0))
    lf = math.lgamma(n + 1)
    out = {}
    for f in _compositions(n, len(p)):
        if any(c and q == 0 for c, q in zip(f, p)):
            continue
        lw = lf + sum(c * lq - math.lgamma(c + 1) for c, lq in zip(f, logp))
        out[f] = math.exp(lw)
    return out


def urn_exact_conditional(n: int, probabilities: Sequence[float], query: tuple) -> float:
    """Exact probabilities by enumeration of the count vector.

    Queries (urn labels are 1-based):

    ("joint", m, h)
        P(F_m = h, X_n = m)
    ("conditional", m, h, s)
        P(F_m = h | X_n <= m + 1, F_m + F_{m+1} = s)
    ("window", m, g, f, J, j)
        P(sum_{k=m-g+1}^m F_k = j + 1 | X_n = m, sum_{k=m-f+1}^m F_k <= J)

    Raises
    ------
    ValueError
        On an unknown query, a label outside 1..K, or a null conditioning event.
    """
    K = len(probabilities)
    law = exact_law(n, probabilities)
    kind = query[0]

    def X(f):
        return _max_label(np.asarray(f))

    if kind == "joint":
        _, m, h = query
        _check_label(m, K)
        return sum(w for f, w in law.items() if f[m - 1] == h and X(f) == m)
    if kind == "conditional":
        _, m, h, s = query
        _check_label(m + 1, K)
        num = den = 0.0
        for f, w in law.items():
            if X(f) <= m + 1 and f[m - 1] + f[m] == s:
                den += w
                if f[m - 1] == h:
                    num += w
        if den == 0:
            raise ValueError("conditioning event has probability 0")
        return num / den
    if kind == "window":
        _, m, g, fw, J, j = query
        _check_label(m, K)
        if not 0 < g < fw < m:
            raise ValueError("need 0 < g < f < m")
        num = den = 0.0
        for f, w in law.items():
            if X(f) != m:
                continue
            if sum(f[m - fw: m]) > J:
                continue
            den += w
            if sum(f[m - g: m]) == j + 1:
                num += w
        if den == 0:
            raise ValueError("conditioning event has probability 0")
        return num / den
    raise ValueError(f"unknown query {kind!r}")


def _check_label(m: int, K: int) -> None:
    if not 1 <= m <= K:
        raise ValueError(f"urn label {m} outside 1..{K}")


def binomial_conditional(h: int, s: int, p_m: float, p_next: float) -> float:
    """Binomial(s, p_m / (p_m + p_{m+1})) mass at h."""
    return float(stats.binom.pmf(h, s, p_m / (p_m + p_next)))


def law_distance(samples: np.ndarray, n: int, probabilities: Sequence[float]) -> float:
    """Total variation between the empirical law of (F, X) and the exact law.

    X is a function of F, so the distance is that of the count vectors.
    """
    law = exact_law(n, probabilities)
    rows, counts = np.unique(samples, axis=0, return_counts=True)
    emp = {tuple(int(v) for v in r): c / len(samples) for r, c in zip(rows, counts)}
    keys = set(law) | set(emp)
    return 0.5 * sum(abs(law.get(k, 0.0) - emp.get(k, 0.0)) for k in keys)


def joint_decay_slope(n: int, probabilities: Sequence[float], m: int, hs: Sequence[int],
                      trials: int, seed: int) -> Tuple[float, float]:
    """Regression slope of log P^(F_m = h, X_n = m) on h from simulation, with its standard error.

    Values of h never observed are dropped.
    """
    cfg = UrnConfig(tuple(probabilities), n, seed)
    F = simulate_urns_batch(cfg, trials)
    X = np.array([_max_label(r) for r in F]) if trials <= 10**4 else _max_labels(F)
    xs, ys, ws = [], [], []
    for h in hs:
        c = int(np.sum((F[:, m - 1] == h) & (X == m)))
        if c > 0:
            xs.append(h)
            ys.append(math.log(c / trials))
            ws.append(c)
    if len(xs) < 3:
        raise ValueError("too few observed values of h for a regression")
    # weighted least squares with Var(log p^) ~ 1/count
    xs_a, ys_a, w = np.array(xs, float), np.array(ys), np.array(ws, float)
    Xm = np.column_stack([np.ones_like(xs_a), xs_a])
    WX = Xm * w[:, None]
    cov = np.linalg.inv(Xm.T @ WX)
    beta = cov @ (WX.T @ ys_a)
    return float(beta[1]), float(math.sqrt(cov[1, 1]))


def _max_labels(F: np.ndarray) -> np.ndarray:
    nz = F > 0
    idx = F.shape[1] - np.argmax(nz[:, ::-1], axis=1)
    idx[~nz.any(axis=1)] = 0
    return idx


def window_ratios(n: int, probabilities: Sequence[float], m: int, g: int, f: int, J: int) -> List[float]:
    """P(window count = j + 1 | ...) / ((g/f)^j J^j) for j = 0..J-1."""
    out = []
    for j in range(J):
        p = urn_exact_conditional(n, probabilities, ("window", m, g, f, J, j))
        out.append(p / ((g / f) ** j * J**j))
    return out
