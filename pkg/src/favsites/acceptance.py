"""Acceptance suite: one function per criterion, fixed seeds, pinned tolerances.

Every criterion returns a :class:`CriterionResult`.  Seeds were fixed
before any criterion was run and are never re-drawn.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats


@dataclass
class CriterionResult:
    name: str
    passed: bool
    details: Dict = field(default_factory=dict)
    runtime: float = 0.0
    budget: float = 0.0
    reason: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        s = f"[{tag}] {self.name} ({self.runtime:.1f}s / budget {self.budget:.0f}s)"
        return s + (f": {self.reason}" if self.reason else "")


def _timed(name: str, budget: float):
    def deco(fn: Callable[[], CriterionResult]):
        def run() -> CriterionResult:
            t0 = time.perf_counter()
            res = fn()
            res.runtime = time.perf_counter() - t0
            res.budget = budget
            res.name = name
            if res.runtime > budget:
                res.passed = False
                res.reason = (res.reason + "; " if res.reason else "") + "runtime budget exceeded"
            return res
        run.__name__ = fn.__name__
        run.criterion = name
        return run
    return deco


# ---------------------------------------------------------------------------
# 1. decomposition identity


@_timed("decomposition-identity", 120)
def decomposition_identity(walks: int = 1000, steps: int = 10**5, seed: int = 101) -> CriterionResult:
    from ._rng import trial_seed
    from .decomposition import prefix_identity_violations
    from .walk import simulate_walk
    total = 0
    for i in range(walks):
        total += prefix_identity_violations(simulate_walk(2, steps, trial_seed(seed, i)).path)
    return CriterionResult("", total == 0, {"walks": walks, "steps": steps, "violations": total})


# ---------------------------------------------------------------------------
# 2. Monte Carlo vs exhaustive enumeration


@_timed("enumeration-equivalence", 600)
def enumeration_equivalence(trials: int = 10**6, n: int = 12, seed: int = 202) -> CriterionResult:
    from ._grid2d import argmax_count_batch
    from .samplers import chi_square_counts
    from .walk import enumerate_exact_distribution
    exact = enumerate_exact_distribution(2, n)
    mc = argmax_count_batch(seed, 0, trials, 2, n)
    top = max(max(exact.counts), int(mc.max()))
    obs = np.bincount(mc, minlength=top + 1).astype(float)
    exp = np.array([exact.probability(k) for k in range(top + 1)]) * trials
    stat, p, dof = chi_square_counts(obs, exp, 5.0)
    return CriterionResult("", p > 0.01, {"chi2": stat, "dof": dof, "p": p,
                                          "exact": exact.probabilities,
                                          "empirical": {k: obs[k] / trials for k in range(top + 1) if obs[k]}})


# ---------------------------------------------------------------------------
# 3. hitting formulas vs linear solves


@_timed("hitting-formulas", 60)
def hitting_formulas(r: float = 100, R: float = 400) -> CriterionResult:
    from .analytics import fit_c0, hitting_probability
    fit = fit_c0((50, 200))  # r itself is held out of the fit
    c0 = fit["c0"]
    rows = [hitting_probability("escape", r, c0=c0), hitting_probability("hit_origin", r, (5, 0), c0=c0)]
    for x in (150, 200, 300):
        for v in ("outer_first", "inner_first"):
            rows.append(hitting_probability(v, r, (x, 0), R=R))
    gaps = [h.rel_gap for h in rows]
    det = {"c0": c0, "rows": [{"variant": h.variant, "formula": h.formula, "exact": h.exact,
                               "rel_gap": h.rel_gap} for h in rows], "max_rel_gap": max(gaps)}
    return CriterionResult("", max(gaps) <= 0.02, det)


# ---------------------------------------------------------------------------
# 4. escape constant


def escape_simulation(trials: int, seed: int, R: float = 100, cap: int = 10**6):
    """Importance-sampled escape probability with far-field correction.

    Returns (estimate, standard error, capped trials).  The estimator is
    A / (1 + B) with A = E[w] and B = E[w G(z)], w the likelihood weight of
    the origin-avoiding walk and z its exit point (delta method for the SE).
    """
    from ._kern3d import _G_FAR, escape_weight_batch
    w, d, status = escape_weight_batch(seed, 0, trials, R, cap)
    a = w
    b = w * _G_FAR / d
    A, B = a.mean(), b.mean()
    est = A / (1 + B)
    # gradient (1/(1+B), -A/(1+B)^2)
    ga, gb = 1 / (1 + B), -A / (1 + B) ** 2
    cov = np.cov(np.vstack([a, b]))
    se = math.sqrt((ga * ga * cov[0, 0] + 2 * ga * gb * cov[0, 1] + gb * gb * cov[1, 1]) / trials)
    return float(est), se, int(np.sum(status != 1))


@_timed("escape-constant", 300)
def escape_constant(trials: int = 10**5, seed: int = 404) -> CriterionResult:
    from .analytics import escape_probability
    quad = escape_probability(3)
    sim, se, capped = escape_simulation(trials, seed)
    ok = abs(sim - quad) <= 0.002 and abs(quad - 0.6595) <= 0.0005 and capped == 0
    return CriterionResult("", ok, {"quadrature": quad, "simulation": sim, "se": se,
                                    "diff": sim - quad, "capped": capped})


# ---------------------------------------------------------------------------
# 5. conditional laws of the lazy part


@_timed("conditional-laws", 600)
def conditional_laws(trials: int = 10**5, m: int = 25, n_jump: int = 1001, seed: int = 505) -> CriterionResult:
    from ._grid2d import Grid, origin_lazy_table, truncated_lazy_table
    from .samplers import stratified_truncated_test, stratified_untruncated_test
    tab_u = origin_lazy_table(seed, 0, trials, n_jump, 60, 40)
    W = 4096
    g = Grid(W, 3)
    touched = np.zeros(1 << 22, dtype=np.int64)
    path = np.zeros(1 << 25, dtype=np.int64)
    tab_t, status, viol = truncated_lazy_table(seed + 1, 0, trials, m, W, g.cells[0], g.cells[1], g.cells[2],
                                               touched, path)
    bad = int(np.sum(status != 1))
    res_u = stratified_untruncated_test(tab_u)
    res_t = stratified_truncated_test(tab_t)
    tested = [r for r in res_u + res_t if not r.get("skipped")]
    ok = bool(tested) and all(r["p"] > 0.01 for r in tested) and viol == 0 and bad == 0
    return CriterionResult("", ok, {"untruncated": res_u, "truncated": res_t, "failed_trials": bad,
                                    "identity_violations": int(viol),
                                    "min_p": min(r["p"] for r in tested) if tested else None})


# ---------------------------------------------------------------------------
# 6. negative binomial analytics


@_timed("negative-binomial", 60)
def negative_binomial() -> CriterionResult:
    from .analytics import (MODERATE_LIMIT, SIGMA2, NegBinomTable, calibrate_rho, local_clt_value,
                            moderate_tail_logratio, negbinom_bar)
    tab = NegBinomTable()
    norm_err = mom_err = 0.0
    for i in (1, 2, 5, 10, 50, 100, 1000, 10**4):
        row = tab.row(i)
        j = np.arange(len(row))
        norm_err = max(norm_err, abs(math.fsum(row) - 1))
        mean = math.fsum(j * row)
        var = math.fsum((j - mean) ** 2 * row)
        mom_err = max(mom_err, abs(mean - i / 15) / (i / 15), abs(var - i * SIGMA2) / (i * SIGMA2))
    i = 10**4
    centre = 16 * i / 15
    js = np.arange(math.ceil(centre - math.sqrt(i)), math.floor(centre + math.sqrt(i)) + 1)
    exact = negbinom_bar(i, js)
    clt_err = float(np.max(np.abs(local_clt_value(i, js) / exact - 1)))
    n = 10**4
    a_n = n**0.7
    up = moderate_tail_logratio(n, a_n, "upper")
    lo = moderate_tail_logratio(n, a_n, "lower")
    md_err = max(abs(up / MODERATE_LIMIT - 1), abs(lo / MODERATE_LIMIT - 1))
    parts = {"normalization": norm_err <= 1e-12, "moments": mom_err <= 1e-10,
             "local_clt": clt_err <= 0.05, "moderate_deviation": md_err <= 0.10}
    failed = [k for k, v in parts.items() if not v]
    reason = ""
    if failed:
        reason = "unattainable at this scale: " + ", ".join(failed)
    return CriterionResult("", not failed, {"normalization_err": norm_err, "moment_rel_err": mom_err,
                                            "local_clt_max_rel_err": clt_err,
                                            "local_clt_rho": calibrate_rho(),
                                            "moderate_upper": up, "moderate_lower": lo,
                                            "moderate_limit": MODERATE_LIMIT, "parts": parts}, reason=reason)


# ---------------------------------------------------------------------------
# 7. urn models


def _window_grid(count: int, seed: int, K: int = 6, total: float = 0.9):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        p = np.exp(rng.uniform(-0.5, 0.5, K))
        out.append(tuple(p / p.sum() * total))
    return out


def window_bound(p, m: int, f: int, J: int, j: int) -> float:
    """Explicit bound on P(F_m = j + 1 | X = m, window sum <= J) for a window of one top urn.

    Given the window sum l and X = m, the top count is Binomial(l, q)
    conditioned to be positive, q = p_m / (p_{m-f+1} + ... + p_m).
    Bounding the normalizer below by its single-ball term gives
    C(l, j+1) / l * (q / (1 - q))^j <= (J q / (1 - q))^j / (j + 1)!.
    The comparability of top and window probabilities enters only
    through q, so with q ~ g/f this is the (g/f)^j J^j shape.
    """
    q = p[m - 1] / sum(p[m - f: m])
    return (J * q / (1 - q)) ** j / math.factorial(j + 1)


@_timed("urn-lemmas", 120)
def urn_lemmas(seed: int = 707) -> CriterionResult:
    from .urns import binomial_conditional, urn_exact_conditional
    max_diff = 0.0
    for probs in [(0.2, 0.3, 0.25), (0.1, 0.4, 0.3, 0.1), (0.5, 0.25)]:
        for n in range(1, 9):
            for m in range(1, len(probs)):
                for s in range(n + 1):
                    for h in range(s + 1):
                        try:
                            e = urn_exact_conditional(n, probs, ("conditional", m, h, s))
                        except ValueError:
                            continue
                        max_diff = max(max_diff, abs(e - binomial_conditional(h, s, probs[m - 1], probs[m])))
    n, m, g = 8, 6, 1
    checks = 0
    worst = 0.0
    shape = 0.0
    viol = []
    # 20 configs: 10 random probability vectors, each with f = 2 and f = 3
    for probs in _window_grid(10, seed):
        for f in (2, 3):
            for J in (2, 3, 4):
                for j in range(J):
                    try:
                        pj = urn_exact_conditional(n, probs, ("window", m, g, f, J, j))
                    except ValueError:
                        continue
                    bound = window_bound(probs, m, f, J, j)
                    checks += 1
                    worst = max(worst, pj / bound)
                    shape = max(shape, pj / ((g / f) ** j * J**j))
                    if pj > bound * (1 + 1e-12):
                        viol.append({"f": f, "J": J, "j": j, "p": pj, "bound": bound})
    ok = max_diff <= 1e-12 and not viol
    return CriterionResult("", ok, {"binomial_max_diff": max_diff, "window_checks": checks,
                                    "window_worst_ratio_to_bound": worst,
                                    "window_max_over_shape": shape, "window_violations": viol})


# ---------------------------------------------------------------------------
# 8. MJP upcrossings vs walk excursions


def mjp_transition_test(counts: np.ndarray, n: int, p_top: float, min_stratum: int = 50) -> dict:
    """Pooled Pearson test of u_{l+1} given u_l = b against NB(b, 1/2) (NB(b, 1 - p_top) at the top).

    Strata (l, b) are disjoint given the Markov property, so the statistics
    add, and one p-value is reported.
    """
    from .samplers import chi_square_counts
    tot = 0.0
    dof = 0
    strata = 0
    for l in range(1, n + 1):
        succ = 0.5 if l < n else 1 - p_top
        col, nxt = counts[:, l], counts[:, l + 1]
        for b in np.unique(col):
            if b == 0:
                continue
            sel = nxt[col == b]
            if len(sel) < min_stratum:
                continue
            top = int(sel.max())
            obs = np.bincount(sel, minlength=top + 2).astype(float)
            pmf = stats.nbinom.pmf(np.arange(top + 2), b, succ)
            pmf[-1] = stats.nbinom.sf(top, b, succ)
            s, _, d = chi_square_counts(obs, len(sel) * pmf, 5.0)
            if d > 0:
                tot += s
                dof += d
                strata += 1
    return {"chi2": tot, "dof": dof, "strata": strata, "p": float(stats.chi2.sf(tot, dof)) if dof else None}


@_timed("mjp-upcrossings", 900)
def mjp_upcrossings(runs: int = 10**5, walks: int = 10**5, seed: int = 808, delta: float = 0.2) -> CriterionResult:
    from .excursions import (AnnulusGeometry, excursion_vs_mjp_divergence, mjp_counts_batch,
                             mjp_success_probability, simulate_walk_counts, success_rate)
    g6 = AnnulusGeometry.desk(6)
    c6, s6 = mjp_counts_batch(seed, 0, runs, 6, g6.top_up_probability, 10**8)
    trans = mjp_transition_test(c6, 6, g6.top_up_probability)
    g4 = AnnulusGeometry.desk(4)
    t0 = time.perf_counter()
    wc, ws = simulate_walk_counts(g4, walks, seed + 1)
    per_walk = (time.perf_counter() - t0) / walks
    mc, _ = mjp_counts_batch(seed + 2, 0, runs, 4, g4.top_up_probability, 10**8)
    div = excursion_vs_mjp_divergence(wc[ws == 1], mc, 4)
    py = {}
    for n in (4, 5, 6):
        g = AnnulusGeometry.desk(n)
        exact = mjp_success_probability(n, delta, g.top_up_probability, g.top_ratio)
        # walks needed for about 100 successes; cost per walk scales with the outer radius squared
        need = 100 / exact
        cost = need * per_walk * (g.radii[0] / g4.radii[0]) ** 2
        py[n] = {"mjp_exact": exact, "walks_needed": need, "projected_seconds": cost}
    hits, tot = success_rate(wc[ws == 1], 4, delta, g4.top_ratio)
    py[4]["walk_estimate"] = hits / tot
    py[4]["walk_successes"] = hits
    ratio_ok = False  # not resolvable within the budget; see projected_seconds
    parts = {"transition_chi2": trans["p"] is not None and trans["p"] > 0.01,
             "mean_gaps": div["max_rel_gap"] < 0.05,
             "success_ratio": ratio_ok}
    failed = [k for k, v in parts.items() if not v]
    reason = ""
    if failed:
        reason = "failed: " + ", ".join(failed)
        if "success_ratio" in failed:
            reason += " (success-probability ratio infeasible at desk scale)"
    return CriterionResult("", not failed, {"transition": trans, "mean_gap": div["max_rel_gap"],
                                            "levels": div["levels"], "success": py,
                                            "walk_failures": int(np.sum(ws != 1)), "parts": parts},
                           reason=reason)


# ---------------------------------------------------------------------------
# 9. growth of the maximal local time


@_timed("max-local-time", 1200)
def max_local_time(trials: int = 200, seed: int = 909) -> CriterionResult:
    from ._grid2d import Grid, max_local_time_batch
    from ._rng import trial_seed
    from .walk import argmax_trace, simulate_walk
    cps = np.array([10**4, 10**5, 10**6], dtype=np.int64)
    g = Grid(8192, 1)
    g.touched = np.zeros(1 << 21, dtype=np.int64)
    out, status = max_local_time_batch(seed, 0, trials, cps, 8192, g.cells[0], g.touched)
    for i in np.flatnonzero(status != 1):
        xs, _ = argmax_trace(simulate_walk(2, int(cps[-1]), trial_seed(seed, int(i))))
        out[i] = xs[cps]
    ratio = out.mean(axis=0) / np.log(cps.astype(float)) ** 2
    ok = bool(np.all(np.diff(ratio) > 0)) and 0.12 <= ratio[-1] <= 0.30
    return CriterionResult("", ok, {"n": cps.tolist(), "mean_ratio": ratio.tolist(),
                                    "replayed": int(np.sum(status != 1))})


# ---------------------------------------------------------------------------
# 10. d = 3 second favorite


@_timed("second-favorite-3d", 900)
def second_favorite_3d(trials: int = 2000, seed: int = 1010) -> CriterionResult:
    from ._kern3d import second_favorite_3d_batch
    from ._walkcore import walk_until_level
    from ._rng import trial_seed
    from .analytics import escape_probability
    gamma = escape_probability(3)
    ms = [6, 8, 10]
    rows = []
    for m in ms:
        t0 = time.perf_counter()
        o = second_favorite_3d_batch(seed, 0, trials, m, 10**9)
        dt = time.perf_counter() - t0
        p = float(np.mean(o == 1))
        se = math.sqrt(p * (1 - p) / trials)
        rows.append({"m": m, "p": p, "ci": [p - 1.96 * se, p + 1.96 * se], "capped": int(np.sum(o < 0)),
                     "seconds": dt})
    # mean first-level time grows geometrically in m; project the requested runs
    lengths = []
    for m in ms:
        steps = []
        for i in range(200):
            _, n, _ = walk_until_level(np.uint64(trial_seed(seed + 1, i)), 3, m, 10**9,
                                       np.zeros(3, dtype=np.int64), 3, False)
            steps.append(n)
        lengths.append(float(np.mean(steps)))
    growth = float(np.exp(np.polyfit(ms, np.log(lengths), 1)[0]))
    sec_per_step = rows[-1]["seconds"] / (trials * lengths[-1])
    proj = {m: 10**4 * lengths[-1] * growth ** (m - ms[-1]) * sec_per_step for m in (20, 40)}
    # c fitted from gamma - p = c m^{-1/2} on the feasible levels
    xs = np.array([m**-0.5 for m in ms])
    ys = np.array([gamma - r["p"] for r in rows])
    c = float(np.dot(xs, ys) / np.dot(xs, xs))
    return CriterionResult("", False, {"gamma": gamma, "rows": rows, "fitted_c": c,
                                       "mean_level_time": dict(zip(ms, lengths)), "growth_per_level": growth,
                                       "projected_seconds": proj},
                           reason=f"m=20 needs ~{proj[20]:.2g}s and m=40 ~{proj[40]:.2g}s; infeasible")


# ---------------------------------------------------------------------------
# 11. d = 2 simultaneous favorites


@_timed("second-favorite-2d", 1200)
def second_favorite_2d(trials: int = 10**5, seed: int = 1111) -> CriterionResult:
    from ._grid2d import Grid, second_favorite_batch
    from ._rng import trial_seed
    from .walk import LocalTimeLevel, favorite_event_scan, simulate_walk
    W = 8192
    g = Grid(W, 1)
    g.touched = np.zeros(1 << 22, dtype=np.int64)
    rows = []
    for m in (5, 10, 20, 40):
        o = second_favorite_batch(seed, 0, trials, m, W, g.cells[0], g.touched, 10**10)
        for i in np.flatnonzero(o < 0):
            w = simulate_walk(2, 0, trial_seed(seed, int(i)), LocalTimeLevel(m + 1))
            o[i] = int(bool(favorite_event_scan(w, m).flags.get((m, 2), False)))
        p = float(np.mean(o == 1))
        se = math.sqrt(p * (1 - p) / trials)
        s = math.sqrt(m)
        rows.append({"m": m, "p": p, "scaled": p * s, "scaled_ci": [(p - 1.96 * se) * s, (p + 1.96 * se) * s]})
    scaled = [r["scaled"] for r in rows]
    ok = all(r["scaled_ci"][0] > 0 for r in rows) and min(scaled) >= 0.5 * max(scaled)
    return CriterionResult("", ok, {"rows": rows, "min_over_max": min(scaled) / max(scaled)})


# ---------------------------------------------------------------------------
# 12. d = 3 delayed hitting


@_timed("delayed-hitting", 300)
def delayed_hitting(trials: int = 10**4, seed: int = 1212, half: int = 2) -> CriterionResult:
    from ._kern3d import delayed_hitting_batch
    from .analytics import escape_probability
    gamma = escape_probability(3)
    rows = []
    for n in (100, 1000, 10000):
        R = 4 * math.sqrt(n) + 20
        acc, acc2, capped = delayed_hitting_batch(seed, 0, trials, n, half, R, gamma, 10**9)
        mean = acc / trials
        j = int(np.argmax(mean))
        se = math.sqrt(max(acc2[j] / trials - mean[j] ** 2, 0) / trials)
        rows.append({"n": n, "sup": float(mean[j]), "scaled": float(mean[j] * math.sqrt(n)),
                     "scaled_se": se * math.sqrt(n), "capped": int(capped)})
    sc = np.array([r["scaled"] for r in rows])
    slope = float(np.polyfit(np.log([100, 1000, 10000]), np.log(sc), 1)[0])
    ok = sc.max() / sc.min() <= 2 and all(r["capped"] == 0 for r in rows)
    return CriterionResult("", ok, {"rows": rows, "max_over_min": float(sc.max() / sc.min()),
                                    "loglog_slope": slope})


CRITERIA: List[Callable[[], CriterionResult]] = [
    decomposition_identity, enumeration_equivalence, hitting_formulas, escape_constant,
    conditional_laws, negative_binomial, urn_lemmas, mjp_upcrossings, max_local_time,
    second_favorite_3d, second_favorite_2d, delayed_hitting,
]

SUITES: Dict[str, List[str]] = {
    "decomposition": ["decomposition-identity"],
    "enumeration": ["enumeration-equivalence"],
    "analytics": ["hitting-formulas", "escape-constant", "negative-binomial"],
    "conditional-laws": ["conditional-laws"],
    "urns": ["urn-lemmas"],
    "excursions": ["mjp-upcrossings"],
    "favorites": ["max-local-time", "second-favorite-3d", "second-favorite-2d", "delayed-hitting"],
}
SUITES["all"] = [c.criterion for c in CRITERIA]


def run_suite(name: str = "all", only: Optional[List[str]] = None) -> List[CriterionResult]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    wanted = set(only or SUITES[name])
    return [c() for c in CRITERIA if c.criterion in wanted]
