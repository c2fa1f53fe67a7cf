import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from favsites._grid2d import Grid, _origin_lazy_one, _truncated_one, origin_lazy_table
from favsites._rng import trial_seed
from favsites.analytics import negbinom_pmf
from favsites.decomposition import decompose
from favsites.samplers import (HoldingLaw, InsufficientSamples, chi_square_counts, chi_square_gof,
                               even_endpoint_pmf, expand_path, geometric_draws, lazy_counts,
                               sample_holding_sequence, sample_lazy_truncated, stratified_untruncated_test,
                               truncated_lazy_pmf, truncated_pairs_from_walk)
from favsites.walk import LocalTimeLevel, simulate_walk


def test_zero_length_chain_single_draw():
    h = sample_holding_sequence(np.array([[0, 0]]), 3)
    assert list(h) == [((0, 0), 1)] and h[((0, 0), 1)] >= 0


def test_geometric_zero_mass():
    d = geometric_draws(np.random.default_rng(1), 100_000)
    p = (d == 0).mean()
    assert abs(p - 15 / 16) < 3 * math.sqrt(15 / 16 / 16 / 100_000)
    _, pv = chi_square_gof(d, negbinom_pmf(1, np.arange(8)))
    assert pv > 0.01


def test_holding_sequence_deterministic():
    chain = simulate_walk(2, 200, 4).path
    assert sample_holding_sequence(chain, 9) == sample_holding_sequence(chain, 9)


def test_holding_law_pmfs():
    assert HoldingLaw("unconditioned_geometric").pmf()[0] == pytest.approx(15 / 16)
    assert HoldingLaw("negbinom_sum", i=3).pmf(5)[2] == pytest.approx(negbinom_pmf(3, 2))
    tr = HoldingLaw("truncated_negbinom", i=2, m=10, top=7).pmf()
    assert len(tr) == 3 and tr.sum() == pytest.approx(1)
    with pytest.raises(ValueError):
        HoldingLaw("other").pmf()


def test_expand_round_trip_with_true_holdings():
    for s in range(20):
        w = simulate_walk(2, 500, trial_seed(2, s))
        v = decompose(w)
        rec = expand_path(v.jump_chain, v.holding)
        expected = w.path[: w.length] if v.pending else w.path
        assert np.array_equal(rec, expected)


def test_resampled_path_has_uniform_steps():
    counts = np.zeros(4)
    for s in range(40):
        w = simulate_walk(2, 5000, trial_seed(3, s))
        v = decompose(w)
        path = expand_path(v.jump_chain, sample_holding_sequence(v.jump_chain, trial_seed(4, s)))
        d = np.diff(path, axis=0)
        k = np.where(d[:, 0] == 1, 0, np.where(d[:, 0] == -1, 1, np.where(d[:, 1] == 1, 2, 3)))
        assert np.all(np.abs(d).sum(axis=1) == 1)
        counts += np.bincount(k, minlength=4)
    _, p, _ = chi_square_counts(counts, np.full(4, counts.sum() / 4))
    assert p > 0.001


def test_lazy_counts_sum_over_visits():
    h = {((0, 0), 1): 2, ((0, 0), 2): 1, ((2, 0), 1): 0}
    assert lazy_counts(h) == {(0, 0): 3, (2, 0): 0}


def test_lazy_counts_independent_across_sites():
    # given a fixed chain, the lazy counts of two distinct sites are uncorrelated
    v = decompose(simulate_walk(2, 400, 10))
    sites = Counter(map(tuple, v.jump_chain[::2].tolist())).most_common(2)
    a, b = sites[0][0], sites[1][0]
    xs, ys = [], []
    for s in range(20_000):
        lc = lazy_counts(sample_holding_sequence(v.jump_chain, s))
        xs.append(lc.get(a, 0))
        ys.append(lc.get(b, 0))
    _, p = stats.pearsonr(xs, ys)
    assert p > 0.01


# --- the untruncated conditional law from direct simulation ------------------

def test_origin_kernel_matches_decomposition():
    n = 51
    for r in range(200):
        seed = trial_seed(6, r)
        i, l = _origin_lazy_one(np.uint64(seed), n)
        w = simulate_walk(2, 2000, seed)
        v = decompose(w, check=False)
        t = int(v.jump_times[n])
        vt = decompose(w, t)
        chain = v.jump_chain[: n + 1]
        assert i == int(np.all(chain == 0, axis=1).sum())
        assert l == vt.xi_lazy_at((0, 0))


def test_origin_lazy_law_small_run():
    tab = origin_lazy_table(np.uint64(77), 0, 50_000, 201, 40, 30)
    res = [r for r in stratified_untruncated_test(tab) if not r.get("skipped")]
    assert res
    assert all(r["p"] > 0.001 for r in res)


# --- truncated law -----------------------------------------------------------

def test_truncated_single_support_point():
    assert truncated_lazy_pmf(4, 1).tolist() == [1.0]
    assert sample_lazy_truncated((4, 6), 7, 0) == 0


def test_truncated_vacuous():
    i = 5
    full = negbinom_pmf(i, np.arange(400))
    tr = truncated_lazy_pmf(i, 400)
    assert 0.5 * np.abs(full - tr).sum() < 1e-12


def test_truncated_empty_support():
    with pytest.raises(ValueError):
        sample_lazy_truncated((3, 9), 9, 0)


@given(st.integers(1, 60), st.integers(1, 60))
def test_truncated_is_renormalized_restriction(i, cap):
    tr = truncated_lazy_pmf(i, cap)
    full = negbinom_pmf(i, np.arange(cap))
    assert len(tr) == cap
    assert tr.sum() == pytest.approx(1, abs=1e-12)
    assert np.allclose(tr, full / full.sum(), rtol=1e-10, atol=0)


def test_truncated_sampler_law():
    i, m, partner = 3, 9, 5
    draws = [sample_lazy_truncated((i, partner), m, s) for s in range(20_000)]
    _, p = chi_square_gof(draws, truncated_lazy_pmf(i, m - max(i, partner)))
    assert p > 0.01


def test_truncated_kernel_matches_python_pairs():
    m = 12
    W = 1024
    g = Grid(W, 3)
    touched = np.zeros(1 << 18, dtype=np.int64)
    path = np.zeros(1 << 22, dtype=np.int64)
    for r in range(30):
        seed = trial_seed(8, r)
        tab = np.zeros((m + 1, m + 1, m + 1), dtype=np.int64)
        status, viol = _truncated_one(np.uint64(seed), m, W, g.cells[0], g.cells[1], g.cells[2],
                                      touched, path, tab)
        assert status == 1 and viol == 0
        w = simulate_walk(2, 0, seed, LocalTimeLevel(m))
        expected = np.zeros_like(tab)
        for i, cap, l in truncated_pairs_from_walk(w, m):
            assert 0 <= l < cap
            expected[i, cap, l] += 1
        assert np.array_equal(tab, expected)


def test_truncated_law_position_exchangeable():
    # within the stratum (xi~ = 1, cap = m - 1), near and far pairs share one law
    m = 14
    near, far = Counter(), Counter()
    for r in range(400):
        w = simulate_walk(2, 0, trial_seed(12, r), LocalTimeLevel(m))
        v = decompose(w, check=False)
        for x, i in v.xi_tilde.items():
            if (x[0] + x[1]) % 2 or i != 1:
                continue
            cap = m - max(i, v.xi_tilde.get((x[0] + 1, x[1]), 0))
            if cap != m - 1:
                continue
            (near if abs(x[0]) + abs(x[1]) < 20 else far)[min(v.xi_lazy.get(x, 0), 2)] += 1
    table = np.array([[near[k] for k in range(3)], [far[k] for k in range(3)]])
    assert table.sum(axis=1).min() > 500
    _, p, _, _ = stats.chi2_contingency(table)
    assert p > 0.01


def test_even_endpoint_law():
    j = even_endpoint_pmf(3, 60)
    assert j.sum() == pytest.approx(1, abs=1e-12)
    assert j[1, 2] == pytest.approx(negbinom_pmf(2, 1) * negbinom_pmf(1, 1))
    assert np.allclose(np.tril(j, -1), 0)
    first = even_endpoint_pmf(1, 10)
    assert first[0].sum() == pytest.approx(1, abs=1e-12)


# --- chi-square --------------------------------------------------------------

def test_gof_point_mass():
    stat, p = chi_square_gof(np.zeros(1000, dtype=int), [1.0])
    assert stat == 0 and p == 1


def test_gof_power_against_shifted_law():
    rng = np.random.default_rng(2)
    s = rng.poisson(3.0, 100_000)
    _, p = chi_square_gof(s, stats.poisson.pmf(np.arange(30), 3.2))
    assert p < 1e-6


def test_gof_pvalues_uniform():
    rng = np.random.default_rng(3)
    pmf = stats.poisson.pmf(np.arange(40), 4.0)
    ps = [chi_square_gof(rng.poisson(4.0, 100_000), pmf)[1] for _ in range(100)]
    assert stats.kstest(ps, "uniform").pvalue > 0.01


def test_gof_insufficient_samples():
    with pytest.raises(InsufficientSamples):
        chi_square_gof([0, 1], [0.5, 0.5])
    with pytest.raises(ValueError):
        chi_square_counts([1, 2], [1, 2], min_bin=2)
