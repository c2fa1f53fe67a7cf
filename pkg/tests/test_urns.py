import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from favsites.acceptance import window_bound
from favsites.urns import (UrnConfig, binomial_conditional, exact_law, joint_decay_slope, law_distance,
                           simulate_urns, simulate_urns_batch, urn_exact_conditional)

probs3 = st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3).map(
    lambda v: tuple(x / sum(v) * 0.95 for x in v))


def brute_law(n, p):
    """Law of the count vector by listing every placement of n labelled balls."""
    full = list(p) + [1 - sum(p)]
    out = {}
    for placement in itertools.product(range(len(full)), repeat=n):
        w = math.prod(full[k] for k in placement)
        f = tuple(placement.count(k) for k in range(len(full)))
        out[f] = out.get(f, 0.0) + w
    return out


def test_no_balls():
    out = simulate_urns(UrnConfig((0.5, 0.3), 0, seed=1))
    assert out.X == 0 and not out.F.any()


def test_concentrated_urn():
    out = simulate_urns(UrnConfig((1e-300, 1e-300, 1 - 2e-300), 50, seed=2))
    assert out.X == 3 and out.F[2] == 50


def test_mean_counts():
    p = tuple(2.0 ** -k for k in range(1, 11))
    n = 10_000
    F = simulate_urns(UrnConfig(p, n, seed=3)).F
    for k, pk in enumerate(p):
        assert abs(F[k] / n - pk) <= 3 * math.sqrt(pk * (1 - pk) / n)


def test_two_urns_two_balls():
    assert urn_exact_conditional(2, (0.5, 0.5), ("joint", 2, 2)) == pytest.approx(0.25, abs=1e-15)


def test_config_validation():
    with pytest.raises(ValueError):
        UrnConfig((0.5, 0.0), 3)
    with pytest.raises(ValueError):
        UrnConfig((0.7, 0.6), 3)
    with pytest.raises(ValueError):
        urn_exact_conditional(3, (0.5, 0.4), ("joint", 3, 1))
    with pytest.raises(ValueError):
        urn_exact_conditional(3, (0.5, 0.4), ("other",))
    with pytest.raises(ValueError):
        exact_law(12, (0.1, 0.2, 0.3, 0.2))


@given(st.integers(0, 50), probs3, st.integers(0, 2**32))
def test_conservation_and_max_label(n, p, seed):
    out = simulate_urns(UrnConfig(p, n, seed))
    assert out.F.sum() == n
    if n:
        assert out.F[out.X - 1] > 0 and not out.F[out.X:].any()


@given(st.integers(0, 5), probs3)
def test_exact_law_matches_placements(n, p):
    law = exact_law(n, p)
    brute = brute_law(n, p)
    assert set(k for k, v in brute.items() if v > 0) == set(law)
    for k, v in law.items():
        assert v == pytest.approx(brute[k], rel=1e-10)
    assert math.fsum(law.values()) == pytest.approx(1, abs=1e-12)


@given(st.integers(1, 8), probs3, st.data())
def test_conditional_is_binomial(n, p, data):
    m = data.draw(st.integers(1, 2))
    # with m = 1 every ball is in urn 1 or 2 on the event X <= 2
    s = n if m == 1 else data.draw(st.integers(0, n))
    h = data.draw(st.integers(0, s))
    exact = urn_exact_conditional(n, p, ("conditional", m, h, s))
    assert exact == pytest.approx(binomial_conditional(h, s, p[m - 1], p[m]), abs=1e-12)


def test_simulation_matches_exact_law():
    p = (0.3, 0.25, 0.2)
    F = simulate_urns_batch(UrnConfig(p, 6, seed=4), 10**6)
    assert law_distance(F, 6, p) < 0.01


def test_joint_decay_slope_negative():
    p = (0.35, 0.3, 0.2, 0.1)
    slope, se = joint_decay_slope(20, p, 3, range(5, 13), 200_000, seed=5)
    assert slope + 1.96 * se < 0


def test_window_bound_holds():
    p = (0.2, 0.15, 0.15, 0.12, 0.1, 0.08)
    m, g, f = 6, 1, 3
    for J in (2, 3, 4):
        for j in range(J):
            P = urn_exact_conditional(8, p, ("window", m, g, f, J, j))
            assert P <= window_bound(p, m, f, J, j) + 1e-15


def test_window_query_validation():
    with pytest.raises(ValueError):
        urn_exact_conditional(4, (0.2, 0.2, 0.2), ("window", 3, 2, 2, 2, 0))
