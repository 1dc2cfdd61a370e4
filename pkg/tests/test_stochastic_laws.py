"""Cross-checks with genuinely random delay laws (multi-outcome pmfs), where
the exact expectation enumeration has the most room to go wrong."""

import numpy as np
import pytest

from infersched import (
    DelayLaw,
    DelayNetwork,
    ErrorSurface,
    FixedPolicyRule,
    buffer_position,
    epoch_stats,
    policy_iteration,
    replicate,
    solve_fixed,
)

from _oracles import naive_buffer, naive_index
from infersched import wait_index


@pytest.fixture(scope="module")
def noisy_net():
    rng = np.random.default_rng(100)

    def law(lo, hi):
        support = rng.choice(np.arange(lo, hi), size=2, replace=False)
        w = float(rng.uniform(0.25, 0.75))
        return DelayLaw.from_pmf({int(support[0]): w, int(support[1]): 1.0 - w})

    trans = tuple(tuple(law(1, 6) for _ in range(3)) for _ in range(2))
    fbs = (law(1, 4), law(1, 4))
    return DelayNetwork(np.array([[0.7, 0.3], [0.4, 0.6]]), trans, fbs)


@pytest.fixture(scope="module")
def bumpy_surface():
    rng = np.random.default_rng(101)
    vals = np.sort(rng.uniform(0.2, 2.0, size=(35, 3)), axis=1)[:, ::-1]
    vals = np.maximum.accumulate(vals, axis=0)
    return ErrorSurface(vals)


def test_index_with_random_laws_matches_oracle(bumpy_surface, noisy_net):
    rng = np.random.default_rng(5)
    for _ in range(30):
        age = int(rng.integers(0, 38))
        c = int(rng.integers(1, 3))
        d = int(rng.integers(1, 4))
        l = int(rng.integers(1, 4))
        got = wait_index(bumpy_surface, noisy_net, age, d, l, c, 15)
        want = naive_index(bumpy_surface, noisy_net, age, d, l, c, 15)
        assert got == pytest.approx(want, rel=1e-12)


def test_buffer_with_random_laws_matches_oracle(bumpy_surface, noisy_net):
    threshold = 0.85 * float(bumpy_surface.values[-1].min())
    for c in (1, 2):
        for l in (1, 2):
            got = buffer_position(bumpy_surface, noisy_net, c, l, threshold, 3, 34)
            want = naive_buffer(bumpy_surface, noisy_net, c, l, threshold, 3, 34)
            assert got == want


def test_solved_gain_confirmed_by_simulation(bumpy_surface, noisy_net):
    policy = solve_fixed(bumpy_surface, noisy_net, 2, 3, tau_bound=34)
    stats = epoch_stats(bumpy_surface, noisy_net, 2, policy.gain, 3, 34)
    assert stats.expected_cost - policy.gain * stats.expected_length == pytest.approx(
        0.0, abs=1e-9
    )
    horizon = 200000
    agg = replicate(
        FixedPolicyRule(policy), bumpy_surface, noisy_net, horizon, base_seed=6, reps=8,
        buffer_size=3,
    )
    # the fixed initial conditions bias the finite-horizon average by O(1/T)
    # (about 2 cost units here), on top of the replication noise
    assert abs(agg.time_avg_error - policy.gain) < 4 * agg.ci95 + 5.0 / horizon


def test_restricted_policy_iteration_agrees(bumpy_surface, noisy_net):
    fixed = solve_fixed(bumpy_surface, noisy_net, 2, 3, tau_bound=34)
    restricted = policy_iteration(
        bumpy_surface, noisy_net, 34, 3, tau_bound=34, lengths=(2,)
    )
    assert restricted.gain == pytest.approx(fixed.gain, rel=1e-3)
    full = policy_iteration(bumpy_surface, noisy_net, 34, 3, tau_bound=34)
    assert full.gain <= min(
        solve_fixed(bumpy_surface, noisy_net, l, 3, tau_bound=34).gain for l in (1, 2, 3)
    ) + 1e-3
