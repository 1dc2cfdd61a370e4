"""Acceptance gate: one test per criterion, each printing a PASS line with
the measured quantities (run with -s to see them).  Criterion 9 (figure
rendering) lives in the separate plotkit package; nothing here depends on it.
"""

import math
import time

import numpy as np
import pytest

from infersched import (
    ArProcessSpec,
    FixedPolicyRule,
    ZeroWaitRule,
    build_error_surface,
    epoch_law,
    epoch_stats,
    eval_error,
    evaluate_fixed_policy,
    iid_approx_network,
    make_two_state_network,
    policy_iteration,
    replicate,
    simulate,
    solve_fixed,
    solve_fixed_all,
)
from infersched.cli import run_sweep
from infersched.fixed_solver import _Workspace

from _oracles import mc_surface_estimate
from conftest import PAPER_COEFFS

PAPER_SURFACE_CFG = {
    "order": 10,
    "coefficients": list(PAPER_COEFFS),
    "noise_var": 0.01,
    "obs_noise_var": 0.001,
    "delta_max": 500,
    "l_max": 10,
}
SIM_DEFAULTS = {"seed": 7, "horizon": 10**6, "reps": 20, "initial_age": 1, "initial_state": 1}


def test_criterion_1_surface_fidelity(paper_spec, paper_surface_50):
    t0 = time.perf_counter()
    ages = list(range(1, 51))
    lengths = list(range(1, 11))
    estimates = mc_surface_estimate(paper_spec, ages, lengths, 10**6, seed=12345)
    worst = 0.0
    for (age, length), est in estimates.items():
        exact = paper_surface_50.values[age, length - 1]
        worst = max(worst, abs(est - exact) / exact)
    column_steps = paper_surface_50.values[:, 1:] - paper_surface_50.values[:, :-1]
    elapsed = time.perf_counter() - t0
    assert worst < 0.02, f"worst Monte-Carlo relative deviation {worst:.4f}"
    assert float(np.max(column_steps)) <= 1e-9
    assert elapsed < 120.0
    print(
        f"\n[criterion 1] PASS: 50x10 grid within {worst * 100:.2f}% of the "
        f"Monte-Carlo regression oracle (bar 2%), columns non-increasing, "
        f"{elapsed:.1f}s"
    )


THEOREM1_INSTANCES = [
    # (sigma, alpha, length, buffer_size, delta_max)
    (0.5, 0.3, 1, 3, 40),
    (1.0, 0.8, 2, 4, 50),
    (0.25, 1.5, 1, 2, 30),
    (2.0, 0.1, 3, 6, 60),
    (1.5, 1.2, 2, 5, 40),
]


@pytest.fixture(scope="module")
def cross_check_surface():
    return build_error_surface(ArProcessSpec((0.3, 0.1, 0.4), 0.5, 0.01), 60, 6)


def test_criterion_2_theorem1_vs_policy_iteration(cross_check_surface):
    diffs = []
    for sigma, alpha, length, buffer_size, delta_max in THEOREM1_INSTANCES:
        t0 = time.perf_counter()
        surface = cross_check_surface.truncated(delta_max)
        net = make_two_state_network(sigma, alpha, l_max=6)
        fixed = solve_fixed(surface, net, length, buffer_size, tau_bound=delta_max)
        restricted = policy_iteration(
            surface, net, delta_max, buffer_size,
            tau_bound=delta_max, lengths=(length,),
        )
        rel = abs(fixed.gain - restricted.gain) / fixed.gain
        elapsed = time.perf_counter() - t0
        assert rel < 1e-3, (sigma, alpha, length, rel)
        assert elapsed < 60.0
        diffs.append(rel)
    print(
        f"\n[criterion 2] PASS: closed-form gain matches restricted policy "
        f"iteration on 5 instances; worst relative gap {max(diffs):.2e} (bar 1e-3)"
    )


def test_criterion_3_gain_consistency(paper_surface):
    t0 = time.perf_counter()
    net = make_two_state_network(1.0, 1 / 20)
    best_l, policy, _ = solve_fixed_all(paper_surface, net, 75)
    agg = replicate(
        FixedPolicyRule(policy), paper_surface, net,
        SIM_DEFAULTS["horizon"], SIM_DEFAULTS["seed"], SIM_DEFAULTS["reps"],
        buffer_size=75,
    )
    elapsed = time.perf_counter() - t0
    lo = agg.time_avg_error - agg.ci95
    hi = agg.time_avg_error + agg.ci95
    assert lo <= policy.gain <= hi, (
        f"gain {policy.gain} outside CI [{lo}, {hi}]"
    )
    assert elapsed < 180.0
    print(
        f"\n[criterion 3] PASS: simulated mean {agg.time_avg_error:.6f} "
        f"+- {agg.ci95:.6f} covers the solver gain {policy.gain:.6f} "
        f"(best l={best_l}), {elapsed:.1f}s"
    )


@pytest.fixture(scope="module")
def fig4_rows():
    cfg = {
        "surface": dict(PAPER_SURFACE_CFG),
        "network": {"preset": "two_state", "sigma": 1.0, "alpha": 0.05, "variant": "plain"},
        "solver": {"buffer_size": 75, "tau_bound": 500, "tol": 1e-9},
        "sweep": {
            "family": "sigma",
            "grid": [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0],
            "policies": ["optimal-fixed-all", "theorem1-l1", "zero-wait-l1"],
        },
    }
    return run_sweep(cfg, "sigma", dict(SIM_DEFAULTS))


def test_criterion_4_sigma_sweep_reproduction(fig4_rows):
    t0 = time.perf_counter()
    values = {}
    for x, policy, value, _, method, error in fig4_rows:
        assert error == "", f"sweep point failed: {error}"
        assert method == "exact"
        values[(x, policy)] = value
    grid = sorted({x for x, _ in values})
    assert len(grid) == 9
    ratios = []
    for x in grid:
        all_v = values[(x, "optimal-fixed-all")]
        l1_v = values[(x, "theorem1-l1")]
        zw_v = values[(x, "zero-wait-l1")]
        assert all_v <= l1_v + 1e-6, f"sigma={x}"
        assert l1_v <= zw_v + 1e-6, f"sigma={x}"
        ratios.append(zw_v / all_v)
    best = max(ratios)
    elapsed = time.perf_counter() - t0
    assert best >= 3.0, f"max zero-wait/optimal ratio {best:.2f} below 3"
    assert elapsed < 900.0
    print(
        f"\n[criterion 4] PASS: orderings exact at all 9 sigma points; max "
        f"zero-wait/optimal ratio {best:.2f} (bar 3, reported vs the paper's "
        f"up-to-six-times)"
    )


def test_criterion_5_alpha_sweep_reproduction(paper_surface):
    t0 = time.perf_counter()
    grid = [round(0.05 + 0.1 * k, 2) for k in range(20)]
    gains = {}
    for alpha in grid:
        net = make_two_state_network(2.5, alpha)
        aware = solve_fixed(paper_surface, net, 5, 75)
        v_aware, _ = evaluate_fixed_policy(paper_surface, net, aware)
        misspec = solve_fixed(paper_surface, iid_approx_network(net), 5, 75)
        v_misspec, _ = evaluate_fixed_policy(paper_surface, net, misspec)
        assert v_aware <= v_misspec + 1e-6, f"alpha={alpha}"
        gains[alpha] = (v_aware, v_misspec, aware, misspec)
    # at alpha = 1 the misspecification is exact: identical decisions
    net1 = make_two_state_network(2.5, 1.0)
    aware1 = solve_fixed(paper_surface, net1, 5, 75)
    misspec1 = solve_fixed(paper_surface, iid_approx_network(net1), 5, 75)
    assert np.array_equal(aware1.wait, misspec1.wait)
    assert aware1.buffer == misspec1.buffer
    v_aware, v_misspec, _, _ = gains[0.05]
    rel_gain = (v_misspec - v_aware) / v_misspec
    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    print(
        f"\n[criterion 5] orderings exact at all 20 alpha points, decisions "
        f"coincide at alpha=1; relative gain at alpha=0.05 is "
        f"{rel_gain * 100:.2f}% (bar 5%, paper reports up to 11.6%)"
    )
    # Exact stationary analysis of the specified model tops out near 1.6%
    # here (see the decisions ledger for the verification chain); the bar is
    # asserted as stated rather than weakened.
    assert rel_gain >= 0.05, (
        f"relative gain at alpha=0.05 is {rel_gain * 100:.2f}%, below the 5% bar; "
        "solver optimality and evaluation were independently verified "
        "(brute force + simulation) - see decisions ledger"
    )


def _random_theorem2_instance(rng):
    while True:
        coeffs = rng.uniform(-0.45, 0.45, size=int(rng.integers(2, 4)))
        try:
            spec = ArProcessSpec(tuple(coeffs), float(rng.uniform(0.2, 1.0)),
                                 float(rng.uniform(0.001, 0.05)))
            break
        except Exception:
            continue
    surface = build_error_surface(spec, 40, 4)
    sigma = float(rng.uniform(0.2, 1.5))
    alpha = float(rng.uniform(0.1, 1.9))
    net = make_two_state_network(sigma, alpha, l_max=4)
    return surface, net


def test_criterion_6_theorem2_equivalence_and_complexity(cross_check_surface):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2718)
    instances = [(cross_check_surface.truncated(40), make_two_state_network(0.5, 0.3, l_max=6))]
    instances += [_random_theorem2_instance(rng) for _ in range(4)]
    worst = 0.0
    for surface, net in instances:
        orig = policy_iteration(surface, net, 40, 4, tau_bound=40, variant="original")
        simp = policy_iteration(surface, net, 40, 4, tau_bound=40, variant="simplified")
        worst = max(worst, abs(orig.gain - simp.gain))
        assert abs(orig.gain - simp.gain) < 1e-9
    # complexity comparison at B = 8, tau_bound = 100
    spec = ArProcessSpec((0.3, 0.1, 0.4), 0.5, 0.01)
    surface8 = build_error_surface(spec, 60, 8)
    net8 = make_two_state_network(0.4, 0.3, l_max=8)
    orig8 = policy_iteration(surface8, net8, 60, 8, tau_bound=100, variant="original")
    simp8 = policy_iteration(surface8, net8, 60, 8, tau_bound=100, variant="simplified")
    t_orig = orig8.timings["improve_seconds"] / orig8.timings["iterations"]
    t_simp = simp8.timings["improve_seconds"] / simp8.timings["iterations"]
    elapsed = time.perf_counter() - t0
    assert abs(orig8.gain - simp8.gain) < 1e-9
    assert t_simp < t_orig, (t_simp, t_orig)
    assert elapsed < 600.0
    print(
        f"\n[criterion 6] PASS: gains equal within {worst:.1e} on 5 instances "
        f"(bar 1e-9); improvement phase per round {t_simp * 1e3:.1f} ms "
        f"simplified vs {t_orig * 1e3:.1f} ms original at B=8, tau_bound=100 "
        f"({t_orig / t_simp:.1f}x)"
    )


def test_criterion_7_policy_class_containment(cross_check_surface):
    surface = cross_check_surface.truncated(40)
    net = make_two_state_network(0.5, 0.3, l_max=6)
    variable = policy_iteration(surface, net, 40, 4, tau_bound=40)
    fixed_gains = {
        l: solve_fixed(surface, net, l, 4, tau_bound=40).gain for l in range(1, 5)
    }
    assert variable.gain <= min(fixed_gains.values()) + 1e-3
    b1 = policy_iteration(surface, net, 40, 1, tau_bound=40)
    rel = abs(b1.gain - fixed_gains[1]) / fixed_gains[1]
    assert rel < 1e-3
    print(
        f"\n[criterion 7] PASS: variable gain {variable.gain:.6f} <= best fixed "
        f"{min(fixed_gains.values()):.6f}; B=1 agreement {rel:.2e} relative "
        f"(mathematical equality, checked at the module's 1e-3 example bar)"
    )


def test_criterion_8_invariant_suites(paper_surface):
    # bisection residual strictly decreasing across a 20-point grid
    net = make_two_state_network(1.0, 0.05)
    col = paper_surface.column(2)
    grid = np.linspace(float(col.min()), float(col[-1]), 20)
    residuals = []
    for beta in grid:
        st = epoch_stats(paper_surface, net, 2, float(beta), 10, 500)
        residuals.append(st.expected_cost - beta * st.expected_length)
    assert np.all(np.diff(residuals) < 0)

    # threshold consistency of the solved waiting table
    policy = solve_fixed(paper_surface, net, 2, 10)
    ws = _Workspace(paper_surface, net, 2, 10, policy.tau_bound)
    eps = 1e-9 * max(1.0, policy.gain)
    for c in (1, 2):
        gamma = ws.gamma[c - 1]
        for age in range(0, 501, 13):
            tau = int(policy.wait[c - 1, age])
            assert gamma[min(age + tau, 500)] >= policy.gain - eps
            assert all(gamma[min(age + k, 500)] < policy.gain for k in range(tau))

    # renewal identity on a traced run
    res = simulate(FixedPolicyRule(policy), paper_surface, net, 5000, seed=4, trace=True)
    inner = [r for r in res.trace if r.index >= 2]
    epoch_total = math.fsum(r.cost for r in inner)
    slot_total = 0.0
    for t in range(res.trace[0].ack, inner[-1].ack):
        rec = max((r for r in res.trace if r.delivery <= t), key=lambda r: r.delivery)
        slot_total += eval_error(paper_surface, t - rec.start + rec.offset, rec.length)
    assert epoch_total == pytest.approx(slot_total, rel=1e-12, abs=1e-9)

    # epoch-law normalization across states and lengths
    for c in (1, 2):
        for l in (1, 5, 10):
            assert sum(epoch_law(net, c, l).values()) == pytest.approx(1.0, abs=1e-12)

    # seed determinism
    a = simulate(ZeroWaitRule(1), paper_surface, net, 20000, seed=99)
    b = simulate(ZeroWaitRule(1), paper_surface, net, 20000, seed=99)
    assert a.time_avg_error == b.time_avg_error
    print(
        "\n[criterion 8] PASS: residual monotonicity (20-point grid), waiting-"
        "table threshold consistency, renewal identity, epoch-law "
        "normalization, seed determinism"
    )
