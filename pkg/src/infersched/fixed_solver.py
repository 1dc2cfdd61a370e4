"""Closed-form scheduler for a constant packet length.

The optimal policy factors into an index-based threshold waiting rule, a
per-delay-state buffer position, and a scalar gain equal to the optimal
time-average error.  The gain is the unique root of the renewal-reward
residual g(beta) = E[epoch cost] - beta * E[epoch length], which is
continuous, concave and strictly decreasing, so plain bisection finds it.
The outer packet-length search is exhaustive over 1..min(B, l_max).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _tables
from .delay_model import DelayNetwork, epoch_law, stationary_distribution
from .error_model import ErrorSurface

BISECTION_MAX_ITERS = 60
DEFAULT_TOL = 1e-9
SCHEMA_VERSION = 1


class ThresholdNeverCrossedError(RuntimeError):
    """Waiting rule found no age reaching the threshold within tau_bound."""


class DegenerateSurfaceError(RuntimeError):
    """Root bracket endpoints have the same sign."""


@dataclass(frozen=True)
class EpochStats:
    """Stationary per-epoch expectations under a fixed-length policy."""

    expected_cost: float
    expected_length: float


@dataclass(frozen=True, eq=False)
class FixedLengthPolicy:
    """Constant-length policy: gain, per-state buffer position and the
    waiting-time table over (delay state, age-at-ACK)."""

    length: int
    gain: float
    buffer: tuple[int, ...]
    wait: np.ndarray
    delta_max: int
    tau_bound: int

    def __post_init__(self) -> None:
        wait = np.array(self.wait, dtype=np.int64)
        wait.setflags(write=False)
        object.__setattr__(self, "wait", wait)
        object.__setattr__(self, "buffer", tuple(int(b) for b in self.buffer))

    @property
    def n_states(self) -> int:
        return self.wait.shape[0]

    def waiting_time(self, age: int, state: int) -> int:
        return int(self.wait[state - 1, min(age, self.delta_max)])

    def buffer_position(self, state: int) -> int:
        return self.buffer[state - 1]


class _Workspace:
    """Per-(surface, net, length) tables reused across bisection iterations."""

    def __init__(
        self,
        surface: ErrorSurface,
        net: DelayNetwork,
        length: int,
        buffer_size: int,
        tau_bound: int,
        with_index: bool = True,
    ) -> None:
        if not 1 <= length <= min(surface.l_max, net.l_max):
            raise ValueError(
                f"length {length} out of range 1..{min(surface.l_max, net.l_max)}"
            )
        if buffer_size < length:
            raise ValueError("buffer size must be at least the packet length")
        if tau_bound < 1:
            raise ValueError("tau_bound must be at least 1")
        self.surface = surface
        self.net = net
        self.length = length
        self.buffer_size = buffer_size
        self.tau_bound = int(tau_bound)
        self.delta_max = surface.delta_max
        self.n_states = net.n_states
        self.col = surface.column(length)
        self.prefix, self.tail = _tables.column_prefix(surface, length)
        self.support = [
            sorted(epoch_law(net, c, length).items()) for c in range(1, self.n_states + 1)
        ]
        self.pi = stationary_distribution(net)
        self.gamma = None
        if with_index:
            ages = np.arange(self.delta_max + 1)
            gamma = np.empty((self.n_states, self.delta_max + 1))
            for c in range(self.n_states):
                m = np.zeros(self.delta_max + 1)
                for (_, t_delay, _), prob in self.support[c]:
                    m += prob * self.col[np.minimum(ages + t_delay, self.delta_max)]
                gamma[c] = _tables.index_column(m, self.tau_bound)
            self.gamma = gamma

    def wait_columns(self, threshold: float) -> np.ndarray:
        wait = np.empty((self.n_states, self.delta_max + 1), dtype=np.int64)
        for c in range(self.n_states):
            offsets = _tables.first_crossing(self.gamma[c], threshold)
            if offsets is None or offsets.max() > self.tau_bound:
                raise ThresholdNeverCrossedError(
                    f"threshold never crossed within tau_bound for state {c + 1}: "
                    f"gain {threshold!r} exceeds the reachable index range; "
                    "delta_max/tau_bound too small or gain above the surface ceiling"
                )
            wait[c] = offsets
        return wait

    def buffer_positions(self, threshold: float, wait: np.ndarray) -> tuple[int, ...]:
        """Per current delay state, the buffer offset minimizing the expected
        error-above-gain over the next delivery-to-delivery window."""
        offsets = np.arange(self.buffer_size - self.length + 1)
        positions = []
        for c in range(self.n_states):
            objective = np.zeros(offsets.size)
            for (c1, t1, f1), p1 in self.support[c]:
                ack_age = np.minimum(offsets + t1 + f1, self.delta_max)
                waits = wait[c1 - 1][ack_age]
                for (_, t2, _), p2 in self.support[c1 - 1]:
                    span = f1 + waits + t2
                    sums = _tables.range_sum_vec(self.prefix, self.tail, offsets + t1, span)
                    objective += (p1 * p2) * (sums - threshold * span)
            positions.append(_tables.argmin_first(objective))
        return tuple(positions)

    def epoch_statistics(self, wait: np.ndarray, buffer: tuple[int, ...]) -> EpochStats:
        """Exact stationary expectations of per-epoch cost and length for the
        given waiting table and buffer map (renewal-reward numerator and
        denominator)."""
        cost = 0.0
        length_ = 0.0
        for c0 in range(self.n_states):
            w0 = float(self.pi[c0])
            b_prev = buffer[c0]
            for (c1, t1, f1), p1 in self.support[c0]:
                ack_age = b_prev + t1 + f1
                tau = int(wait[c1 - 1][min(ack_age, self.delta_max)])
                b_next = buffer[c1 - 1]
                for (_, t2, f2), p2 in self.support[c1 - 1]:
                    weight = w0 * p1 * p2
                    epoch_cost = _tables.range_sum(
                        self.prefix, self.tail, ack_age, tau + t2
                    ) + _tables.range_sum(self.prefix, self.tail, b_next + t2, f2)
                    cost += weight * epoch_cost
                    length_ += weight * (tau + t2 + f2)
        return EpochStats(cost, length_)

    def gain_residual(self, threshold: float):
        wait = self.wait_columns(threshold)
        buffer = self.buffer_positions(threshold, wait)
        stats = self.epoch_statistics(wait, buffer)
        residual = stats.expected_cost - threshold * stats.expected_length
        return residual, wait, buffer, stats


def wait_index(
    surface: ErrorSurface,
    net: DelayNetwork,
    age: int,
    delivered_length: int,
    next_length: int,
    state: int,
    tau_bound: int,
) -> float:
    """Smallest average expected error over any horizon of waiting at (age,
    state), with the currently delivered length governing the error column
    and the next transmission length governing the delay law."""
    if age < 0:
        raise ValueError("age must be non-negative")
    if tau_bound < 1:
        raise ValueError("tau_bound must be at least 1")
    col = surface.column(delivered_length)
    delta_max = surface.delta_max
    ages = np.arange(delta_max + 1)
    m = np.zeros(delta_max + 1)
    for (_, t_delay, _), prob in epoch_law(net, state, next_length).items():
        m += prob * col[np.minimum(ages + t_delay, delta_max)]
    start = min(age, delta_max)
    ext = np.concatenate([m[start:], np.full(tau_bound, m[-1])])
    means = np.cumsum(ext[:tau_bound]) / np.arange(1, tau_bound + 1)
    return float(means.min())


def waiting_time(
    surface: ErrorSurface,
    net: DelayNetwork,
    age: int,
    state: int,
    length: int,
    threshold: float,
    tau_bound: int,
) -> int:
    """Threshold rule: first extra wait k >= 0 whose index reaches the gain."""
    ws = _Workspace(surface, net, length, length, tau_bound)
    gamma = ws.gamma[state - 1]
    probe = gamma[np.minimum(age + np.arange(tau_bound + 1), surface.delta_max)]
    eps = _tables.TIE_REL_TOL * max(1.0, abs(threshold))
    hits = np.flatnonzero(probe >= threshold - eps)
    if hits.size == 0:
        raise ThresholdNeverCrossedError(
            f"threshold never crossed within tau_bound={tau_bound} from age {age}; "
            "delta_max/tau_bound too small or gain above the surface ceiling"
        )
    return int(hits[0])


def buffer_position(
    surface: ErrorSurface,
    net: DelayNetwork,
    state: int,
    length: int,
    threshold: float,
    buffer_size: int,
    tau_bound: int,
) -> int:
    ws = _Workspace(surface, net, length, buffer_size, tau_bound)
    wait = ws.wait_columns(threshold)
    return ws.buffer_positions(threshold, wait)[state - 1]


def epoch_stats(
    surface: ErrorSurface,
    net: DelayNetwork,
    length: int,
    threshold: float,
    buffer_size: int,
    tau_bound: int,
) -> EpochStats:
    ws = _Workspace(surface, net, length, buffer_size, tau_bound)
    _, _, _, stats = ws.gain_residual(threshold)
    return stats


def solve_fixed(
    surface: ErrorSurface,
    net: DelayNetwork,
    length: int,
    buffer_size: int,
    tau_bound: int | None = None,
    tol: float = DEFAULT_TOL,
) -> FixedLengthPolicy:
    """Bisection on the renewal-reward residual for one packet length.

    The residual is strictly decreasing in the candidate gain, positive at
    the column minimum and non-positive at the clamp-age value, so the root
    is unique and bracketed.  Gains above the clamp-age value would make the
    waiting rule uncrossable, hence the upper bracket is capped there.
    """
    if tau_bound is None:
        tau_bound = surface.delta_max
    ws = _Workspace(surface, net, length, buffer_size, tau_bound)
    col = ws.col
    lo = float(col.min())
    hi = float(col.max())
    if hi - lo <= 1e-15 * max(abs(hi), 1.0):
        wait = np.zeros((ws.n_states, ws.delta_max + 1), dtype=np.int64)
        buffer = tuple(0 for _ in range(ws.n_states))
        return FixedLengthPolicy(length, lo, buffer, wait, ws.delta_max, ws.tau_bound)
    hi = min(hi, float(col[-1]))
    g_lo, wait, buffer, _ = ws.gain_residual(lo)
    g_hi, wait_hi, buffer_hi, _ = ws.gain_residual(hi)
    if g_lo < 0 or g_hi > 0:
        raise DegenerateSurfaceError(
            f"degenerate surface: residual has the same sign at both bracket "
            f"endpoints (g({lo!r})={g_lo!r}, g({hi!r})={g_hi!r})"
        )
    best = (abs(g_hi), hi, wait_hi, buffer_hi) if abs(g_hi) < abs(g_lo) else (abs(g_lo), lo, wait, buffer)
    a, b = lo, hi
    for _ in range(BISECTION_MAX_ITERS):
        mid = 0.5 * (a + b)
        g_mid, wait, buffer, _ = ws.gain_residual(mid)
        if abs(g_mid) < best[0]:
            best = (abs(g_mid), mid, wait, buffer)
        if abs(g_mid) < tol:
            break
        if g_mid > 0:
            a = mid
        else:
            b = mid
    _, gain, wait, buffer = best
    return FixedLengthPolicy(length, gain, buffer, wait, ws.delta_max, ws.tau_bound)


def solve_fixed_all(
    surface: ErrorSurface,
    net: DelayNetwork,
    buffer_size: int,
    tau_bound: int | None = None,
    tol: float = DEFAULT_TOL,
) -> tuple[int, FixedLengthPolicy, dict[int, float]]:
    """Exhaustive packet-length search; ties broken toward the shorter packet."""
    top = min(buffer_size, surface.l_max, net.l_max)
    if top < 1:
        raise ValueError("no feasible packet length")
    gains: dict[int, float] = {}
    best_policy = None
    for length in range(1, top + 1):
        policy = solve_fixed(surface, net, length, buffer_size, tau_bound, tol)
        gains[length] = policy.gain
        if best_policy is None or policy.gain < best_policy.gain:
            best_policy = policy
    return best_policy.length, best_policy, gains


def iid_approx_network(net: DelayNetwork) -> DelayNetwork:
    """Memoryless misspecification: every transition row becomes the
    stationary distribution, erasing delay memory."""
    pi = stationary_distribution(net)
    rows = np.tile(pi, (net.n_states, 1))
    return DelayNetwork(rows, net.trans, net.fb)


def zero_wait_policy(
    surface: ErrorSurface, net: DelayNetwork, length: int
) -> FixedLengthPolicy:
    """Transmit the freshest sample immediately upon every ACK."""
    wait = np.zeros((net.n_states, surface.delta_max + 1), dtype=np.int64)
    buffer = tuple(0 for _ in range(net.n_states))
    policy = FixedLengthPolicy(length, float("nan"), buffer, wait, surface.delta_max, 1)
    gain, _ = evaluate_fixed_policy(surface, net, policy)
    return FixedLengthPolicy(length, gain, buffer, wait, surface.delta_max, 1)


def evaluate_fixed_policy(
    surface: ErrorSurface, net: DelayNetwork, policy: FixedLengthPolicy
) -> tuple[float, EpochStats]:
    """Exact time-average error of a fixed-length policy's tables on `net`
    (which need not be the network the policy was solved on)."""
    if policy.delta_max != surface.delta_max:
        raise ValueError("policy and surface disagree on delta_max")
    if policy.n_states != net.n_states:
        raise ValueError("policy and network disagree on the number of delay states")
    buffer_size = policy.length + max(policy.buffer)
    ws = _Workspace(
        surface, net, policy.length, buffer_size, policy.tau_bound, with_index=False
    )
    stats = ws.epoch_statistics(policy.wait, policy.buffer)
    return stats.expected_cost / stats.expected_length, stats


def save_fixed_policy(policy: FixedLengthPolicy, path) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "fixed",
        "length": policy.length,
        "gain": policy.gain,
        "buffer": {str(c + 1): policy.buffer[c] for c in range(policy.n_states)},
        "wait_table": [[int(t) for t in row] for row in policy.wait],
        "delta_max": policy.delta_max,
        "tau_bound": policy.tau_bound,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_fixed_policy(path) -> FixedLengthPolicy:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("kind") != "fixed":
        raise ValueError(f"not a fixed-length policy artifact: kind={payload.get('kind')!r}")
    n_states = len(payload["buffer"])
    buffer = tuple(int(payload["buffer"][str(c + 1)]) for c in range(n_states))
    return FixedLengthPolicy(
        int(payload["length"]),
        float(payload["gain"]),
        buffer,
        np.array(payload["wait_table"], dtype=np.int64),
        int(payload["delta_max"]),
        int(payload["tau_bound"]),
    )
