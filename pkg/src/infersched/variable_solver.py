"""Average-cost policy iteration over (age, delivered-length, delay-state).

Two interchangeable improvement steps are provided: an exhaustive joint
minimization over (wait, length, buffer offset) and the factored form in
which the wait comes from the index threshold rule and only (length, offset)
are searched.  Both share the same cost tables, converge to the same gain,
and the factored step is asymptotically cheaper; its improvement-phase wall
time is recorded for the complexity comparison.  Policy evaluation solves
the differential-value linear system exactly.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import _tables
from .delay_model import DelayNetwork, epoch_law
from .error_model import ErrorSurface
from .fixed_solver import FixedLengthPolicy, ThresholdNeverCrossedError

DEFAULT_TOL = 1e-9
MAX_ITERATIONS = 100
SCHEMA_VERSION = 1
VARIANTS = ("original", "simplified")


class SolverConvergenceError(RuntimeError):
    """Policy iteration hit the round cap; carries the last gain/residual."""

    def __init__(self, message: str, gain: float, residual: float) -> None:
        super().__init__(message)
        self.gain = gain
        self.residual = residual


@dataclass(frozen=True)
class SmdpState:
    """Decision-time state: age at ACK, delivered packet length, delay state."""

    age: int
    delivered: int
    state: int


@dataclass(frozen=True, eq=False)
class VariableLengthPolicy:
    """Variable-length policy: gain, per-state action triples (wait, length,
    buffer offset) and the relative values pinned to zero at the reference
    state (age=delta_max, delivered=1, state=1)."""

    gain: float
    delta_max: int
    buffer_size: int
    actions: np.ndarray
    h: np.ndarray
    timings: dict

    def __post_init__(self) -> None:
        actions = np.array(self.actions, dtype=np.int64)
        h = np.array(self.h, dtype=float)
        actions.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "h", h)

    def action(self, age: int, delivered: int, state: int) -> tuple[int, int, int]:
        tau, length, offset = self.actions[min(age, self.delta_max), delivered - 1, state - 1]
        return int(tau), int(length), int(offset)


class _SmdpWorkspace:
    """Precomputed cost tables for one (surface, net, B, tau_bound) instance."""

    def __init__(
        self,
        surface: ErrorSurface,
        net: DelayNetwork,
        buffer_size: int,
        tau_bound: int,
        lengths: tuple[int, ...] | None = None,
    ) -> None:
        if buffer_size < 1:
            raise ValueError("buffer size must be at least 1")
        if buffer_size > surface.l_max or buffer_size > net.l_max:
            raise ValueError(
                "buffer size exceeds the length range covered by the surface/network"
            )
        if tau_bound < 1:
            raise ValueError("tau_bound must be at least 1")
        self.surface = surface
        self.net = net
        self.buffer_size = buffer_size
        self.tau_bound = int(tau_bound)
        self.delta_max = surface.delta_max
        self.n_states = net.n_states
        self.lengths = tuple(lengths) if lengths is not None else tuple(range(1, buffer_size + 1))
        if not self.lengths or any(not 1 <= l <= buffer_size for l in self.lengths):
            raise ValueError("lengths must be a non-empty subset of 1..buffer_size")
        self.columns = {}
        for d in range(1, buffer_size + 1):
            prefix, tail = _tables.column_prefix(surface, d)
            self.columns[d] = (prefix, tail)
        self.support = {}
        self.e_time = {}
        for c in range(1, self.n_states + 1):
            for l in self.lengths:
                sup = sorted(epoch_law(net, c, l).items())
                self.support[(c, l)] = sup
                self.e_time[(c, l)] = sum(p * (t + f) for (_, t, f), p in sup)
        # Expected transmission-window cost v[(d,c,l)](x) for windows starting
        # at age x, and the per-age index columns driving the threshold rule.
        xs = np.arange(self.delta_max + self.tau_bound + 1)
        ages = np.arange(self.delta_max + 1)
        self.window_cost = {}
        self.gamma = {}
        for d in range(1, buffer_size + 1):
            prefix, tail = self.columns[d]
            col = surface.column(d)
            for c in range(1, self.n_states + 1):
                for l in self.lengths:
                    v = np.zeros(xs.size)
                    m = np.zeros(ages.size)
                    for (_, t, _), p in self.support[(c, l)]:
                        v += p * _tables.range_sum_vec(prefix, tail, xs, t)
                        m += p * col[np.minimum(ages + t, self.delta_max)]
                    self.window_cost[(d, c, l)] = v
                    self.gamma[(d, c, l)] = _tables.index_column(m, self.tau_bound)
        self.ref = (self.delta_max, 1, 1)
        self.n_total = (self.delta_max + 1) * buffer_size * self.n_states

    def state_index(self, age: int, delivered: int, state: int) -> int:
        return (age * self.buffer_size + (delivered - 1)) * self.n_states + (state - 1)

    def iter_states(self):
        for age in range(self.delta_max + 1):
            for delivered in range(1, self.buffer_size + 1):
                for state in range(1, self.n_states + 1):
                    yield age, delivered, state

    def offer_tables(self, h: np.ndarray, threshold: float):
        """Per (state, length): the b-indexed feedback-plus-continuation cost
        shared by both improvement variants."""
        tables = {}
        for c in range(1, self.n_states + 1):
            for l in self.lengths:
                prefix_l, tail_l = self.columns[l]
                offs = np.arange(self.buffer_size - l + 1)
                g = np.zeros(offs.size)
                for (c2, t, f), p in self.support[(c, l)]:
                    starts = offs + t
                    fb_cost = _tables.range_sum_vec(prefix_l, tail_l, starts, f)
                    nxt_age = np.minimum(starts + f, self.delta_max)
                    g += p * (fb_cost - threshold * f + h[nxt_age, l - 1, c2 - 1])
                tables[(c, l)] = g
        return tables

    def wait_tables(self, threshold: float):
        """Threshold-rule waiting columns per (delivered, state, length); the
        wait falls back to tau_bound (counted) if the gain iterate sits above
        the reachable index range."""
        tables = {}
        fallbacks = 0
        for key, gamma in self.gamma.items():
            offsets = _tables.first_crossing(gamma, threshold)
            if offsets is None:
                offsets = np.full(gamma.size, self.tau_bound, dtype=np.int64)
                fallbacks += 1
            else:
                over = offsets > self.tau_bound
                if np.any(over):
                    offsets = np.where(over, self.tau_bound, offsets)
                    fallbacks += 1
            tables[key] = offsets
        return tables, fallbacks

    def transmit_cost_vector(self, age: int, delivered: int, state: int, length: int,
                             threshold: float) -> np.ndarray:
        """Waiting-plus-transmission cost over all waits 0..tau_bound."""
        prefix_d, tail_d = self.columns[delivered]
        taus = np.arange(self.tau_bound + 1)
        waitcost = _tables.range_sum_vec(prefix_d, tail_d, age, taus)
        v = self.window_cost[(delivered, state, length)]
        return waitcost + v[age + taus] - threshold * (taus + self.e_time[(state, length)])

    def transmit_cost(self, age: int, delivered: int, state: int, length: int,
                      tau: int, threshold: float) -> float:
        prefix_d, tail_d = self.columns[delivered]
        waitcost = _tables.range_sum(prefix_d, tail_d, age, tau)
        v = self.window_cost[(delivered, state, length)]
        return waitcost + float(v[age + tau]) - threshold * (tau + self.e_time[(state, length)])


def _improve_original_state(ws, offer, threshold, age, delivered, state):
    best_val = None
    best = None
    for l in ws.lengths:
        u = ws.transmit_cost_vector(age, delivered, state, l, threshold)
        q = offer[(state, l)][:, None] + u[None, :]
        flat = _tables.argmin_first(q.ravel())
        b_i, tau_i = divmod(flat, q.shape[1])
        val = float(q[b_i, tau_i])
        if best_val is None or _tables.strictly_less(val, best_val):
            best_val = val
            best = (tau_i, l, b_i)
    return best, best_val


def _improve_simplified_state(ws, offer, waits, offer_min, threshold, age, delivered, state):
    best_val = None
    best = None
    for l in ws.lengths:
        tau = int(waits[(delivered, state, l)][age])
        u = ws.transmit_cost(age, delivered, state, l, tau, threshold)
        b_i, g_min = offer_min[(state, l)]
        val = u + g_min
        if best_val is None or _tables.strictly_less(val, best_val):
            best_val = val
            best = (tau, l, b_i)
    return best, best_val


def improve_original(
    surface: ErrorSurface,
    net: DelayNetwork,
    h: np.ndarray,
    threshold: float,
    state: SmdpState,
    buffer_size: int,
    tau_bound: int,
    lengths: tuple[int, ...] | None = None,
) -> tuple[int, int, int]:
    """Exact joint argmin of the one-round improvement objective; ties break
    lexicographically on (length, offset, wait)."""
    ws = _SmdpWorkspace(surface, net, buffer_size, tau_bound, lengths)
    offer = ws.offer_tables(np.asarray(h, dtype=float), threshold)
    best, _ = _improve_original_state(ws, offer, threshold, state.age, state.delivered, state.state)
    return best


def improve_simplified(
    surface: ErrorSurface,
    net: DelayNetwork,
    h: np.ndarray,
    threshold: float,
    state: SmdpState,
    buffer_size: int,
    tau_bound: int,
    lengths: tuple[int, ...] | None = None,
) -> tuple[int, int, int]:
    """Factored improvement: threshold rule fixes the wait per candidate
    length, then only the buffer offset and the length are searched."""
    ws = _SmdpWorkspace(surface, net, buffer_size, tau_bound, lengths)
    offer = ws.offer_tables(np.asarray(h, dtype=float), threshold)
    waits, fallbacks = ws.wait_tables(threshold)
    if fallbacks:
        raise ThresholdNeverCrossedError(
            "threshold never crossed within tau_bound during improvement"
        )
    offer_min = {
        k: (i, float(v[i]))
        for k, v in offer.items()
        for i in (_tables.argmin_first(v),)
    }
    best, _ = _improve_simplified_state(
        ws, offer, waits, offer_min, threshold, state.age, state.delivered, state.state
    )
    return best


def waiting_time(
    surface: ErrorSurface,
    net: DelayNetwork,
    age: int,
    delivered: int,
    length: int,
    state: int,
    threshold: float,
    tau_bound: int,
) -> int:
    """Threshold waiting rule with independent delivered/next lengths: the
    delivered length governs the error column, the next transmission length
    the delay law."""
    if age < 0:
        raise ValueError("age must be non-negative")
    col = surface.column(delivered)
    ages = np.arange(surface.delta_max + 1)
    m = np.zeros(ages.size)
    for (_, t, _), p in epoch_law(net, state, length).items():
        m += p * col[np.minimum(ages + t, surface.delta_max)]
    gamma = _tables.index_column(m, tau_bound)
    probe = gamma[np.minimum(age + np.arange(tau_bound + 1), surface.delta_max)]
    eps = _tables.TIE_REL_TOL * max(1.0, abs(threshold))
    hits = np.flatnonzero(probe >= threshold - eps)
    if hits.size == 0:
        raise ThresholdNeverCrossedError(
            f"threshold never crossed within tau_bound={tau_bound} from age {age}"
        )
    return int(hits[0])


def _sweep_improvement(ws, h, threshold, variant):
    actions = np.empty((ws.delta_max + 1, ws.buffer_size, ws.n_states, 3), dtype=np.int64)
    offer = ws.offer_tables(h, threshold)
    fallbacks = 0
    if variant == "simplified":
        waits, fallbacks = ws.wait_tables(threshold)
        offer_min = {
            k: (i, float(v[i]))
            for k, v in offer.items()
            for i in (_tables.argmin_first(v),)
        }
        for age, d, c in ws.iter_states():
            best, _ = _improve_simplified_state(ws, offer, waits, offer_min, threshold, age, d, c)
            actions[age, d - 1, c - 1] = best
    else:
        for age, d, c in ws.iter_states():
            best, _ = _improve_original_state(ws, offer, threshold, age, d, c)
            actions[age, d - 1, c - 1] = best
    return actions, fallbacks


def evaluate_policy(
    surface: ErrorSurface,
    net: DelayNetwork,
    actions: np.ndarray,
    delta_max: int | None = None,
    buffer_size: int | None = None,
) -> tuple[float, np.ndarray]:
    """Exact gain and relative values of a stationary policy (action array
    indexed [age, delivered-1, state-1] -> (wait, length, offset))."""
    actions = np.asarray(actions, dtype=np.int64)
    if delta_max is None:
        delta_max = actions.shape[0] - 1
    if buffer_size is None:
        buffer_size = actions.shape[1]
    if delta_max != surface.delta_max:
        surface = surface.truncated(delta_max)
    tau_cap = max(1, int(actions[..., 0].max()))
    ws = _SmdpWorkspace(surface, net, buffer_size, tau_cap)
    gain, h, _ = _evaluate(ws, actions)
    return gain, h


def _evaluate(ws, actions):
    """Solve h(s) = cost(s) - gain*time(s) + E h(next) with h(ref) = 0."""
    n = ws.n_total
    rows, cols, vals = [], [], []
    rhs = np.zeros(n + 1)
    clamp_events = 0
    for age, d, c in ws.iter_states():
        s = ws.state_index(age, d, c)
        tau, l, b = (int(x) for x in actions[age, d - 1, c - 1])
        prefix_d, tail_d = ws.columns[d]
        prefix_l, tail_l = ws.columns[l]
        cost = _tables.range_sum(prefix_d, tail_d, age, tau)
        cost += float(ws.window_cost[(d, c, l)][min(age + tau, ws.delta_max + ws.tau_bound)])
        time_ = tau + ws.e_time[(c, l)]
        rows.append(s)
        cols.append(s)
        vals.append(1.0)
        rows.append(s)
        cols.append(n)
        vals.append(time_)
        for (c2, t, f), p in ws.support[(c, l)]:
            cost += p * _tables.range_sum(prefix_l, tail_l, b + t, f)
            nxt_age = b + t + f
            if nxt_age > ws.delta_max:
                nxt_age = ws.delta_max
                clamp_events += 1
            s2 = ws.state_index(nxt_age, l, c2)
            rows.append(s)
            cols.append(s2)
            vals.append(-p)
        rhs[s] = cost
    ref = ws.state_index(*ws.ref)
    rows.append(n)
    cols.append(ref)
    vals.append(1.0)
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(n + 1, n + 1))
    solution = spsolve(mat, rhs)
    if not np.all(np.isfinite(solution)):
        raise RuntimeError("policy not unichain: singular evaluation system")
    gain = float(solution[n])
    h = solution[:n].reshape(ws.delta_max + 1, ws.buffer_size, ws.n_states)
    h = h - h[ws.ref[0], ws.ref[1] - 1, ws.ref[2] - 1]  # pin the reference exactly
    return gain, h, clamp_events


def embed_fixed_policy(policy: FixedLengthPolicy, buffer_size: int) -> np.ndarray:
    """Action array applying a fixed-length policy at every delivered length."""
    n_delta = policy.delta_max + 1
    actions = np.empty((n_delta, buffer_size, policy.n_states, 3), dtype=np.int64)
    for c in range(policy.n_states):
        actions[:, :, c, 0] = policy.wait[c][:, None]
        actions[:, :, c, 1] = policy.length
        actions[:, :, c, 2] = policy.buffer[c]
    return actions


def policy_iteration(
    surface: ErrorSurface,
    net: DelayNetwork,
    delta_max: int,
    buffer_size: int,
    tau_bound: int | None = None,
    variant: str = "simplified",
    tol: float = DEFAULT_TOL,
    max_iterations: int = MAX_ITERATIONS,
    lengths: tuple[int, ...] | None = None,
) -> VariableLengthPolicy:
    """Howard policy iteration; the improvement threshold is the current
    iterate's gain, which matches the optimality condition at the fixed
    point.  Improvement/evaluation wall times are recorded in timings."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if delta_max > surface.delta_max:
        raise ValueError("delta_max exceeds the surface grid")
    if delta_max < surface.delta_max:
        surface = surface.truncated(delta_max)
    if tau_bound is None:
        tau_bound = delta_max
    ws = _SmdpWorkspace(surface, net, buffer_size, tau_bound, lengths)
    actions = np.zeros((delta_max + 1, buffer_size, ws.n_states, 3), dtype=np.int64)
    actions[..., 1] = ws.lengths[0]
    gain_prev = None
    gain = float("nan")
    h = None
    improve_seconds = 0.0
    evaluate_seconds = 0.0
    total_fallbacks = 0
    clamp_events = 0
    converged = False
    rounds = 0
    gain_history: list[float] = []
    for rounds in range(1, max_iterations + 1):
        t0 = time.perf_counter()
        gain, h, clamp_events = _evaluate(ws, actions)
        evaluate_seconds += time.perf_counter() - t0
        gain_history.append(gain)
        t0 = time.perf_counter()
        new_actions, fallbacks = _sweep_improvement(ws, h, gain, variant)
        improve_seconds += time.perf_counter() - t0
        total_fallbacks += fallbacks
        if np.array_equal(new_actions, actions):
            converged = True
            break
        if gain_prev is not None and abs(gain - gain_prev) < tol:
            actions = new_actions
            gain, h, clamp_events = _evaluate(ws, actions)
            gain_history.append(gain)
            converged = True
            break
        actions = new_actions
        gain_prev = gain
    if not converged:
        residual = abs(gain - gain_prev) if gain_prev is not None else float("inf")
        raise SolverConvergenceError(
            f"policy iteration did not converge in {max_iterations} rounds "
            f"(last gain {gain!r}, gain change {residual!r})",
            gain,
            residual,
        )
    timings = {
        "variant": variant,
        "iterations": rounds,
        "improve_seconds": improve_seconds,
        "evaluate_seconds": evaluate_seconds,
        "wait_fallbacks": total_fallbacks,
        "clamp_events": clamp_events,
        "gain_history": gain_history,
    }
    return VariableLengthPolicy(gain, delta_max, buffer_size, actions, h, timings)


def save_variable_policy(policy: VariableLengthPolicy, path) -> None:
    n_delta, buffer_size, n_states, _ = policy.actions.shape
    actions = []
    for age in range(n_delta):
        for d in range(1, buffer_size + 1):
            for c in range(1, n_states + 1):
                tau, l, b = policy.actions[age, d - 1, c - 1]
                actions.append(
                    {"delta": age, "d": d, "c": c, "tau": int(tau), "l": int(l), "b": int(b)}
                )
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "variable",
        "gain": policy.gain,
        "delta_max": policy.delta_max,
        "B": policy.buffer_size,
        "n_states": n_states,
        "actions": actions,
        "h": [float(x) for x in policy.h.ravel()],
        "timings": policy.timings,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_variable_policy(path) -> VariableLengthPolicy:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("kind") != "variable":
        raise ValueError(f"not a variable-length policy artifact: kind={payload.get('kind')!r}")
    delta_max = int(payload["delta_max"])
    buffer_size = int(payload["B"])
    n_states = int(payload["n_states"])
    actions = np.zeros((delta_max + 1, buffer_size, n_states, 3), dtype=np.int64)
    for item in payload["actions"]:
        actions[item["delta"], item["d"] - 1, item["c"] - 1] = (
            item["tau"],
            item["l"],
            item["b"],
        )
    h = np.array(payload["h"], dtype=float).reshape(delta_max + 1, buffer_size, n_states)
    return VariableLengthPolicy(
        float(payload["gain"]), delta_max, buffer_size, actions, h, dict(payload["timings"])
    )
