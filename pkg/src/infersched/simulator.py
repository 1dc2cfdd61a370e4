"""Slot-level simulator of the transmit/ACK epoch dynamics.

Acts as the Monte-Carlo oracle for the exact solvers: a decision rule maps
(age at ACK, delivered length, delay state of the finished epoch) to the
next (wait, length, buffer offset), the delay-state chain moves once per
ACK, and per-slot error is accumulated exactly from clamped prefix sums.
Replications use disjoint deterministic sub-streams derived from
(base seed, replication index).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import _tables
from .delay_model import DelayNetwork
from .error_model import ErrorSurface
from .fixed_solver import FixedLengthPolicy
from .variable_solver import VariableLengthPolicy


class InvalidActionError(RuntimeError):
    """A decision rule returned an action outside its contract."""


class DecisionRule(Protocol):
    def decide(self, age: int, delivered: int, state: int) -> tuple[int, int, int]:
        """(wait, length, buffer offset) for the next packet."""


@dataclass(frozen=True)
class ZeroWaitRule:
    """Transmit the freshest sample immediately upon every ACK."""

    length: int = 1

    def decide(self, age: int, delivered: int, state: int) -> tuple[int, int, int]:
        return 0, self.length, 0


@dataclass(frozen=True)
class FixedPolicyRule:
    policy: FixedLengthPolicy

    def decide(self, age: int, delivered: int, state: int) -> tuple[int, int, int]:
        return (
            self.policy.waiting_time(age, state),
            self.policy.length,
            self.policy.buffer_position(state),
        )


@dataclass(frozen=True)
class VariablePolicyRule:
    policy: VariableLengthPolicy

    def decide(self, age: int, delivered: int, state: int) -> tuple[int, int, int]:
        return self.policy.action(age, delivered, state)


@dataclass(frozen=True)
class EpochRecord:
    """One transmit/ACK epoch; cost covers the slots from the previous ACK
    (zero for the first epoch) up to this epoch's ACK."""

    index: int
    start: int
    delivery: int
    ack: int
    state: int
    offset: int
    length: int
    wait: int
    cost: float


@dataclass(frozen=True)
class SimResult:
    horizon: int
    time_avg_error: float
    epoch_count: int
    reps: int = 1
    rep_means: tuple[float, ...] = ()
    std: float = 0.0
    ci95: float = 0.0
    trace: tuple[EpochRecord, ...] | None = None


def simulate(
    rule: DecisionRule,
    surface: ErrorSurface,
    net: DelayNetwork,
    horizon: int,
    seed,
    initial_age: int = 1,
    initial_state: int = 1,
    buffer_size: int | None = None,
    trace: bool = False,
) -> SimResult:
    """Run one seeded realization over [0, horizon) slots.

    The first packet starts at slot 0 with length 1 and offset 0; before its
    delivery the age grows from initial_age and the delivered length counts
    as 1.  The chain moves at each ACK; decisions see the delay state of the
    epoch that just finished.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not 1 <= initial_state <= net.n_states:
        raise ValueError(f"initial_state {initial_state} out of range 1..{net.n_states}")
    if initial_age < 0:
        raise ValueError("initial_age must be non-negative")
    l_cap = min(surface.l_max, net.l_max)
    rng = np.random.default_rng(seed)
    prefixes = {l: _tables.column_prefix(surface, l) for l in range(1, l_cap + 1)}

    segments: list[float] = []
    records: list[EpochRecord] = []

    # First epoch: fixed initial conditions.
    state = initial_state
    start = 0
    length = 1
    offset = 0
    t_delay = net.trans_law(state, length).sample(rng)
    f_delay = net.fb_law(state).sample(rng)
    delivery = start + t_delay
    ack = delivery + f_delay
    wait = 0
    epoch_index = 1
    delivered_within = 1 if delivery < horizon else 0

    prefix1, tail1 = prefixes[1]
    pre_span = min(delivery, horizon)
    if pre_span > 0:
        segments.append(_tables.range_sum(prefix1, tail1, initial_age, pre_span))

    if trace:
        cost = _tables.range_sum(prefix1, tail1, initial_age, delivery) + _tables.range_sum(
            prefixes[length][0], prefixes[length][1], t_delay + offset, f_delay
        )
        records.append(
            EpochRecord(epoch_index, start, delivery, ack, state, offset, length, wait, cost)
        )

    while delivery < horizon:
        # ACK at `ack`: the chain moves, then the rule decides from the
        # finished epoch's state; the new state's laws set the next delays.
        ack_age = t_delay + f_delay + offset
        next_state = _sample_state(net, state, rng)
        action = rule.decide(ack_age, length, state)
        n_wait, n_length, n_offset = _validated(action, l_cap, buffer_size, epoch_index + 1)
        n_start = ack + n_wait
        n_t = net.trans_law(next_state, n_length).sample(rng)
        n_f = net.fb_law(next_state).sample(rng)
        n_delivery = n_start + n_t
        n_ack = n_delivery + n_f

        prefix_d, tail_d = prefixes[length]
        seg_end = min(n_delivery, horizon)
        if seg_end > delivery:
            segments.append(
                _tables.range_sum(prefix_d, tail_d, t_delay + offset, seg_end - delivery)
            )

        epoch_index += 1
        if trace:
            # Slots [ack, n_delivery) still show the old packet, ages from
            # ack_age; [n_delivery, n_ack) show the new one.
            prefix_n, tail_n = prefixes[n_length]
            cost = _tables.range_sum(prefix_d, tail_d, ack_age, n_delivery - ack)
            cost += _tables.range_sum(prefix_n, tail_n, n_t + n_offset, n_f)
            records.append(
                EpochRecord(
                    epoch_index, n_start, n_delivery, n_ack, next_state,
                    n_offset, n_length, n_wait, cost,
                )
            )
        if n_delivery < horizon:
            delivered_within += 1

        state = next_state
        start, delivery, ack = n_start, n_delivery, n_ack
        t_delay, f_delay = n_t, n_f
        length, offset, wait = n_length, n_offset, n_wait

    total = math.fsum(segments)
    return SimResult(
        horizon=horizon,
        time_avg_error=total / horizon,
        epoch_count=delivered_within,
        trace=tuple(records) if trace else None,
    )


def _sample_state(net: DelayNetwork, state: int, rng: np.random.Generator) -> int:
    cum = net._row_cum[state - 1]
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, net.n_states - 1) + 1


def _validated(action, l_cap, buffer_size, epoch):
    try:
        wait, length, offset = (int(x) for x in action)
    except (TypeError, ValueError) as exc:
        raise InvalidActionError(f"epoch {epoch}: malformed action {action!r}") from exc
    if wait < 0:
        raise InvalidActionError(f"epoch {epoch}: negative wait {wait}")
    if not 1 <= length <= l_cap:
        raise InvalidActionError(f"epoch {epoch}: length {length} out of range 1..{l_cap}")
    if offset < 0:
        raise InvalidActionError(f"epoch {epoch}: negative buffer offset {offset}")
    if buffer_size is not None and offset > buffer_size - length:
        raise InvalidActionError(
            f"epoch {epoch}: offset {offset} exceeds buffer {buffer_size} - length {length}"
        )
    return wait, length, offset


def replicate(
    rule: DecisionRule,
    surface: ErrorSurface,
    net: DelayNetwork,
    horizon: int,
    base_seed: int | tuple[int, ...],
    reps: int,
    initial_age: int = 1,
    initial_state: int = 1,
    buffer_size: int | None = None,
) -> SimResult:
    """Aggregate independent replications (disjoint sub-streams); the CI is
    the normal approximation mean +/- 1.96 * std / sqrt(reps)."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if isinstance(base_seed, (tuple, list)):
        base = tuple(int(x) for x in base_seed)
    else:
        base = (int(base_seed),)
    means = []
    epochs = 0
    for rep in range(reps):
        seed = np.random.SeedSequence(base + (rep,))
        result = simulate(
            rule, surface, net, horizon, seed,
            initial_age=initial_age, initial_state=initial_state,
            buffer_size=buffer_size,
        )
        means.append(result.time_avg_error)
        epochs += result.epoch_count
    mean = math.fsum(means) / reps
    if reps > 1:
        var = math.fsum((x - mean) ** 2 for x in means) / (reps - 1)
        std = math.sqrt(var)
    else:
        std = 0.0
    ci95 = 1.96 * std / math.sqrt(reps)
    return SimResult(
        horizon=horizon,
        time_avg_error=mean,
        epoch_count=epochs,
        reps=reps,
        rep_means=tuple(means),
        std=std,
        ci95=ci95,
    )
