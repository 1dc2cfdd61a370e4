"""Markov-modulated two-way delay model.

A DelayNetwork holds an ergodic delay-state chain plus, per state, a
length-dependent transmission-delay law and a feedback-delay law (finite
pmfs; the reference experiments use point masses).  One chain transition
happens per transmit/ACK epoch, and the joint law of (next state,
transmission delay, feedback delay) is exactly enumerable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import networkx as nx
import numpy as np
import tomli

PMF_TOL = 1e-12
STATIONARY_TOL = 1e-12


class NotErgodicError(ValueError):
    """Delay-state chain is reducible or periodic."""


class InvalidTransitionError(ValueError):
    """Requested transition probabilities do not form a valid chain."""


@dataclass(frozen=True)
class DelayLaw:
    """Finite pmf over integer delays >= 1 slot."""

    outcomes: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        if not self.outcomes:
            raise ValueError("delay law needs at least one outcome")
        seen = set()
        total = 0.0
        for delay, prob in self.outcomes:
            if not isinstance(delay, int) or delay < 1:
                raise ValueError(f"delays must be integers >= 1 slot, got {delay!r}")
            if delay in seen:
                raise ValueError(f"duplicate delay {delay}")
            if not (math.isfinite(prob) and prob > 0):
                raise ValueError(f"probabilities must be positive, got {prob!r}")
            seen.add(delay)
            total += prob
        if abs(total - 1.0) > PMF_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        ordered = tuple(sorted(self.outcomes))
        object.__setattr__(self, "outcomes", ordered)
        cum = np.cumsum([p for _, p in ordered])
        cum[-1] = 1.0
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_pmf(cls, pmf: Mapping[int, float]) -> "DelayLaw":
        return cls(tuple((int(d), float(p)) for d, p in pmf.items() if p != 0.0))

    @classmethod
    def point(cls, delay: int) -> "DelayLaw":
        return cls(((int(delay), 1.0),))

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(d for d, _ in self.outcomes)

    @property
    def mean(self) -> float:
        return sum(d * p for d, p in self.outcomes)

    @property
    def max_delay(self) -> int:
        return self.outcomes[-1][0]

    def prob(self, delay: int) -> float:
        for d, p in self.outcomes:
            if d == delay:
                return p
        return 0.0

    def sample(self, rng: np.random.Generator) -> int:
        if len(self.outcomes) == 1:
            return self.outcomes[0][0]
        idx = int(np.searchsorted(self._cum, rng.random(), side="right"))
        return self.outcomes[min(idx, len(self.outcomes) - 1)][0]


@dataclass(frozen=True, eq=False)
class DelayNetwork:
    """Ergodic delay-state chain with per-state delay laws.

    trans[c-1][l-1] is the transmission-delay law in state c for packets of
    length l; fb[c-1] is state c's feedback-delay law.  Immutable and safe to
    share across threads.
    """

    transition: np.ndarray
    trans: tuple[tuple[DelayLaw, ...], ...]
    fb: tuple[DelayLaw, ...]

    def __post_init__(self) -> None:
        mat = np.array(self.transition, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise ValueError("transition matrix must be square and non-empty")
        if np.any(mat < 0) or not np.all(np.isfinite(mat)):
            raise ValueError("transition probabilities must be finite and non-negative")
        if np.max(np.abs(mat.sum(axis=1) - 1.0)) > PMF_TOL:
            raise ValueError("transition matrix rows must sum to 1")
        n = mat.shape[0]
        trans = tuple(tuple(row) for row in self.trans)
        fb = tuple(self.fb)
        if len(trans) != n or len(fb) != n:
            raise ValueError("need one transmission-law row and one feedback law per state")
        widths = {len(row) for row in trans}
        if len(widths) != 1 or not trans[0]:
            raise ValueError("every state needs laws for the same length range 1..l_max")
        for row in trans:
            for law in row:
                if not isinstance(law, DelayLaw):
                    raise ValueError("transmission laws must be DelayLaw instances")
        for law in fb:
            if not isinstance(law, DelayLaw):
                raise ValueError("feedback laws must be DelayLaw instances")
        graph = nx.DiGraph()
        graph.add_nodes_from(range(n))
        for i in range(n):
            for j in range(n):
                if mat[i, j] > 0:
                    graph.add_edge(i, j)
        if not nx.is_strongly_connected(graph) or not nx.is_aperiodic(graph):
            raise NotErgodicError("not ergodic: chain must be irreducible and aperiodic")
        mat.setflags(write=False)
        object.__setattr__(self, "transition", mat)
        object.__setattr__(self, "trans", trans)
        object.__setattr__(self, "fb", fb)
        row_cum = np.cumsum(mat, axis=1)
        row_cum[:, -1] = 1.0
        row_cum.setflags(write=False)
        object.__setattr__(self, "_row_cum", row_cum)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def l_max(self) -> int:
        return len(self.trans[0])

    def trans_law(self, state: int, length: int) -> DelayLaw:
        if not 1 <= state <= self.n_states:
            raise ValueError(f"state {state} out of range 1..{self.n_states}")
        if not 1 <= length <= self.l_max:
            raise ValueError(f"length {length} out of range 1..{self.l_max}")
        return self.trans[state - 1][length - 1]

    def fb_law(self, state: int) -> DelayLaw:
        if not 1 <= state <= self.n_states:
            raise ValueError(f"state {state} out of range 1..{self.n_states}")
        return self.fb[state - 1]

    def max_trans_delay(self, length: int) -> int:
        return max(self.trans_law(c, length).max_delay for c in range(1, self.n_states + 1))

    @property
    def max_fb_delay(self) -> int:
        return max(law.max_delay for law in self.fb)


def stationary_distribution(net: DelayNetwork) -> np.ndarray:
    """Unique stationary distribution of the delay-state chain."""
    p = net.transition
    n = net.n_states
    mat = p.T - np.eye(n)
    mat[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    pi = np.linalg.solve(mat, rhs)
    residual = float(np.max(np.abs(pi @ p - pi)))
    if residual > STATIONARY_TOL or np.any(pi <= 0):
        raise NotErgodicError(f"not ergodic: stationary solve residual {residual:.3e}")
    return pi


def make_two_state_network(
    sigma: float,
    alpha: float,
    variant: str = "plain",
    l_max: int = 10,
) -> DelayNetwork:
    """Two-route network with a fast state 1 and a slow state 2.

    Transmission delay grows linearly in packet length with scale sigma
    (5x slower in state 2; the offset variant adds a 5-slot floor there),
    always at least one slot.  Feedback takes 1 slot in state 1 and 3 in
    state 2.  Cross-transition probability is alpha/2 in each direction.
    """
    if not (math.isfinite(sigma) and sigma >= 0):
        raise ValueError("sigma must be non-negative and finite")
    if not 0 < alpha < 2:
        raise InvalidTransitionError("invalid transition mass: alpha must lie in (0, 2)")
    if variant not in ("plain", "offset"):
        raise ValueError(f"unknown variant {variant!r}")
    if l_max < 1:
        raise ValueError("l_max must be at least 1")
    q = alpha / 2.0
    transition = np.array([[1.0 - q, q], [q, 1.0 - q]])
    fast = tuple(DelayLaw.point(max(1, math.ceil(sigma * l))) for l in range(1, l_max + 1))
    if variant == "plain":
        slow = tuple(DelayLaw.point(max(1, math.ceil(5 * sigma * l))) for l in range(1, l_max + 1))
    else:
        slow = tuple(DelayLaw.point(5 + math.ceil(5 * sigma * l)) for l in range(1, l_max + 1))
    fb = (DelayLaw.point(1), DelayLaw.point(3))
    return DelayNetwork(transition, (fast, slow), fb)


def epoch_law(net: DelayNetwork, state: int, length: int) -> dict[tuple[int, int, int], float]:
    """Joint pmf of (next delay state, transmission delay, feedback delay).

    The chain moves once per epoch; the new state's laws govern the next
    packet's transmission and feedback delays.
    """
    row = net.transition[state - 1] if 1 <= state <= net.n_states else None
    if row is None:
        raise ValueError(f"state {state} out of range 1..{net.n_states}")
    out: dict[tuple[int, int, int], float] = {}
    for nxt in range(1, net.n_states + 1):
        p_state = float(row[nxt - 1])
        if p_state == 0.0:
            continue
        t_law = net.trans_law(nxt, length)
        f_law = net.fb_law(nxt)
        for t_delay, p_t in t_law.outcomes:
            for f_delay, p_f in f_law.outcomes:
                key = (nxt, t_delay, f_delay)
                out[key] = out.get(key, 0.0) + p_state * p_t * p_f
    return out


def sample_epoch(
    net: DelayNetwork, state: int, length: int, rng: np.random.Generator
) -> tuple[int, int, int]:
    """Draw one (next state, transmission delay, feedback delay) triple."""
    if not 1 <= state <= net.n_states:
        raise ValueError(f"state {state} out of range 1..{net.n_states}")
    cum = net._row_cum[state - 1]
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    nxt = min(idx, net.n_states - 1) + 1
    t_delay = net.trans_law(nxt, length).sample(rng)
    f_delay = net.fb_law(nxt).sample(rng)
    return nxt, t_delay, f_delay


def _law_from_pairs(pairs, where: str) -> DelayLaw:
    try:
        return DelayLaw(tuple((int(d), float(p)) for d, p in pairs))
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{where}: {exc}") from exc


def load_network(path) -> DelayNetwork:
    """Read a network from TOML: either a two-state preset or explicit tables.

    Preset form: preset = "two_state" with sigma, alpha, optional variant and
    l_max.  Explicit form: n_states, transition_matrix (row-major), and per
    state a table with trans_pmf (one [delay, prob] list per length) and
    fb_pmf ([delay, prob] pairs).
    """
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    return network_from_dict(data)


def network_from_dict(data: dict) -> DelayNetwork:
    if data.get("preset") == "two_state":
        return make_two_state_network(
            float(data["sigma"]),
            float(data["alpha"]),
            data.get("variant", "plain"),
            int(data.get("l_max", 10)),
        )
    if "preset" in data:
        raise ValueError(f"unknown network preset {data['preset']!r}")
    try:
        n = int(data["n_states"])
        flat = [float(x) for x in data["transition_matrix"]]
        states = data["states"]
    except KeyError as exc:
        raise ValueError(f"network config missing key {exc}") from exc
    if len(flat) != n * n:
        raise ValueError(f"transition_matrix needs {n * n} entries, got {len(flat)}")
    if len(states) != n:
        raise ValueError(f"need {n} [[states]] tables, got {len(states)}")
    transition = np.array(flat).reshape(n, n)
    trans_rows = []
    fb_laws = []
    for i, entry in enumerate(states, start=1):
        trans_rows.append(
            tuple(
                _law_from_pairs(pairs, f"state {i} trans_pmf length {l}")
                for l, pairs in enumerate(entry["trans_pmf"], start=1)
            )
        )
        fb_laws.append(_law_from_pairs(entry["fb_pmf"], f"state {i} fb_pmf"))
    return DelayNetwork(transition, tuple(trans_rows), tuple(fb_laws))
