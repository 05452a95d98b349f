"""Truncated MDP for delay / drop / repeat scheduling.

The state of a packet is its target reception slot minus its transmission
start slot, so a packet started in state ``i`` that needs ``S`` slots moves
the next packet to state ``i - S + t_target``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, xlogy

from ._validation import ConfigurationError, check_int, check_probability
from .analytics import OnTimeSpec

BOUNDARY_MODES = ("clamp", "renormalize")


class Action(NamedTuple):
    kind: str
    param: int = 0

    def __str__(self):
        return "drop" if self.kind == "drop" else f"{self.kind}({self.param})"

    @property
    def is_random(self):
        return self.kind != "drop" and self.param == 0


DROP = Action("drop", 0)


def Delay(n_d):
    return Action("delay", check_int(n_d, "n_d", 0))


def Repeat(n_r):
    return Action("repeat", check_int(n_r, "n_r", 0))


@dataclass(frozen=True)
class StateSpace:
    iota_min: int = -500
    iota_max: int = 500

    def __post_init__(self):
        if not (self.iota_min < 0 < self.iota_max):
            raise ConfigurationError(
                f"state bounds must satisfy iota_min < 0 < iota_max, got "
                f"[{self.iota_min}, {self.iota_max}]"
            )

    @property
    def size(self):
        return self.iota_max - self.iota_min + 1

    @property
    def states(self):
        return np.arange(self.iota_min, self.iota_max + 1)

    def index(self, state):
        """Row index of ``state``, clamped to the boundary states."""
        return int(min(max(state, self.iota_min), self.iota_max)) - self.iota_min


@dataclass(frozen=True)
class ActionSpace:
    """Actions in the fixed order ``[Drop, Delay(0..n_d_max), Repeat(0..n_r_max)]``."""

    n_d_max: int = 20
    n_r_max: int = 20

    def __post_init__(self):
        check_int(self.n_d_max, "n_d_max", 0)
        check_int(self.n_r_max, "n_r_max", 0)

    @property
    def actions(self):
        return (
            [DROP]
            + [Delay(n) for n in range(self.n_d_max + 1)]
            + [Repeat(n) for n in range(self.n_r_max + 1)]
        )

    def __len__(self):
        return 3 + self.n_d_max + self.n_r_max

    def index(self, action):
        kind, param = action
        if kind == "drop":
            return 0
        if kind == "delay" and 0 <= param <= self.n_d_max:
            return 1 + param
        if kind == "repeat" and 0 <= param <= self.n_r_max:
            return 2 + self.n_d_max + param
        raise KeyError(f"{action} is not in this action space")


# --- transition laws -------------------------------------------------------


def _tabulate(fn, y):
    """Evaluate ``fn`` on integer array ``y`` through a table over its range."""
    y = np.asarray(y)
    if y.size == 0:
        return np.zeros(y.shape)
    lo = int(y.min())
    table = fn(np.arange(lo, int(y.max()) + 1))
    return table[y - lo]


def _geometric_pmf(p, s):
    """``p (1-p)^(s-1)`` for integer array ``s``; zero where ``s < 1``."""
    def pmf(s):
        out = p * np.power(1.0 - p, np.maximum(s - 1, 0), dtype=float)
        return np.where(s >= 1, out, 0.0)
    return _tabulate(pmf, s)


def transition_random(p, t_target, i, j):
    i, j = np.asarray(i), np.asarray(j)
    return _geometric_pmf(p, i - j + t_target)


def transition_delay(p, t_target, n_d, i, j):
    return transition_random(p, t_target, np.asarray(i) - n_d, j)


def transition_drop(t_target, i, j):
    return np.where(np.asarray(j) == np.asarray(i) + t_target, 1.0, 0.0)


def _binom_pmf(n, k, p):
    """Binomial pmf for arrays ``n``, ``k`` (zero outside ``0 <= k <= n``)."""
    n, k = np.broadcast_arrays(np.asarray(n, dtype=float), np.asarray(k, dtype=float))
    valid = (k >= 0) & (k <= n)
    nn, kk = np.where(valid, n, 0.0), np.where(valid, k, 0.0)
    log_pmf = (
        gammaln(nn + 1) - gammaln(kk + 1) - gammaln(nn - kk + 1)
        + xlogy(kk, p) + xlogy(nn - kk, 1.0 - p)
    )
    return np.where(valid, np.exp(log_pmf), 0.0)


def _at_most_successes(n_slots, n_max, p):
    """``Pr{at most n_max decodes in n_slots slots}`` (negative counts read as 0)."""
    n = np.maximum(np.asarray(n_slots), 0)
    total = np.zeros(np.shape(n))
    for k in range(n_max + 1):
        total = total + _binom_pmf(n, k, p)
    return total


def transition_repeat(p, spec: OnTimeSpec, n_r, i, j):
    """Transition law of a packet allowed at most ``n_r`` retransmissions.

    ``y = i - j + t_target`` is the total time spent on the packet and
    ``early = i - 1 - delta`` the number of slots that complete before the
    target range. Three regimes:

    * ``i <= 1 + delta``: nothing can arrive early, same as random.
    * ``early < n_r``: the budget never binds; the packet lands at the first
      decode after the early slots.
    * ``early >= n_r``: either all ``n_r + 1`` attempts finish early
      (negative binomial), or at most ``n_r`` do and the next decode lands
      after the early slots.
    """
    p = check_probability(p)
    n_r = check_int(n_r, "n_r", 0)
    T, d = spec.t_target, spec.delta
    if n_r == 0:
        return transition_random(p, T, i, j)
    i0 = np.asarray(i)
    i, j = np.broadcast_arrays(i0, np.asarray(j))
    y = i - j + T
    early = i - 1 - d

    random = _geometric_pmf(p, y)
    # Landing after the early slots: first decode at y, none in (early, y).
    unbound = _geometric_pmf(p, y - early)
    # All n_r + 1 attempts finish early; the last one at y.
    all_early = np.where(
        y <= early, _tabulate(lambda v: _binom_pmf(v - 1, n_r, p) * p, y), 0.0
    )
    survive = _at_most_successes(i0 - 1 - d, n_r, p)
    bound = all_early + survive * unbound

    return np.where(i <= 1 + d, random, np.where(early < n_r, unbound, bound))


def transition(p, spec: OnTimeSpec, action, i, j):
    kind, param = action
    if kind == "drop":
        return transition_drop(spec.t_target, i, j)
    if kind == "delay":
        return transition_delay(p, spec.t_target, param, i, j)
    if kind == "repeat":
        return transition_repeat(p, spec, param, i, j)
    raise ValueError(f"unknown action kind {kind!r}")


# --- expected one-step rewards ---------------------------------------------


def reward_random(p, spec: OnTimeSpec, i):
    p = check_probability(p)
    q = 1.0 - p
    d = spec.delta
    i = np.asarray(i)
    window = 1.0 - q ** (1 + 2 * d)
    late_start = np.power(q, np.maximum(i - 1 - d, 0), dtype=float) * window
    partial = 1.0 - np.power(q, np.maximum(i + d, 0), dtype=float)
    out = np.where(i <= -d, 0.0, np.where(i > d, late_start, partial))
    return out if out.ndim else float(out)


def reward_delay(p, spec: OnTimeSpec, n_d, i):
    return reward_random(p, spec, np.asarray(i) - check_int(n_d, "n_d", 0))


def reward_drop(i):
    out = np.zeros(np.shape(i))
    return out if out.ndim else 0.0


def reward_repeat(p, spec: OnTimeSpec, n_r, i):
    p = check_probability(p)
    n_r = check_int(n_r, "n_r", 0)
    if n_r == 0:
        return reward_random(p, spec, i)
    q = 1.0 - p
    d = spec.delta
    i = np.asarray(i)
    window = 1.0 - q ** (1 + 2 * d)
    survive = _at_most_successes(i - 1 - d, n_r, p)
    out = np.where(
        i <= 1 + d,
        reward_random(p, spec, i),
        np.where(i <= 1 + d + n_r, window, survive * window),
    )
    return out if out.ndim else float(out)


def reward(p, spec: OnTimeSpec, action, i):
    kind, param = action
    if kind == "drop":
        return reward_drop(i)
    if kind == "delay":
        return reward_delay(p, spec, param, i)
    if kind == "repeat":
        return reward_repeat(p, spec, param, i)
    raise ValueError(f"unknown action kind {kind!r}")


# --- model assembly --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Truncated MDP with transitions stacked action-major.

    ``transitions`` is a CSR matrix of shape ``(n_actions * n_states,
    n_states)``; row ``a * n_states + s`` is the next-state law of action
    ``a`` in state ``s``.
    """

    p: float
    spec: OnTimeSpec
    states: StateSpace
    actions: ActionSpace
    transitions: sp.csr_matrix
    rewards: np.ndarray
    boundary: str = "clamp"
    prune_tol: float = 0.0
    max_pruned_mass: float = 0.0

    @property
    def costs(self):
        return 1.0 - self.rewards

    @property
    def n_states(self):
        return self.states.size

    @property
    def n_actions(self):
        return len(self.actions)

    def action_matrix(self, a):
        n = self.n_states
        return self.transitions[a * n:(a + 1) * n]

    def row_sums(self):
        return np.asarray(self.transitions.sum(axis=1)).reshape(self.n_actions, self.n_states)


def _truncated_block(p, spec, action, states: StateSpace, boundary):
    """Dense ``(n_states, n_states)`` transition block for one action."""
    T = spec.t_target
    i = states.states[:, None]
    # Every action moves the state up by at most t_target.
    j = np.arange(states.iota_min, states.iota_max + T + 1)[None, :]
    full = transition(p, spec, action, i, j)
    n = states.size
    inside = full[:, :n].copy()
    above = full[:, n:].sum(axis=1)
    below = np.clip(1.0 - full.sum(axis=1), 0.0, None)
    if boundary == "renormalize":
        mass = inside.sum(axis=1)
        ok = mass > 0
        inside[ok] /= mass[ok][:, None]
        above = np.where(ok, 0.0, above)
        below = np.where(ok, 0.0, below)
    inside[:, -1] += above
    inside[:, 0] += below
    return inside


def build_model(p, spec: OnTimeSpec, states: StateSpace | None = None,
                actions: ActionSpace | None = None, boundary="clamp", prune_tol=1e-15):
    """Assemble transitions and closed-form rewards for every (state, action).

    Next states below ``iota_min`` are folded onto ``iota_min`` and those above
    ``iota_max`` onto ``iota_max`` (``boundary="clamp"``); ``"renormalize"``
    instead rescales the in-range entries. Entries smaller than ``prune_tol``
    are dropped from the sparse storage and the largest dropped row mass is
    recorded. Rewards always come from the untruncated closed forms.
    """
    p = check_probability(p)
    states = states or StateSpace()
    actions = actions or ActionSpace()
    if boundary not in BOUNDARY_MODES:
        raise ConfigurationError(f"boundary must be one of {BOUNDARY_MODES}, got {boundary!r}")
    if spec.t_target + spec.delta > states.iota_max:
        raise ConfigurationError(
            f"t_target + delta = {spec.t_target + spec.delta} exceeds iota_max = {states.iota_max}"
        )
    blocks, rewards = [], []
    max_pruned = 0.0
    for action in actions.actions:
        block = _truncated_block(p, spec, action, states, boundary)
        if prune_tol > 0:
            small = block < prune_tol
            max_pruned = max(max_pruned, float(np.where(small, block, 0.0).sum(axis=1).max()))
            block[small] = 0.0
        blocks.append(sp.csr_matrix(block))
        rewards.append(reward(p, spec, action, states.states))
    transitions = sp.vstack(blocks, format="csr")
    transitions.sort_indices()
    return MdpModel(
        p=p, spec=spec, states=states, actions=actions, transitions=transitions,
        rewards=np.vstack(rewards), boundary=boundary, prune_tol=prune_tol,
        max_pruned_mass=max_pruned,
    )


def dump_model_csv(model: MdpModel, path):
    """Write ``state,action,next_state,probability`` rows for every stored entry."""
    coo = model.transitions.tocoo()
    labels = [str(a) for a in model.actions.actions]
    n = model.n_states
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", newline="") as fh:
        fh.write("# ontime-model v1\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state", "action", "next_state", "probability"])
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            a, s = divmod(int(r), n)
            writer.writerow([s + model.states.iota_min, labels[a],
                             int(c) + model.states.iota_min, repr(float(v))])
