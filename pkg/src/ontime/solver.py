"""Discounted value iteration and finite-horizon expected-reward recursions."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ._validation import ConfigurationError, check_int
from .mdp import Action, MdpModel, StateSpace

# Candidates within this relative distance of the optimum count as ties and
# resolve to the earliest action in the fixed enumeration order.
TIE_RTOL = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, iterations, residual):
        super().__init__(
            f"value iteration stopped after {iterations} sweeps with residual {residual:.3e}"
        )
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True)
class SolverConfig:
    discount: float = 0.999
    epsilon: float = 1e-3
    max_iterations: int = 100_000

    def __post_init__(self):
        if not 0.0 < self.discount < 1.0:
            raise ConfigurationError(f"discount must lie in (0, 1), got {self.discount}")
        if not self.epsilon > 0.0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        check_int(self.max_iterations, "max_iterations", 1)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy: one action index per state, in state order."""

    states: StateSpace
    actions: tuple
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        if idx.shape != (self.states.size,):
            raise ValueError(f"policy must assign {self.states.size} states, got {idx.shape}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "actions", tuple(self.actions))

    def action(self, state) -> Action:
        return self.actions[self.indices[self.states.index(state)]]

    def __iter__(self):
        for s, a in zip(self.states.states, self.indices):
            yield int(s), self.actions[a]

    def __eq__(self, other):
        return (
            isinstance(other, Policy)
            and self.states == other.states
            and self.actions == other.actions
            and np.array_equal(self.indices, other.indices)
        )

    def to_csv(self, path=None):
        """Write ``state,action_kind,param`` rows; returns the text if ``path`` is None."""
        buf = io.StringIO()
        buf.write("# ontime-policy v1\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["state", "action_kind", "param"])
        for state, action in self:
            writer.writerow([state, action.kind, action.param])
        text = buf.getvalue()
        if path is None:
            return text
        with open(path, "w", newline="") as fh:
            fh.write(text)
        return None

    @classmethod
    def from_csv(cls, path, actions):
        """Read a policy file; ``actions`` is the model's action list."""
        actions = list(actions)
        lookup = {(a.kind, a.param): k for k, a in enumerate(actions)}
        with open(path, newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
        rows = list(csv.DictReader(lines))
        if not rows:
            raise ValueError(f"{path}: empty policy file")
        states = [int(r["state"]) for r in rows]
        if states != list(range(states[0], states[-1] + 1)):
            raise ValueError(f"{path}: states must be consecutive and ascending")
        try:
            idx = [lookup[(r["action_kind"], int(r["param"]))] for r in rows]
        except KeyError as exc:
            raise ValueError(f"{path}: action {exc.args[0]} not in the action space") from None
        return cls(StateSpace(states[0], states[-1]), actions, np.array(idx))


@dataclass(frozen=True, eq=False)
class SolveResult:
    values: np.ndarray
    policy: Policy
    iterations: int
    residual: float
    residuals: np.ndarray = field(repr=False)
    discount: float = 0.999

    def gain_estimate(self, state):
        """Average-cost estimate ``(1 - discount) * V(state)``."""
        return (1.0 - self.discount) * float(self.values[self.policy.states.index(state)])


def _first_best(Q, best, sense):
    """Earliest action index whose candidate is within tolerance of ``best``."""
    tol = TIE_RTOL * np.maximum(1.0, np.abs(best))
    near = Q <= best + tol if sense == "min" else Q >= best - tol
    return np.argmax(near, axis=0)


def bellman_candidates(model: MdpModel, V, discount):
    A, N = model.n_actions, model.n_states
    return model.costs + discount * (model.transitions @ V).reshape(A, N)


def value_iteration(model: MdpModel, cfg: SolverConfig | None = None, allowed=None) -> SolveResult:
    """Jacobi value iteration on discounted cost from ``V = 0``.

    Stops once the sup-norm change between sweeps is at most ``epsilon``; the
    returned policy is the greedy action of the final sweep. ``allowed``
    optionally restricts the candidates to the given action indices.
    """
    cfg = cfg or SolverConfig()
    penalty = None
    if allowed is not None:
        allowed = np.unique(np.asarray(allowed, dtype=np.int64))
        if allowed.size == 0 or allowed.min() < 0 or allowed.max() >= model.n_actions:
            raise ConfigurationError("allowed must name at least one valid action index")
        penalty = np.full((model.n_actions, 1), np.inf)
        penalty[allowed] = 0.0
    V = np.zeros(model.n_states)
    residuals = []
    for it in range(1, cfg.max_iterations + 1):
        Q = bellman_candidates(model, V, cfg.discount)
        if penalty is not None:
            Q = Q + penalty
        V_new = Q.min(axis=0)
        dv = float(np.max(np.abs(V_new - V)))
        residuals.append(dv)
        V = V_new
        if dv <= cfg.epsilon:
            break
    else:
        raise ConvergenceError(cfg.max_iterations, residuals[-1])
    policy = Policy(model.states, model.actions.actions, _first_best(Q, V, "min"))
    return SolveResult(
        values=V, policy=policy, iterations=it, residual=dv,
        residuals=np.array(residuals), discount=cfg.discount,
    )


def policy_matrices(model: MdpModel, policy: Policy):
    """Transition matrix and reward vector of the chain induced by ``policy``."""
    if policy.states != model.states:
        raise ValueError("policy and model state spaces differ")
    N = model.n_states
    idx = np.asarray(policy.indices)
    rows = idx * N + np.arange(N)
    P = model.transitions[rows]
    R = model.rewards[idx, np.arange(N)]
    return P, R


def evaluate_discounted_cost(model: MdpModel, policy: Policy, discount):
    """Solve ``(I - discount * P) V = C`` for the policy's discounted cost."""
    P, R = policy_matrices(model, policy)
    lhs = sp.identity(model.n_states, format="csc") - discount * P.tocsc()
    return spla.spsolve(lhs, 1.0 - R)


def evaluate_policy_horizon(model: MdpModel, policy: Policy, M, s1):
    """Expected on-time count over ``M`` packets when ``policy`` is followed."""
    M = check_int(M, "M", 1)
    P, R = policy_matrices(model, policy)
    V = np.zeros(model.n_states)
    for _ in range(M):
        V = R + P @ V
    return float(V[model.states.index(s1)])


def random_trajectory(model: MdpModel, M):
    """Rows ``V'_1 .. V'_M`` of expected totals under uncontrolled transmission."""
    M = check_int(M, "M", 1)
    a = model.actions.index(Action("delay", 0))
    P, R = model.action_matrix(a), model.rewards[a]
    out = np.empty((M, model.n_states))
    V = R.copy()
    out[0] = V
    for m in range(1, M):
        V = R + P @ V
        out[m] = V
    return out


def expected_reward_random(model: MdpModel, M, s1=None):
    """``v'_M(s1)``: expected on-time count of ``M`` uncontrolled packets."""
    s1 = model.spec.t_target if s1 is None else s1
    V = random_trajectory(model, M)[-1]
    return float(V[model.states.index(s1)])


@dataclass(frozen=True, eq=False)
class ScheduledReward:
    value: float
    trajectory: np.ndarray
    actions: np.ndarray
    final_values: np.ndarray

    def rate(self, m=None):
        """``v_m(s1) / m``; the full horizon by default."""
        m = len(self.trajectory) if m is None else m
        return float(self.trajectory[m - 1]) / m


def expected_reward_scheduled(model: MdpModel, M, s1=None, keep_actions=True,
                              random_values=None):
    """Finite-horizon optimum ``v_M(s1)`` with the greedy action of every stage.

    ``trajectory[m-1]`` holds ``v_m(s1)``. ``actions[m-1]`` is the maximising
    action index per state when ``m`` packets remain. When ``random_values``
    is a list, ``V'_m`` is appended each stage, for dominance checks.
    """
    M = check_int(M, "M", 1)
    s1 = model.spec.t_target if s1 is None else s1
    k = model.states.index(s1)
    A, N = model.n_actions, model.n_states
    V = np.zeros(N)
    trajectory = np.empty(M)
    actions = np.empty((M, N), dtype=np.int16) if keep_actions else np.empty((0, N), np.int16)
    if random_values is not None:
        a0 = model.actions.index(Action("delay", 0))
        P0, R0, Vr = model.action_matrix(a0), model.rewards[a0], np.zeros(N)
    for m in range(M):
        Q = model.rewards + (model.transitions @ V).reshape(A, N)
        V = Q.max(axis=0)
        if keep_actions:
            actions[m] = _first_best(Q, V, "max")
        trajectory[m] = V[k]
        if random_values is not None:
            Vr = R0 + P0 @ Vr
            random_values.append(Vr)
    return ScheduledReward(value=float(V[k]), trajectory=trajectory, actions=actions,
                           final_values=V)
