"""Estimator-style wrapper: ``fit`` solves the MDP, ``predict`` maps states to actions."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_states
from .analytics import OnTimeSpec
from .mdp import ActionSpace, StateSpace, build_model
from .solver import Policy, SolverConfig, evaluate_policy_horizon, value_iteration


class OnTimeScheduler(BaseEstimator):
    """Optimal delay/drop/repeat scheduler for one channel and target interval.

    There is no training data: ``fit`` builds the transition model from the
    parameters and runs value iteration. ``X`` in ``predict`` is a vector (or
    single column) of states.

    Attributes after ``fit``: ``model_``, ``policy_``, ``values_``,
    ``n_iter_``, ``residual_``.
    """

    def __init__(self, p=0.2, t_target=5, delta=1, iota_min=-500, iota_max=500,
                 n_d_max=20, n_r_max=20, discount=0.999, epsilon=1e-3,
                 max_iterations=100_000, boundary="clamp", horizon=10_000):
        self.p = p
        self.t_target = t_target
        self.delta = delta
        self.iota_min = iota_min
        self.iota_max = iota_max
        self.n_d_max = n_d_max
        self.n_r_max = n_r_max
        self.discount = discount
        self.epsilon = epsilon
        self.max_iterations = max_iterations
        self.boundary = boundary
        self.horizon = horizon

    def fit(self, X=None, y=None):
        spec = OnTimeSpec(self.t_target, self.delta)
        self.model_ = build_model(
            self.p, spec, StateSpace(self.iota_min, self.iota_max),
            ActionSpace(self.n_d_max, self.n_r_max), boundary=self.boundary,
        )
        result = value_iteration(self.model_, SolverConfig(self.discount, self.epsilon,
                                                           self.max_iterations))
        self.policy_ = result.policy
        self.values_ = result.values
        self.n_iter_ = result.iterations
        self.residual_ = result.residual
        return self

    def predict(self, X):
        """Action index (in the fixed enumeration order) for each state in ``X``."""
        check_is_fitted(self, "policy_")
        states = check_states(X, self.policy_.states)
        return self.policy_.indices[states - self.policy_.states.iota_min]

    def predict_actions(self, X):
        """Like ``predict`` but returns ``Action`` tuples."""
        return [self.policy_.actions[k] for k in self.predict(X)]

    def score(self, X=None, y=None):
        """Expected on-time rate over ``horizon`` packets from the initial state."""
        check_is_fitted(self, "policy_")
        total = evaluate_policy_horizon(self.model_, self.policy_, self.horizon, self.t_target)
        return total / self.horizon

    def load_policy(self, path):
        """Replace the fitted policy with one read from a policy CSV."""
        check_is_fitted(self, "model_")
        policy = Policy.from_csv(path, self.model_.actions.actions)
        if policy.states != self.model_.states:
            raise ValueError("policy file state range differs from the fitted model")
        self.policy_ = policy
        return self

    def __sklearn_is_fitted__(self):
        return hasattr(self, "policy_") and isinstance(getattr(self, "values_", None), np.ndarray)
