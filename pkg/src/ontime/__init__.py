"""On-time packet delivery over fading channels: analytics, MDP scheduling, simulation."""

from ._validation import ConfigurationError, DomainError
from .analytics import (
    AnalyticResult,
    OnTimeSpec,
    analyze_random,
    enumerate_on_time_counts,
    expected_on_time_count,
    nested_sum_identity,
    prob_first_on_time,
    prob_mth_on_time,
    prob_on_time_with_repeats,
    repeat_ccdf,
)
from .channel import ChannelParams, ExponentialGain, make_rng, sample_transmission_time, success_probability
from .config import ExperimentConfig
from .estimator import OnTimeScheduler
from .mdp import DROP, Action, ActionSpace, Delay, MdpModel, Repeat, StateSpace, build_model
from .montecarlo import SimConfig, SimResult, replicate, simulate_sequence, single_packet_repeat_trial
from .solver import (
    ConvergenceError,
    Policy,
    SolverConfig,
    evaluate_discounted_cost,
    expected_reward_random,
    expected_reward_scheduled,
    value_iteration,
)

__version__ = "0.1.0"

__all__ = [
    "Action", "ActionSpace", "AnalyticResult", "ChannelParams", "ConfigurationError",
    "ConvergenceError", "DROP", "Delay", "DomainError", "ExperimentConfig", "ExponentialGain",
    "MdpModel", "OnTimeScheduler", "OnTimeSpec", "Policy", "Repeat", "SimConfig", "SimResult",
    "SolverConfig", "StateSpace", "analyze_random", "build_model", "enumerate_on_time_counts",
    "evaluate_discounted_cost", "expected_on_time_count", "expected_reward_random",
    "expected_reward_scheduled", "make_rng", "nested_sum_identity", "prob_first_on_time",
    "prob_mth_on_time", "prob_on_time_with_repeats", "repeat_ccdf", "replicate",
    "sample_transmission_time", "simulate_sequence", "single_packet_repeat_trial",
    "success_probability", "value_iteration",
]
