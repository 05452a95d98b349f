import csv
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontime._validation import ConfigurationError
from ontime.analytics import OnTimeSpec, prob_first_on_time
from ontime.channel import make_rng
from ontime.mdp import (
    DROP,
    ActionSpace,
    Delay,
    Repeat,
    StateSpace,
    build_model,
    dump_model_csv,
    reward,
    reward_delay,
    reward_drop,
    reward_random,
    reward_repeat,
    transition,
    transition_delay,
    transition_drop,
    transition_random,
    transition_repeat,
)
from ontime.montecarlo import repeat_trials


def target_mass(p, spec, action, i):
    """Sum of untruncated transition probabilities over the rewarded next states."""
    j = np.arange(spec.t_target - spec.delta, spec.t_target + spec.delta + 1)
    return float(np.sum(transition(p, spec, action, i, j)))


def test_action_space_order_and_size():
    space = ActionSpace(3, 2)
    assert space.actions == [DROP, Delay(0), Delay(1), Delay(2), Delay(3), Repeat(0), Repeat(1),
                             Repeat(2)]
    assert len(space) == 8 == len(space.actions)
    assert all(space.index(a) == k for k, a in enumerate(space.actions))
    with pytest.raises(KeyError):
        space.index(Delay(4))
    assert str(Repeat(3)) == "repeat(3)" and str(DROP) == "drop"


def test_state_space_bounds():
    with pytest.raises(ConfigurationError):
        StateSpace(0, 10)
    s = StateSpace(-3, 4)
    assert s.size == 8 and s.index(-100) == 0 and s.index(100) == 7


def test_random_transition_examples():
    assert transition_random(0.2, 5, 0, 5) == 0.0
    assert transition_random(0.2, 5, 0, 4) == pytest.approx(0.2)
    j = np.arange(-400, 5)
    assert transition_random(0.2, 5, 0, j).sum() == pytest.approx(1.0, abs=1e-12)


def test_delay_transition_examples():
    i, j = np.meshgrid(np.arange(-20, 21), np.arange(-40, 30), indexing="ij")
    assert np.array_equal(transition_delay(0.2, 5, 0, i, j), transition_random(0.2, 5, i, j))
    assert transition_delay(0.2, 5, 3, 0, 1) == pytest.approx(0.2)
    assert transition_delay(0.2, 5, 3, 0, -2) == pytest.approx(0.2 * 0.8**3)
    assert transition_delay(0.2, 5, 3, 0, 2) == 0.0


def test_drop_transition_examples():
    assert transition_drop(5, 0, 5) == 1.0
    assert transition_drop(5, 0, 4) == 0.0
    assert transition_drop(5, -7, -2) == 1.0


def test_repeat_without_budget_is_random():
    spec = OnTimeSpec(10, 1)
    i, j = np.meshgrid(np.arange(-30, 31), np.arange(-80, 41), indexing="ij")
    got = transition_repeat(0.2, spec, 0, i, j)
    assert np.max(np.abs(got - transition_random(0.2, 10, i, j))) <= 1e-12


def test_repeat_needs_more_slots_than_budget():
    spec = OnTimeSpec(10, 1)
    for n_r in (1, 3, 6):
        for i in range(1 + 1 + n_r, 40):
            y = np.arange(1, n_r + 1)
            assert np.all(transition_repeat(0.2, spec, n_r, i, i - y + 10) == 0.0)


def test_repeat_row_against_protocol_simulation():
    p, spec, n_r, i, n = 0.2, OnTimeSpec(10, 1), 3, 10, 10**6
    s = repeat_trials(p, spec, n_r, n, make_rng(77), state=i)
    j_next = i - s + spec.t_target
    for j in range(-25, 20):
        theory = float(transition_repeat(p, spec, n_r, i, j))
        emp = float(np.mean(j_next == j))
        assert abs(emp - theory) <= max(3 * math.sqrt(theory * (1 - theory) / n), 1e-12), j


@pytest.mark.parametrize("n_r", [1, 2, 5])
@pytest.mark.parametrize("i", [-3, 2, 4, 7, 12, 30])
def test_repeat_rows_sum_to_one(n_r, i):
    spec = OnTimeSpec(5, 1)
    j = np.arange(i + 5 - 2000, i + 5)
    assert transition_repeat(0.2, spec, n_r, i, j).sum() == pytest.approx(1.0, abs=1e-12)


def test_reward_examples():
    spec = OnTimeSpec(5, 2)
    assert reward_random(0.2, spec, -2) == 0.0
    assert reward_random(0.2, spec, -7) == 0.0
    assert reward_drop(3) == 0.0
    assert reward_random(0.2, OnTimeSpec(5, 1), 5) == pytest.approx(prob_first_on_time(0.2, OnTimeSpec(5, 1)))


def test_repeat_reward_at_range_start():
    # From state 1+delta a random transmission is on time iff it decodes within
    # i+delta = 5 slots, and no slot can complete early.
    spec = OnTimeSpec(5, 2)
    i = 1 + spec.delta
    value = reward_repeat(0.2, spec, 1, i)
    assert value == pytest.approx(1 - 0.8**5, abs=1e-15)
    assert value == pytest.approx(target_mass(0.2, spec, Repeat(1), i), abs=1e-12)


@pytest.mark.parametrize("n_r", [0, 1, 4, 20])
def test_repeat_reward_where_budget_just_binds(n_r):
    spec = OnTimeSpec(5, 1)
    i = 1 + spec.delta + n_r
    assert reward_repeat(0.2, spec, n_r, i) == pytest.approx(1 - 0.8**3, abs=1e-15)


def test_delay_reward_is_shifted_random():
    spec = OnTimeSpec(5, 1)
    i = np.arange(-50, 51)
    for n_d in range(0, 21):
        assert np.array_equal(reward_delay(0.2, spec, n_d, i), reward_random(0.2, spec, i - n_d))


@pytest.mark.parametrize("T,d", [(5, 1), (4, 2), (12, 0), (33, 3)])
def test_rewards_equal_target_column_mass(T, d):
    spec = OnTimeSpec(T, d)
    # Drop shifts the state without a reception, so only transmissions count.
    actions = [a for a in ActionSpace(20, 20).actions if a.kind != "drop"]
    for i in range(-50, 51):
        assert reward(0.2, spec, DROP, i) == 0.0
        for a in actions:
            assert abs(float(reward(0.2, spec, a, i)) - target_mass(0.2, spec, a, i)) <= 1e-10, (i, a)


def test_build_model_invariants(small_model):
    m = small_model
    assert np.max(np.abs(m.row_sums() - 1.0)) <= 1e-10
    assert m.rewards.min() >= 0.0 and m.rewards.max() <= 1.0
    assert np.array_equal(m.costs, 1.0 - m.rewards)
    d0 = m.actions.index(Delay(0))
    r0 = m.actions.index(Repeat(0))
    assert (m.action_matrix(d0) != m.action_matrix(r0)).nnz == 0
    assert np.array_equal(m.rewards[d0], m.rewards[r0])
    assert m.max_pruned_mass < 1e-13


def test_rewards_come_from_closed_forms(small_model):
    m = small_model
    for k, a in enumerate(m.actions.actions):
        assert np.array_equal(m.rewards[k], np.asarray(reward(m.p, m.spec, a, m.states.states),
                                                       dtype=float))


def test_truncation_folds_onto_boundaries():
    spec = OnTimeSpec(5, 1)
    states = StateSpace(-10, 8)
    m = build_model(0.2, spec, states, ActionSpace(2, 2), prune_tol=0.0)
    drop = m.action_matrix(0).toarray()
    # Drop from state 8 would reach 13; it lands on iota_max.
    assert drop[-1, -1] == 1.0
    rnd = m.action_matrix(1).toarray()
    tail = 1.0 - transition_random(0.2, 5, -10, np.arange(-10, 9)).sum()
    assert rnd[0, 0] == pytest.approx(transition_random(0.2, 5, -10, -10) + tail, abs=1e-15)


def test_renormalize_switch():
    spec = OnTimeSpec(5, 1)
    m = build_model(0.2, spec, StateSpace(-10, 8), ActionSpace(2, 2), boundary="renormalize")
    assert np.max(np.abs(m.row_sums() - 1.0)) <= 1e-10
    with pytest.raises(ConfigurationError):
        build_model(0.2, spec, StateSpace(-10, 8), boundary="reflect")


def test_target_must_fit_state_space():
    with pytest.raises(ConfigurationError):
        build_model(0.2, OnTimeSpec(8, 3), StateSpace(-10, 10))


def test_default_model_size_and_build_time():
    t0 = time.perf_counter()
    m = build_model(0.2, OnTimeSpec(5, 1))
    elapsed = time.perf_counter() - t0
    assert (m.n_states, m.n_actions) == (1001, 43)
    assert elapsed < 5.0
    assert np.max(np.abs(m.row_sums() - 1.0)) <= 1e-10


def test_debug_dump(tmp_path):
    m = build_model(0.3, OnTimeSpec(2, 0), StateSpace(-3, 3), ActionSpace(1, 1))
    path = tmp_path / "model.csv"
    dump_model_csv(m, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# ontime-model v1"
    rows = list(csv.DictReader(lines[1:]))
    assert set(rows[0]) == {"state", "action", "next_state", "probability"}
    assert len(rows) == m.transitions.nnz
    total = {}
    for r in rows:
        key = (r["state"], r["action"])
        total[key] = total.get(key, 0.0) + float(r["probability"])
    assert len(total) == m.n_states * m.n_actions
    assert all(abs(v - 1.0) < 1e-10 for v in total.values())


@settings(max_examples=40, deadline=None)
@given(p=st.floats(0.05, 1.0), T=st.integers(1, 15), d=st.integers(0, 4),
       lo=st.integers(-40, -1), hi=st.integers(20, 40), n=st.integers(0, 6))
def test_rows_stochastic_for_random_models(p, T, d, lo, hi, n):
    m = build_model(p, OnTimeSpec(T, d), StateSpace(lo, hi), ActionSpace(n, n))
    assert np.max(np.abs(m.row_sums() - 1.0)) <= 1e-10
    assert np.all(m.transitions.data >= 0.0)
    assert m.rewards.min() >= 0.0 and m.rewards.max() <= 1.0 + 1e-15
