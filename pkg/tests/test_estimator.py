import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ontime.estimator import OnTimeScheduler
from ontime.mdp import Action

SMALL = dict(iota_min=-60, iota_max=60, n_d_max=5, n_r_max=5, discount=0.99, horizon=500)


@pytest.fixture(scope="module")
def fitted():
    return OnTimeScheduler(**SMALL).fit()


def test_params_round_trip():
    est = OnTimeScheduler(**SMALL)
    params = est.get_params()
    assert params["iota_min"] == -60 and params["discount"] == 0.99
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(delta=2)
    assert est.delta == 2


def test_unfitted_predict_raises():
    with pytest.raises(NotFittedError):
        OnTimeScheduler(**SMALL).predict([0])


def test_predict_matches_policy(fitted):
    states = np.arange(-60, 61)
    idx = fitted.predict(states)
    assert np.array_equal(idx, fitted.policy_.indices)
    assert np.array_equal(fitted.predict(states.reshape(-1, 1)), idx)
    actions = fitted.predict_actions([-60, 5, 60])
    assert all(isinstance(a, Action) for a in actions)
    assert actions[0].kind == "drop"


def test_predict_rejects_bad_states(fitted):
    with pytest.raises(ValueError):
        fitted.predict([61])
    with pytest.raises(ValueError):
        fitted.predict([0.5])


def test_score_is_a_rate(fitted):
    s = fitted.score()
    assert 0.25 < s < 1.0
    assert fitted.n_iter_ > 0 and fitted.residual_ <= 1e-3


def test_load_policy(tmp_path, fitted):
    path = tmp_path / "p.csv"
    fitted.policy_.to_csv(path)
    other = OnTimeScheduler(**SMALL).fit().load_policy(path)
    assert other.policy_ == fitted.policy_
