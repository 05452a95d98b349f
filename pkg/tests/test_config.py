import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontime._validation import ConfigurationError
from ontime.config import ExperimentConfig


def test_empty_file_gives_reference_setup():
    cfg = ExperimentConfig.from_yaml("")
    assert cfg.p == 0.2
    assert (cfg.on_time.t_target, cfg.on_time.delta) == (5, 1)
    assert (cfg.model.iota_min, cfg.model.iota_max) == (-500, 500)
    assert (cfg.model.n_d_max, cfg.model.n_r_max) == (20, 20)
    assert cfg.solver.discount == 0.999 and cfg.solver.epsilon == 1e-3
    assert cfg.simulation.M == 10_000


def test_physical_channel_derives_p():
    cfg = ExperimentConfig.from_yaml("channel: {p: null, snr_threshold: 0.8047}")
    assert cfg.p == pytest.approx(0.2, abs=1e-4)


def test_exponent_literals_parse():
    assert ExperimentConfig.from_yaml("solver: {epsilon: 1e-4}").solver.epsilon == 1e-4


@pytest.mark.parametrize("text,path", [
    ("on_time: {t_target: 0}", "on_time.t_target"),
    ("on_time: {delta: -1}", "on_time.delta"),
    ("channel: {p: 1.5}", "channel.p"),
    ("solver: {discount: 1.0}", "solver.discount"),
    ("model: {iota_max: 4}", "model"),
    ("model: {boundary: wrap}", "model.boundary"),
    ("simulation: {replications: 0}", "simulation.replications"),
    ("simulation: {mode: greedy}", "simulation.mode"),
    ("sweep: {variable: delta, values: []}", "sweep.values"),
    ("sweep: {variable: colour, values: [1]}", "sweep.variable"),
    ("sweep: {variable: t_target, values: [5, 600]}", "model"),
    ("unknown: {}", "unknown"),
    ("model: {nd_max: 3}", "model.nd_max"),
    ("[1, 2]", "config"),
])
def test_errors_name_the_field(text, path):
    with pytest.raises(ConfigurationError) as info:
        ExperimentConfig.from_yaml(text)
    assert str(info.value).startswith(path)


def test_sweep_points_substitute_one_variable():
    cfg = ExperimentConfig.from_yaml("sweep: {variable: t_target, values: [2, 3, 4]}")
    points = cfg.points()
    assert [pt.on_time.t_target for pt in points] == [2, 3, 4]
    assert all(pt.sweep.variable is None for pt in points)
    assert [cfg.sweep_value(pt) for pt in points] == [2, 3, 4]


def test_overrides():
    cfg = ExperimentConfig().with_overrides(["simulation.M=500", "output=out.csv",
                                             "sweep.variable=p", "sweep.values=[0.1, 0.3]"])
    assert cfg.simulation.M == 500 and cfg.output == "out.csv"
    assert [pt.p for pt in cfg.points()] == [0.1, 0.3]
    with pytest.raises(ConfigurationError):
        ExperimentConfig().with_overrides(["simulation.M"])
    with pytest.raises(ConfigurationError):
        ExperimentConfig().with_overrides(["a.b.c=1"])


def test_load_from_file(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("on_time: {t_target: 7}\n")
    assert ExperimentConfig.load(path).on_time.t_target == 7


configs = st.fixed_dictionaries({
    "channel": st.fixed_dictionaries({"p": st.one_of(st.none(), st.floats(0.01, 1.0))}),
    "on_time": st.fixed_dictionaries({"t_target": st.integers(1, 50), "delta": st.integers(0, 10)}),
    "model": st.fixed_dictionaries({"iota_min": st.integers(-600, -1),
                                    "iota_max": st.integers(61, 600),
                                    "n_d_max": st.integers(0, 30),
                                    "n_r_max": st.integers(0, 30),
                                    "boundary": st.sampled_from(["clamp", "renormalize"])}),
    "solver": st.fixed_dictionaries({"discount": st.floats(0.5, 0.9999),
                                     "epsilon": st.floats(1e-9, 1.0)}),
    "simulation": st.fixed_dictionaries({"M": st.integers(1, 10**6),
                                         "seed": st.integers(0, 2**64 - 1),
                                         "theory": st.booleans()}),
    "sweep": st.one_of(
        st.just({}),
        st.fixed_dictionaries({"variable": st.just("delta"),
                               "values": st.lists(st.integers(0, 10), min_size=1, max_size=4)}),
        st.fixed_dictionaries({"variable": st.just("M"),
                               "values": st.lists(st.integers(1, 10**5), min_size=1, max_size=4)}),
    ),
    "output": st.one_of(st.none(), st.text("abc/._-", min_size=1, max_size=12)),
})


@settings(max_examples=150, deadline=None)
@given(data=configs)
def test_round_trip(data):
    cfg = ExperimentConfig.from_dict(data)
    text = cfg.to_yaml()
    again = ExperimentConfig.from_yaml(text)
    assert again == cfg
    assert again.to_yaml() == text
