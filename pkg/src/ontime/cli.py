"""Command-line experiment runner.

Subcommands write CSV (or JSON diagnostics) and exit 0. On failure a single
JSON object ``{"category": ..., "message": ..., "exit_code": ...}`` is
printed to stderr and the process exits with the category's code. Output
files are written only after the whole command has succeeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import replace

from ._validation import ConfigurationError, DomainError
from .analytics import prob_mth_on_time, expected_on_time_count, repeat_ccdf
from .config import ExperimentConfig
from .mdp import build_model, dump_model_csv
from .montecarlo import SimConfig, replicate
from .solver import (
    ConvergenceError,
    Policy,
    expected_reward_random,
    expected_reward_scheduled,
    value_iteration,
)

log = logging.getLogger("ontime")

ANALYTIC_SCHEMA = "ontime-analytic v1"
SWEEP_SCHEMA = "ontime-sweep v1"
SOLVE_SCHEMA = "ontime-solve v1"

EXIT_CODES = {"usage": 2, "config": 2, "domain": 3, "convergence": 4, "io": 5, "policy": 6,
              "internal": 1}


class PolicyMismatchError(ConfigurationError):
    """A policy file does not fit the configured model."""


# Per-figure overrides applied on top of the (default or user) config.
FIGURES = {
    3: ["channel.p=0.2", "on_time.t_target=5", "analytic.quantity=per_packet",
        "analytic.m_max=30", "sweep.variable=delta", "sweep.values=[0, 1, 2, 3]"],
    4: ["channel.p=0.2", "on_time.t_target=20", "on_time.delta=1",
        "analytic.quantity=repeat_ccdf", "analytic.j_min=-20", "analytic.j_max=20",
        "sweep.variable=n_r", "sweep.values=[0, 1, 5, 20]"],
    7: ["channel.p=0.2", "on_time.t_target=5", "simulation.M=10000", "simulation.mode=both",
        "simulation.theory=true", "sweep.variable=delta", "sweep.values=[0, 1, 2, 3]"],
    8: ["channel.p=0.2", "on_time.delta=2", "simulation.M=10000", "simulation.mode=both",
        "simulation.theory=true", "sweep.variable=t_target",
        "sweep.values=[2, 3, 4, 5, 6, 7, 8, 9, 10]"],
    9: ["on_time.t_target=4", "on_time.delta=2", "simulation.M=10000", "simulation.mode=both",
        "simulation.theory=true", "sweep.variable=p",
        "sweep.values=[0.1, 0.2, 0.3, 0.4, 0.5]"],
    10: ["channel.p=0.2", "on_time.t_target=5", "on_time.delta=1", "simulation.mode=both",
         "simulation.theory=true", "sweep.variable=M", "sweep.values=[100, 1000, 10000]"],
    11: ["channel.p=0.2", "on_time.t_target=33", "on_time.delta=3", "simulation.M=1000000",
         "simulation.mode=optimal", "simulation.replications=1"],
}


def _writer(buf):
    return csv.writer(buf, lineterminator="\n")


# --- analytic ----------------------------------------------------------------

def run_analytic(cfg: ExperimentConfig) -> str:
    ana = cfg.analytic
    buf = io.StringIO()
    buf.write(f"# {ANALYTIC_SCHEMA}\n")
    w = _writer(buf)
    if ana.quantity == "per_packet":
        w.writerow(["p", "t_target", "delta", "m", "prob"])
    elif ana.quantity == "repeat_ccdf":
        w.writerow(["p", "t_target", "delta", "n_r", "j", "ccdf"])
    else:
        w.writerow(["p", "t_target", "delta", "M", "kappa", "rate"])
    for point in cfg.points():
        p, spec = point.p, point.spec()
        head = [repr(p), spec.t_target, spec.delta]
        if ana.quantity == "per_packet":
            for m in range(1, ana.m_max + 1):
                w.writerow(head + [m, repr(prob_mth_on_time(p, spec, m))])
        elif ana.quantity == "repeat_ccdf":
            n_r = point.analytic.n_r
            for j in range(ana.j_min, ana.j_max + 1):
                w.writerow(head + [n_r, j, repr(repeat_ccdf(p, spec, n_r, j))])
        else:
            M = point.simulation.M
            kappa = expected_on_time_count(p, spec, M)
            w.writerow(head + [M, repr(kappa), repr(kappa / M)])
    return buf.getvalue()


# --- solve -------------------------------------------------------------------

class _Cache:
    """Models and solutions shared across sweep points with equal parameters."""

    def __init__(self):
        self._models, self._solutions, self._scheduled = {}, {}, {}

    @staticmethod
    def _key(cfg):
        s = cfg.spec()
        return (cfg.p, s.t_target, s.delta, cfg.model)

    def model(self, cfg):
        key = self._key(cfg)
        if key not in self._models:
            log.info("building model p=%s T=%s delta=%s", *key[:3])
            self._models[key] = build_model(cfg.p, cfg.spec(), cfg.state_spaces(),
                                            cfg.action_space(), boundary=cfg.model.boundary)
        return self._models[key]

    def solution(self, cfg):
        key = (self._key(cfg), cfg.solver)
        if key not in self._solutions:
            log.info("value iteration p=%s T=%s delta=%s", *key[0][:3])
            self._solutions[key] = value_iteration(self.model(cfg), cfg.solver_config())
        return self._solutions[key]

    def scheduled(self, cfg, M):
        # One horizon run at the largest M serves every smaller M.
        key = self._key(cfg)
        have = self._scheduled.get(key)
        if have is None or len(have.trajectory) < M:
            log.info("finite-horizon recursion M=%d", M)
            have = expected_reward_scheduled(self.model(cfg), M, keep_actions=False)
            self._scheduled[key] = have
        return have.rate(M)


def run_solve(cfg: ExperimentConfig, cache=None, dump_model=None):
    if cfg.sweep.variable is not None:
        raise ConfigurationError("sweep.variable: solve takes a single configuration")
    cache = cache or _Cache()
    model = cache.model(cfg)
    result = cache.solution(cfg)
    if dump_model:
        dump_model_csv(model, dump_model)
    spec = cfg.spec()
    diagnostics = {
        "schema": SOLVE_SCHEMA,
        "p": cfg.p,
        "t_target": spec.t_target,
        "delta": spec.delta,
        "n_states": model.n_states,
        "n_actions": model.n_actions,
        "discount": cfg.solver.discount,
        "epsilon": cfg.solver.epsilon,
        "iterations": result.iterations,
        "final_delta_v": result.residual,
        "gain_estimate": result.gain_estimate(spec.t_target),
        "on_time_rate_estimate": 1.0 - result.gain_estimate(spec.t_target),
        "max_pruned_mass": model.max_pruned_mass,
    }
    return result.policy.to_csv(), diagnostics


# --- simulate ----------------------------------------------------------------

def _load_policy(path, cfg):
    try:
        policy = Policy.from_csv(path, cfg.action_space().actions)
    except ValueError as exc:
        raise PolicyMismatchError(str(exc)) from None
    if policy.states != cfg.state_spaces():
        raise PolicyMismatchError(
            f"{path}: policy covers [{policy.states.iota_min}, {policy.states.iota_max}] but "
            f"model.iota_min/iota_max is [{cfg.model.iota_min}, {cfg.model.iota_max}]"
        )
    return policy


def simulate_point(point: ExperimentConfig, mode, cache, policy=None):
    sim = point.simulation
    spec = point.spec()
    if mode == "optimal" and policy is None:
        policy = cache.solution(point).policy
    sim_cfg = SimConfig(point.p, spec, M=sim.M, policy=policy if mode == "optimal" else None,
                        master_seed=sim.seed, replications=sim.replications)
    result = replicate(sim_cfg)
    theory = None
    if sim.theory:
        if mode == "random":
            theory = expected_reward_random(cache.model(point), sim.M) / sim.M
        else:
            theory = cache.scheduled(point, sim.M)
    return result, theory


def run_simulate(cfg: ExperimentConfig, cache=None, details=None):
    """Sweep CSV text plus a ``{filename: text}`` map of per-point details."""
    cache = cache or _Cache()
    modes = ["random", "optimal"] if cfg.simulation.mode == "both" else [cfg.simulation.mode]
    policy = None
    if cfg.simulation.policy is not None and "optimal" in modes:
        policy = _load_policy(cfg.simulation.policy, cfg)
    buf = io.StringIO()
    buf.write(f"# {SWEEP_SCHEMA}\n")
    w = _writer(buf)
    w.writerow(["p", "t_target", "delta", "M", "mode", "replications", "seed", "mean_rate",
                "stderr", "drop_fraction", "delay_fraction", "repeat_fraction", "theory_rate"])
    extra = {}
    for k, point in enumerate(cfg.points()):
        spec, sim = point.spec(), point.simulation
        for mode in modes:
            result, theory = simulate_point(point, mode, cache, policy)
            frac = result.action_fractions()
            w.writerow([repr(point.p), spec.t_target, spec.delta, sim.M, mode, sim.replications,
                        sim.seed, repr(result.mean_rate), repr(result.stderr),
                        repr(frac["drop"]), repr(frac["delay"]), repr(frac["repeat"]),
                        "" if theory is None else repr(theory)])
            if details is not None:
                stem = f"point{k:02d}_{mode}"
                extra[stem + ".csv"] = result.to_csv()
                extra[stem + ".json"] = result.to_json()
    return buf.getvalue(), extra


def run_usage(cfg: ExperimentConfig, cache=None) -> str:
    if cfg.sweep.variable is not None:
        raise ConfigurationError("sweep.variable: the usage table takes a single configuration")
    cache = cache or _Cache()
    policy = None
    if cfg.simulation.policy is not None:
        policy = _load_policy(cfg.simulation.policy, cfg)
    result, _ = simulate_point(replace(cfg, simulation=replace(cfg.simulation, theory=False)),
                               "optimal", cache, policy)
    return result.usage_csv()


# --- argument handling -------------------------------------------------------

def _add_common(sub):
    sub.add_argument("--config", "-c", help="YAML experiment config (defaults if omitted)")
    sub.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                     help="override one config field; repeatable")
    sub.add_argument("--seed", type=int, help="override simulation.seed")
    sub.add_argument("--replications", "-r", type=int, help="override simulation.replications")
    sub.add_argument("--output", "-o", help="output path; '-' or omitted writes to stdout")


def build_parser():
    parser = argparse.ArgumentParser(prog="ontime", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("analytic", help="closed-form probabilities over the sweep grid")
    _add_common(sub)

    sub = subs.add_parser("solve", help="value iteration; writes the policy CSV")
    _add_common(sub)
    sub.add_argument("--diagnostics", help="write solver diagnostics JSON here as well")
    sub.add_argument("--dump-model", help="write the transition debug CSV here")

    sub = subs.add_parser("simulate", help="Monte Carlo over the sweep grid")
    _add_common(sub)
    sub.add_argument("--policy", help="policy CSV to execute instead of solving")
    sub.add_argument("--details", help="directory for per-point replication CSV/JSON files")

    sub = subs.add_parser("reproduce", help="run the bundled recipe for one figure")
    _add_common(sub)
    sub.add_argument("--figure", type=int, required=True, choices=sorted(FIGURES))
    sub.add_argument("--details", help="directory for per-point replication CSV/JSON files")
    return parser


def _load_config(args, extra_overrides=()):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = list(extra_overrides) + list(args.set)
    if args.seed is not None:
        overrides.append(f"simulation.seed={args.seed}")
    if args.replications is not None:
        overrides.append(f"simulation.replications={args.replications}")
    if getattr(args, "policy", None):
        overrides.append(f"simulation.policy={json.dumps(args.policy)}")
    return cfg.with_overrides(overrides) if overrides else cfg


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _dispatch(args):
    figure = getattr(args, "figure", None)
    cfg = _load_config(args, FIGURES[figure] if figure else ())
    output = args.output if args.output is not None else cfg.output
    details = getattr(args, "details", None)
    files = {}
    if args.command == "analytic" or figure in (3, 4):
        text = run_analytic(cfg)
    elif args.command == "solve":
        text, diagnostics = run_solve(cfg, dump_model=args.dump_model)
        diag_text = json.dumps(diagnostics, indent=2, sort_keys=True) + "\n"
        if args.diagnostics:
            files[args.diagnostics] = diag_text
        if output not in (None, "-"):
            sys.stdout.write(diag_text)
    elif figure == 11:
        text = run_usage(cfg)
    else:
        text, extra = run_simulate(cfg, details=details)
        if details is not None:
            os.makedirs(details, exist_ok=True)
            files.update({os.path.join(details, k): v for k, v in extra.items()})
    for path, body in files.items():
        _write(path, body)
    _write(output, text)


def _categorise(exc):
    if isinstance(exc, PolicyMismatchError):
        return "policy"
    if isinstance(exc, ConfigurationError):
        return "config"
    if isinstance(exc, DomainError):
        return "domain"
    if isinstance(exc, ConvergenceError):
        return "convergence"
    if isinstance(exc, OSError):
        return "io"
    return "internal"


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - every failure gets a category
        category = _categorise(exc)
        if category == "internal":
            log.exception("unexpected failure")
        code = EXIT_CODES[category]
        payload = {"category": category, "message": str(exc), "exit_code": code}
        if isinstance(exc, ConvergenceError):
            payload["residual"] = exc.residual
            payload["iterations"] = exc.iterations
        sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
