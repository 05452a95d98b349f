"""Slot-level Monte Carlo of packet sequences over the fading channel."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_int, check_probability
from .analytics import OnTimeSpec
from .channel import GeometricStream, make_rng, sample_transmission_time
from .solver import Policy

HIST_CLIP = 50
SIM_SCHEMA = "ontime-simulation v1"
USAGE_SCHEMA = "ontime-usage v1"


@dataclass(frozen=True)
class SimConfig:
    """One experiment: ``policy=None`` means uncontrolled (random) transmission."""

    p: float
    spec: OnTimeSpec
    M: int = 10_000
    policy: Policy | None = None
    master_seed: int = 0
    replications: int = 1
    record_packets: bool = False

    def __post_init__(self):
        check_probability(self.p)
        check_int(self.M, "M", 1)
        check_int(self.replications, "replications", 1)


@dataclass(eq=False)
class SimResult:
    """Outcome of one simulated sequence of ``M`` packets.

    ``deviation_histogram`` has ``2 * HIST_CLIP + 3`` bins: an underflow bin,
    one bin per deviation in ``[-HIST_CLIP, HIST_CLIP]``, and an overflow bin.
    """

    M: int
    kappa: int
    deviation_histogram: np.ndarray
    drops: int = 0
    delays: Counter = field(default_factory=Counter)
    repeats: Counter = field(default_factory=Counter)
    repeat_budgets: Counter = field(default_factory=Counter)
    elapsed_slots: int = 0
    delay_slots: int = 0
    transmission_slots: int = 0
    max_state: int = 0
    min_state: int = 0
    on_time: np.ndarray | None = None

    @property
    def rate(self):
        return self.kappa / self.M

    @property
    def action_usage(self):
        """Counts per executed action: drop, delay by ``n_d``, ``k`` retransmissions."""
        return {"drop": self.drops, "delay": dict(self.delays), "repeat": dict(self.repeats)}

    def action_fractions(self):
        total = self.M
        return {
            "drop": self.drops / total,
            "delay": sum(self.delays.values()) / total,
            "repeat": sum(self.repeats.values()) / total,
        }


def _emit(text, path):
    if path is None:
        return text
    with open(path, "w", newline="") as fh:
        fh.write(text)
    return None


def _histogram(deviations):
    clipped = np.clip(np.asarray(deviations), -HIST_CLIP - 1, HIST_CLIP + 1) + HIST_CLIP + 1
    return np.bincount(clipped, minlength=2 * HIST_CLIP + 3)


def _simulate_random(p, spec: OnTimeSpec, M, rng, record_packets):
    s = sample_transmission_time(p, rng, size=M)
    completion = np.cumsum(s)
    deviation = completion - spec.t_target * np.arange(1, M + 1)
    hit = np.abs(deviation) <= spec.delta
    starts = np.concatenate(([0], completion[:-1]))
    states = spec.t_target * np.arange(1, M + 1) - starts
    # Uncontrolled transmission is Delay(0) in the fixed action order.
    return SimResult(
        M=M, kappa=int(hit.sum()), deviation_histogram=_histogram(deviation),
        delays=Counter({0: M}), elapsed_slots=int(completion[-1]),
        transmission_slots=int(completion[-1]),
        max_state=int(states.max()), min_state=int(states.min()),
        on_time=hit if record_packets else None,
    )


def simulate_sequence(cfg: SimConfig, rng=None) -> SimResult:
    """Run one sequence of ``cfg.M`` packets.

    Packet ``m`` starting after ``t`` elapsed slots is in state ``m*T - t``;
    states outside the policy's range use the nearest boundary action. Drop
    spends no slots; Delay(n) idles ``n`` slots before one transmission;
    Repeat(n) retransmits while the packet completes before its target range
    and fewer than ``n`` retransmissions have been used.
    """
    rng = make_rng(cfg.master_seed) if rng is None else rng
    p, spec, M = cfg.p, cfg.spec, cfg.M
    if cfg.policy is None:
        return _simulate_random(p, spec, M, rng, cfg.record_packets)

    draw = GeometricStream(p, rng)
    T, d = spec.t_target, spec.delta
    policy = cfg.policy
    lo, hi = policy.states.iota_min, policy.states.iota_max
    table = [tuple(policy.actions[a]) for a in policy.indices]
    hist = np.zeros(2 * HIST_CLIP + 3, dtype=np.int64)
    delays, repeats, budgets = Counter(), Counter(), Counter()
    on_time = np.zeros(M, dtype=bool) if cfg.record_packets else None
    t = kappa = drops = delay_slots = 0
    max_state, min_state = -math.inf, math.inf
    for m in range(1, M + 1):
        target = m * T
        state = target - t
        max_state = max(max_state, state)
        min_state = min(min_state, state)
        kind, param = table[min(max(state, lo), hi) - lo]
        if kind == "drop":
            drops += 1
            continue
        if kind == "delay":
            t += param
            delay_slots += param
            t += draw()
            delays[param] += 1
        else:
            t += draw()
            used = 0
            while t < target - d and used < param:
                t += draw()
                used += 1
            repeats[used] += 1
            budgets[param] += 1
        dev = t - target
        hist[min(max(dev, -HIST_CLIP - 1), HIST_CLIP + 1) + HIST_CLIP + 1] += 1
        if -d <= dev <= d:
            kappa += 1
            if on_time is not None:
                on_time[m - 1] = True
    return SimResult(
        M=M, kappa=kappa, deviation_histogram=hist, drops=drops, delays=delays,
        repeats=repeats, repeat_budgets=budgets, elapsed_slots=t,
        delay_slots=delay_slots, transmission_slots=t - delay_slots,
        max_state=int(max_state), min_state=int(min_state), on_time=on_time,
    )


@dataclass(eq=False)
class ReplicatedResult:
    replications: list
    master_seed: int

    @property
    def rates(self):
        return np.array([r.rate for r in self.replications])

    @property
    def mean_rate(self):
        return float(self.rates.mean())

    @property
    def stderr(self):
        n = len(self.replications)
        if n < 2:
            return float("nan")
        return float(self.rates.std(ddof=1) / math.sqrt(n))

    @property
    def deviation_histogram(self):
        return sum(r.deviation_histogram for r in self.replications)

    @property
    def M(self):
        return self.replications[0].M

    def pooled_usage(self):
        drops = sum(r.drops for r in self.replications)
        delays, repeats, budgets = Counter(), Counter(), Counter()
        for r in self.replications:
            delays.update(r.delays)
            repeats.update(r.repeats)
            budgets.update(r.repeat_budgets)
        return drops, delays, repeats, budgets

    def action_fractions(self):
        drops, delays, repeats, _ = self.pooled_usage()
        total = self.M * len(self.replications)
        return {
            "drop": drops / total,
            "delay": sum(delays.values()) / total,
            "repeat": sum(repeats.values()) / total,
        }

    def to_csv(self, path=None):
        """One row per replication followed by an ``aggregate`` row."""
        buf = io.StringIO()
        buf.write(f"# {SIM_SCHEMA}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["replication", "M", "kappa", "rate", "drops", "delays", "repeats"])
        for k, r in enumerate(self.replications):
            writer.writerow([k, r.M, r.kappa, repr(r.rate), r.drops,
                             sum(r.delays.values()), sum(r.repeats.values())])
        drops, delays, repeats, _ = self.pooled_usage()
        writer.writerow(["aggregate", self.M * len(self.replications),
                         sum(r.kappa for r in self.replications), repr(self.mean_rate),
                         drops, sum(delays.values()), sum(repeats.values())])
        return _emit(buf.getvalue(), path)

    def usage_csv(self, path=None):
        """Executed-action counts: strategy shares, delay lengths, retransmissions, budgets."""
        drops, delays, repeats, budgets = self.pooled_usage()
        total = self.M * len(self.replications)
        rows = [("strategy", "drop", "", drops),
                ("strategy", "delay", "", sum(delays.values())),
                ("strategy", "repeat", "", sum(repeats.values()))]
        rows += [("delay", "delay", k, v) for k, v in sorted(delays.items())]
        rows += [("retransmissions", "repeat", k, v) for k, v in sorted(repeats.items())]
        rows += [("budget", "repeat", k, v) for k, v in sorted(budgets.items())]
        buf = io.StringIO()
        buf.write(f"# {USAGE_SCHEMA}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category", "kind", "param", "count", "fraction"])
        for category, kind, param, count in rows:
            writer.writerow([category, kind, param, count, repr(count / total)])
        return _emit(buf.getvalue(), path)

    def summary(self):
        drops, delays, repeats, budgets = self.pooled_usage()
        return {
            "schema": SIM_SCHEMA,
            "master_seed": self.master_seed,
            "replications": len(self.replications),
            "M": self.M,
            "mean_rate": self.mean_rate,
            "stderr": self.stderr,
            "action_fractions": self.action_fractions(),
            "delay_counts": {str(k): v for k, v in sorted(delays.items())},
            "retransmission_counts": {str(k): v for k, v in sorted(repeats.items())},
            "repeat_budget_counts": {str(k): v for k, v in sorted(budgets.items())},
            "drops": drops,
            "deviation_histogram": self.deviation_histogram.tolist(),
        }

    def to_json(self, path=None):
        return _emit(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", path)


def replicate(cfg: SimConfig) -> ReplicatedResult:
    """Run ``cfg.replications`` sequences; stream ``k`` is ``make_rng(seed, k)``."""
    reps = [simulate_sequence(cfg, make_rng(cfg.master_seed, k)) for k in range(cfg.replications)]
    return ReplicatedResult(replications=reps, master_seed=cfg.master_seed)


def single_packet_repeat_trial(p, spec: OnTimeSpec, n_r, rng, state=None):
    """Total slots spent on one packet under the repeat protocol.

    ``state`` is the number of slots until the target (``t_target`` for an
    isolated packet).
    """
    state = spec.t_target if state is None else state
    early_limit = state - spec.delta
    total = sample_transmission_time(p, rng)
    used = 0
    while total < early_limit and used < n_r:
        total += sample_transmission_time(p, rng)
        used += 1
    return total


def repeat_trials(p, spec: OnTimeSpec, n_r, size, rng, state=None):
    """Vectorised ``single_packet_repeat_trial`` over ``size`` independent packets."""
    state = spec.t_target if state is None else state
    early_limit = state - spec.delta
    total = sample_transmission_time(p, rng, size=size)
    for _ in range(n_r):
        retry = total < early_limit
        if not retry.any():
            break
        total[retry] += sample_transmission_time(p, rng, size=int(retry.sum()))
    return total
