"""Fading channel: per-slot decode probability and transmission-time sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import DomainError, check_positive, check_probability


@dataclass(frozen=True)
class ExponentialGain:
    """Power gain of a Rayleigh fading channel, ``f(x) = rate * exp(-rate * x)``."""

    rate: float = 2.0

    def __post_init__(self):
        check_positive(self.rate, "gain rate")

    def sf(self, x):
        """Tail probability ``Pr{gain > x}``."""
        if x <= 0:
            return 1.0
        return math.exp(-self.rate * x)

    def pdf(self, x):
        return self.rate * math.exp(-self.rate * x) if x >= 0 else 0.0


@dataclass(frozen=True)
class ChannelParams:
    """Physical-layer parameters of the point-to-point link.

    ``path_loss_exponent`` is the propagation exponent of the distance term;
    it is unrelated to the MDP discount factor.
    """

    transmit_power: float = 1.0
    distance: float = 100.0
    path_loss_exponent: float = 2.0
    noise_power: float = 1e-4
    snr_threshold: float = 0.8047
    gain: ExponentialGain = field(default_factory=ExponentialGain)

    def __post_init__(self):
        check_positive(self.transmit_power, "transmit_power")
        check_positive(self.distance, "distance")
        check_positive(self.noise_power, "noise_power")
        check_positive(self.path_loss_exponent, "path_loss_exponent")
        if self.path_loss_exponent < 1:
            raise DomainError(
                f"path_loss_exponent must be >= 1, got {self.path_loss_exponent}"
            )
        if not (self.snr_threshold >= 0 and math.isfinite(self.snr_threshold)):
            raise DomainError(f"snr_threshold must be >= 0, got {self.snr_threshold}")

    @property
    def gain_threshold(self):
        """Smallest channel gain that lifts the SNR above the decode threshold."""
        return (
            self.snr_threshold
            * self.distance**self.path_loss_exponent
            * self.noise_power
            / self.transmit_power
        )


def success_probability(params: ChannelParams) -> float:
    """Probability that a single slot decodes, ``Pr{SNR > V_T}``."""
    p = params.gain.sf(params.gain_threshold)
    if p <= 0.0:
        raise DomainError("threshold too large: decode probability underflows to zero")
    return p


def make_rng(seed, index=None):
    """Return a PCG64 generator for ``seed`` or for replication ``index`` of it.

    Replication streams are derived with ``SeedSequence(seed, spawn_key=(index,))``
    so stream ``k`` depends only on the master seed and ``k``.
    """
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise DomainError(f"seed must be a 64-bit unsigned integer, got {seed}")
    spawn_key = () if index is None else (int(index),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=spawn_key)))


def geometric_from_uniform(u, p):
    """Inverse-CDF transform of uniforms ``u`` in (0, 1] to geometric slots >= 1."""
    u = np.asarray(u, dtype=float)
    if p == 1.0:
        return np.ones(u.shape, dtype=np.int64)
    s = np.ceil(np.log(u) / math.log1p(-p))
    # u == 1 maps to 0; it has probability 2**-53 and belongs to the first slot.
    return np.maximum(s, 1).astype(np.int64)


def sample_transmission_time(p, rng, size=None):
    """Draw the number of slots needed to decode a packet.

    One uniform is consumed per sample, so a stream of scalar draws and one
    vectorised draw of the same length give identical values.
    """
    p = check_probability(p, allow_zero=True)
    if p == 0.0:
        raise DomainError("p = 0: the transmission never terminates")
    u = 1.0 - rng.random(size)
    s = geometric_from_uniform(u, p)
    return int(s) if size is None else s


class GeometricStream:
    """Buffered scalar geometric draws for per-packet simulation loops."""

    def __init__(self, p, rng, block=8192):
        self.p = check_probability(p)
        self.rng = rng
        self.block = block
        self._buf = np.empty(0, dtype=np.int64)
        self._pos = 0

    def __call__(self):
        if self._pos >= len(self._buf):
            self._buf = geometric_from_uniform(1.0 - self.rng.random(self.block), self.p).tolist()
            self._pos = 0
        s = self._buf[self._pos]
        self._pos += 1
        return s
