"""State-pair conditioned access policies and mean-field channel quantities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LoadInfeasible
from .source import SourceParams, stationary

# relative slack when comparing a load against its bound
_LOAD_SLACK = 1e-12


@dataclass(frozen=True)
class AccessPolicy:
    """Transmit probabilities indexed by (previous state, current state)."""

    l00: float
    l01: float
    l10: float
    l11: float

    def __post_init__(self) -> None:
        for name, value in zip(("l00", "l01", "l10", "l11"), self.as_tuple()):
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")

    @classmethod
    def from_vector(cls, v) -> AccessPolicy:
        v = [float(x) for x in v]
        if len(v) != 4:
            raise ValueError(f"an access policy has 4 components, got {len(v)}")
        return cls(*v)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.l00, self.l01, self.l10, self.l11)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    def as_matrix(self) -> np.ndarray:
        """2x2 view, entry [prev, cur]."""
        return self.as_array().reshape(2, 2)

    def mirrored(self) -> AccessPolicy:
        """Policy with the roles of states 0 and 1 exchanged."""
        return AccessPolicy(self.l11, self.l10, self.l01, self.l00)

    def is_zero(self) -> bool:
        return not any(self.as_tuple())


@dataclass(frozen=True)
class NetworkConfig:
    m: int
    source: SourceParams
    policy: AccessPolicy

    def __post_init__(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")


def access_weights(source: SourceParams) -> np.ndarray:
    """Stationary probabilities of the (prev, cur) pairs 00, 01, 10, 11.

    The mean access probability is the dot product of these with the policy
    vector, so it is affine in each policy component.
    """
    law = stationary(source)
    a, b = source.alpha, source.beta
    return np.array([law.pi0 * (1 - a), law.pi0 * a, law.pi1 * b, law.pi1 * (1 - b)])


def mean_access_probability(source: SourceParams, policy: AccessPolicy) -> float:
    lbar = float(access_weights(source) @ policy.as_array())
    return min(max(lbar, 0.0), 1.0)


def success_probability(config: NetworkConfig) -> float:
    """Probability that a packet of the reference node is not collided,
    treating the other m-1 nodes as independent Bernoulli(lbar) transmitters."""
    if config.m == 1:
        return 1.0
    lbar = mean_access_probability(config.source, config.policy)
    return (1.0 - lbar) ** (config.m - 1)


def channel_load(config: NetworkConfig) -> float:
    return config.m * mean_access_probability(config.source, config.policy)


def strategy_random(m: int) -> AccessPolicy:
    if m < 1:
        raise ValueError("m must be >= 1")
    p = 1.0 / m
    return AccessPolicy(p, p, p, p)


def strategy_reactive() -> AccessPolicy:
    return AccessPolicy(0.0, 1.0, 1.0, 0.0)


def strategy_load_one(source: SourceParams, m: int) -> AccessPolicy:
    """Reactive policy topped up with a persistence probability so that the
    channel load is one packet per slot."""
    base = source.change_rate
    if m * base > 1.0 + _LOAD_SLACK:
        raise LoadInfeasible(f"reactive load m*(pi0*alpha+pi1*beta) = {m * base:.6g} already exceeds 1")
    c = (1.0 / m - base) / (1.0 - base)
    c = min(max(c, 0.0), 1.0)
    return AccessPolicy(c, 1.0, 1.0, c)


STRATEGIES = ("random", "reactive", "load-one", "balanced")


def named_policy(name: str, source: SourceParams, m: int) -> AccessPolicy:
    """Closed-form strategies by name; ``balanced`` lives in :mod:`optimize`."""
    if name == "random":
        return strategy_random(m)
    if name == "reactive":
        return strategy_reactive()
    if name == "load-one":
        return strategy_load_one(source, m)
    raise ValueError(f"unknown closed-form strategy {name!r}")
