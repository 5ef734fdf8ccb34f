"""Two-state discrete-time Markov source."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetInfeasible


@dataclass(frozen=True)
class SourceParams:
    """Per-slot transition probabilities of a two-state source.

    ``alpha`` is the probability of moving 0 -> 1, ``beta`` of moving 1 -> 0.
    Both must lie in the open interval (0, 1).
    """

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not (0.0 < value < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")

    @property
    def transition_matrix(self) -> np.ndarray:
        a, b = self.alpha, self.beta
        return np.array([[1.0 - a, a], [b, 1.0 - b]])

    @property
    def change_rate(self) -> float:
        """Stationary probability that the source changes state in a slot."""
        # pi0*alpha + pi1*beta, written to avoid cancellation
        return 2.0 * self.alpha * self.beta / (self.alpha + self.beta)


@dataclass(frozen=True)
class StationaryLaw:
    pi0: float
    pi1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pi0, self.pi1])


def stationary(params: SourceParams) -> StationaryLaw:
    pi0 = params.beta / (params.alpha + params.beta)
    return StationaryLaw(pi0, 1.0 - pi0)


def asymmetry_factor(params: SourceParams) -> float:
    return params.alpha / params.beta


def binary_entropy(p) -> np.ndarray | float:
    """Entropy in bits of a Bernoulli(p) variable, with 0 log 0 = 0.

    Accepts scalars or arrays.
    """
    p = np.asarray(p, dtype=float)
    q = 1.0 - p
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(q > 0, q * np.log2(q), 0.0))
    h = np.clip(h, 0.0, 1.0)
    return float(h) if h.ndim == 0 else h


def source_entropy(params: SourceParams) -> float:
    """Stationary entropy H(X) of the source, in bits."""
    if params.alpha == params.beta:
        return 1.0
    return binary_entropy(stationary(params).pi0)


def params_from_budget(eta: float, m: int, budget: float) -> SourceParams:
    """Source parameters with asymmetry ``eta`` and ``budget`` network-wide
    state transitions per slot across ``m`` nodes.

    Uses pi0*alpha + pi1*beta = 2*alpha*beta/(alpha+beta), which with
    alpha = eta*beta gives beta = budget*(1+eta)/(2*m*eta).
    """
    if not (eta > 0 and budget > 0 and m >= 1):
        raise BudgetInfeasible(f"need eta > 0, budget > 0, m >= 1 (got {eta}, {budget}, {m})")
    beta = budget * (1.0 + eta) / (2.0 * m * eta)
    alpha = eta * beta
    if not (0.0 < alpha < 1.0 and 0.0 < beta < 1.0) or not math.isfinite(alpha):
        raise BudgetInfeasible(
            f"budget {budget} with eta={eta}, m={m} needs alpha={alpha:.6g}, beta={beta:.6g}"
        )
    return SourceParams(alpha, beta)
