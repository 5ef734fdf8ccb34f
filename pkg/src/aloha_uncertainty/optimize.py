"""Search for access policies minimising the average conditional entropy.

Two phases: an exhaustive grid over [0, 1]^4 (or over the 3-D slice of a
fixed channel load), then bounded Nelder-Mead from the best few grid
points.  Both are deterministic, so a problem always yields the same result.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.optimize import minimize

from .analysis import DEFAULT_TOLERANCE, joint_law
from .errors import AlohaUncertaintyError, LoadInfeasible, NoFeasiblePolicy
from .parallel import pmap
from .policy import (
    AccessPolicy,
    NetworkConfig,
    access_weights,
    channel_load,
    mean_access_probability,
    named_policy,
    success_probability,
)
from .source import SourceParams, params_from_budget

# objectives closer than this are ties, broken by the smaller policy vector
TIE_TOLERANCE = 1e-12
_FEAS_SLACK = 1e-12


@dataclass(frozen=True)
class OptimizationProblem:
    m: int
    source: SourceParams
    target_load: float | None = None
    grid_resolution: int = 11
    refine_budget: int = 500
    seed: int = 0
    starts: int = 3
    search_tolerance: float = 1e-9
    workers: int | None = 1

    def __post_init__(self) -> None:
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be >= 2")
        if self.refine_budget < 0:
            raise ValueError("refine_budget must be >= 0")
        if self.m < 1:
            raise ValueError("m must be >= 1")


@dataclass
class OptimizationResult:
    policy: AccessPolicy
    objective: float
    evaluations: int
    trace: list[tuple[AccessPolicy, float]] = field(default_factory=list)
    error_bound: float = 0.0


def _objective(vec, m: int, source: SourceParams, tolerance: float) -> float:
    try:
        cfg = NetworkConfig(m, source, AccessPolicy.from_vector(np.clip(vec, 0.0, 1.0)))
        # close the tail at the limit law straight away: the search only needs ordering
        return joint_law(cfg, tolerance, closure_horizon=0).entropy
    except AlohaUncertaintyError:
        return math.inf


class _Tracker:
    """Counts evaluations and records strict improvements of the best value."""

    def __init__(self) -> None:
        self.evaluations = 0
        self.best = (math.inf, None)
        self.trace: list[tuple[AccessPolicy, float]] = []

    def offer(self, vec, value: float) -> None:
        self.evaluations += 1
        vec = tuple(float(v) for v in vec)
        best_value, best_vec = self.best
        if value < best_value - TIE_TOLERANCE or (
            abs(value - best_value) <= TIE_TOLERANCE and best_vec is not None and vec < best_vec
        ):
            if value < best_value:
                self.trace.append((AccessPolicy.from_vector(vec), value))
            self.best = (min(value, best_value), vec)


class _Space:
    """Maps search coordinates to full policy vectors.

    Unconstrained: the identity on [0, 1]^4.  With a load target, one
    coordinate (the one with the largest stationary weight) is solved from
    m * lbar = target and the others are free.
    """

    def __init__(self, problem: OptimizationProblem) -> None:
        self.m = problem.m
        self.target = problem.target_load
        self.w = access_weights(problem.source)
        if self.target is None:
            self.free = [0, 1, 2, 3]
            self.solved = None
        else:
            if not (0.0 <= self.target <= problem.m):
                raise LoadInfeasible(f"target load {self.target} outside [0, m={problem.m}]")
            self.solved = int(np.argmax(self.w))
            self.free = [i for i in range(4) if i != self.solved]

    @property
    def dim(self) -> int:
        return len(self.free)

    def to_policy(self, z) -> np.ndarray | None:
        vec = np.zeros(4)
        vec[self.free] = z
        if self.solved is not None:
            rest = self.target / self.m - self.w[self.free] @ vec[self.free]
            v = rest / self.w[self.solved]
            if not (-_FEAS_SLACK <= v <= 1 + _FEAS_SLACK):
                return None
            vec[self.solved] = min(max(v, 0.0), 1.0)
        return vec


def _evaluate(space: _Space, problem: OptimizationProblem, z) -> tuple[tuple, float]:
    vec = space.to_policy(np.clip(np.asarray(z, dtype=float), 0.0, 1.0))
    if vec is None or not vec.any():
        return None, math.inf
    return tuple(vec), _objective(vec, problem.m, problem.source, problem.search_tolerance)


def optimize(problem: OptimizationProblem) -> OptimizationResult:
    """Grid search followed by Nelder-Mead refinement; see module docstring."""
    space = _Space(problem)
    axis = np.linspace(0.0, 1.0, problem.grid_resolution)
    grid = list(itertools.product(axis, repeat=space.dim))
    tracker = _Tracker()
    results = pmap(partial(_evaluate, space, problem), grid, problem.workers, chunksize=256)
    scored = []
    for vec, value in results:
        if vec is None:
            continue
        tracker.offer(vec, value)
        if math.isfinite(value):
            scored.append((value, vec))
    if not scored:
        raise NoFeasiblePolicy("every candidate policy is degenerate or infeasible")
    scored.sort()
    # distinct start points in (objective, vector) order
    starts = []
    for value, vec in scored:
        z = tuple(vec[i] for i in space.free)
        if z not in starts:
            starts.append(z)
        if len(starts) == problem.starts:
            break
    budget = problem.refine_budget // max(len(starts), 1)
    step = 1.0 / (problem.grid_resolution - 1) / 2
    if budget > 0:
        for z0 in starts:
            _refine(space, problem, np.array(z0), step, budget, tracker)
    _, best_vec = tracker.best
    policy = AccessPolicy.from_vector(best_vec)
    final = joint_law(NetworkConfig(problem.m, problem.source, policy), DEFAULT_TOLERANCE)
    return OptimizationResult(policy, final.entropy, tracker.evaluations, tracker.trace, final.error_bound)


def _refine(space, problem, z0, step, budget, tracker) -> None:
    simplex = [z0]
    for i in range(space.dim):
        z = z0.copy()
        z[i] = z[i] + step if z[i] + step <= 1.0 else z[i] - step
        simplex.append(z)

    def f(z):
        vec, value = _evaluate(space, problem, z)
        if vec is not None:
            tracker.offer(vec, value)
        return value if math.isfinite(value) else 1e6

    minimize(
        f,
        z0,
        method="Nelder-Mead",
        bounds=[(0.0, 1.0)] * space.dim,
        options={"initial_simplex": np.array(simplex), "maxfev": budget, "xatol": 1e-6, "fatol": 1e-12},
    )


def optimize_constrained(problem: OptimizationProblem) -> OptimizationResult:
    if problem.target_load is None:
        raise ValueError("optimize_constrained needs a target_load")
    return optimize(problem)


# ---------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = (
    "strategy",
    "H",
    "H_error_bound",
    "lbar",
    "p_s",
    "load",
    "l00",
    "l01",
    "l10",
    "l11",
    "error",
)


def evaluate_strategy(source: SourceParams, m: int, strategy: str, problem_kwargs: dict | None = None) -> dict:
    """One sweep row; errors are recorded in the row instead of raised."""
    row = {"strategy": strategy}
    try:
        if strategy == "balanced":
            kwargs = dict(problem_kwargs or {})
            kwargs.setdefault("workers", 1)
            result = optimize(OptimizationProblem(m, source, **kwargs))
            policy, H, bound = result.policy, result.objective, result.error_bound
        else:
            policy = named_policy(strategy, source, m)
            law = joint_law(NetworkConfig(m, source, policy))
            H, bound = law.entropy, law.error_bound
        cfg = NetworkConfig(m, source, policy)
        row.update(
            H=H,
            H_error_bound=bound,
            lbar=mean_access_probability(source, policy),
            p_s=success_probability(cfg),
            load=channel_load(cfg),
        )
        row.update(zip(("l00", "l01", "l10", "l11"), policy.as_tuple()))
        row["error"] = ""
    except AlohaUncertaintyError as exc:
        row.update({k: math.nan for k in SWEEP_COLUMNS if k not in ("strategy", "error")})
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _node_cell(args):
    source, m, strategy, kwargs = args
    return {"m": m, "alpha": source.alpha, "beta": source.beta, **evaluate_strategy(source, m, strategy, kwargs)}


def sweep_nodes(
    source: SourceParams, m_values, strategies, problem_kwargs: dict | None = None, workers: int | None = None
) -> list[dict]:
    """Rows ordered by (m, strategy) as given."""
    cells = [(source, int(m), s, problem_kwargs) for m in m_values for s in strategies]
    return pmap(_node_cell, cells, workers)


def _eta_cell(args):
    m, budget, eta, strategy, kwargs = args
    try:
        source = params_from_budget(eta, m, budget)
    except AlohaUncertaintyError as exc:
        row = {k: math.nan for k in SWEEP_COLUMNS}
        row.update(strategy=strategy, error=f"{type(exc).__name__}: {exc}")
        return {"eta": eta, "m": m, "alpha": math.nan, "beta": math.nan, **row}
    return {"eta": eta, "m": m, "alpha": source.alpha, "beta": source.beta, **evaluate_strategy(source, m, strategy, kwargs)}


def sweep_asymmetry(
    m: int, budget: float, eta_values, strategies, problem_kwargs: dict | None = None, workers: int | None = None
) -> list[dict]:
    cells = [(int(m), float(budget), float(eta), s, problem_kwargs) for eta in eta_values for s in strategies]
    return pmap(_eta_cell, cells, workers)
