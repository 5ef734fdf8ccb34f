"""Receiver uncertainty under the last-received-value estimator.

Between two deliveries from the reference node, its source evolves on the
transient states {0, 1} of a terminating chain and a successful delivery
absorbs the chain.  Everything here is derived from the 2x2 transient block
``A`` of that chain:

* conditional law of the source given AoI ``delta`` and estimate ``xhat``:
  row ``xhat`` of ``A**delta`` normalised to one;
* inter-refresh time W given ``xhat``: discrete phase-type law with
  ``P(W = w) = e_xhat A**(w-1) a_d`` and mean ``e_xhat (I - A)^-1 1``;
* AoI given ``xhat``: length-biased, ``P(W > delta) / E[W]``;
* estimate law: fraction of time spent in periods opened by each value.

Powers of ``A`` are built by batched doubling and kept as mantissa/exponent
pairs, so very long horizons neither underflow nor need eigendecompositions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import math

import numpy as np

from .errors import DegeneratePolicy, SingularFundamentalMatrix, UnreachableCondition
from .policy import NetworkConfig, access_weights, mean_access_probability, success_probability
from .source import binary_entropy

DEFAULT_TOLERANCE = 1e-12
# longest table (in slots) any truncated law may allocate
MAX_HORIZON = 2**21
# beyond this horizon the tail may be closed with the limit law instead
CLOSURE_HORIZON = 2**17
# two successive conditional laws closer than this are taken as the limit law
_LAW_STEP = 1e-14
_ROW_TOL = 1e-12


@dataclass(frozen=True)
class TerminatingChain:
    """Transient block ``transient`` (A) and absorption vector ``absorb`` (a_d).

    ``gap`` is I - A and ``det`` its determinant.  When the chain is built from
    a network configuration both are filled from cancellation-free closed
    forms; otherwise they are computed from ``transient``.
    """

    transient: np.ndarray
    absorb: np.ndarray
    gap: np.ndarray | None = None
    det: float | None = None

    def __post_init__(self) -> None:
        A = np.asarray(self.transient, dtype=float).reshape(2, 2)
        a = np.asarray(self.absorb, dtype=float).reshape(2)
        if (A < 0).any() or (a < 0).any():
            raise ValueError("transition probabilities must be nonnegative")
        if np.abs(A.sum(axis=1) + a - 1.0).max() > _ROW_TOL:
            raise ValueError("each row of A plus a_d must sum to one")
        gap = np.eye(2) - A if self.gap is None else np.asarray(self.gap, dtype=float)
        det = gap[0, 0] * gap[1, 1] - gap[0, 1] * gap[1, 0] if self.det is None else self.det
        object.__setattr__(self, "transient", A)
        object.__setattr__(self, "absorb", a)
        object.__setattr__(self, "gap", gap)
        object.__setattr__(self, "det", float(det))
        if not a.any():
            raise DegeneratePolicy("absorption vector is zero: no update is ever delivered")
        # rho(A) < 1 iff I - A is a nonsingular M-matrix
        if not (gap[0, 0] > 0 and gap[1, 1] > 0 and self.det > 0):
            raise DegeneratePolicy("some state can never be absorbed (spectral radius of A is 1)")

    @property
    def mean_time(self) -> np.ndarray:
        """E[W | xhat] for xhat = 0, 1, i.e. row sums of (I - A)^-1."""
        g = self.gap
        with np.errstate(over="ignore", divide="ignore"):
            mean = np.array([g[1, 1] - g[0, 1], g[0, 0] - g[1, 0]]) / self.det
        if not np.all(np.isfinite(mean)) or (mean <= 0).any():
            raise SingularFundamentalMatrix(f"I - A is numerically singular (det={self.det:.3g})")
        return mean


def build_chain(config: NetworkConfig) -> TerminatingChain:
    src, lam = config.source, config.policy
    a, b = src.alpha, src.beta
    ps = success_probability(config)
    l00, l01, l10, l11 = lam.as_tuple()
    A = np.array(
        [
            [(1 - a) * (1 - l00 * ps), a * (1 - l01 * ps)],
            [b * (1 - l10 * ps), (1 - b) * (1 - l11 * ps)],
        ]
    )
    absorb = np.array([(a * l01 + (1 - a) * l00) * ps, (b * l10 + (1 - b) * l11) * ps])
    if not absorb.any():
        raise DegeneratePolicy(f"policy {lam.as_tuple()} with p_s={ps:.3g} never delivers an update")
    gap = np.array(
        [
            [a + (1 - a) * l00 * ps, -a * (1 - l01 * ps)],
            [-b * (1 - l10 * ps), b + (1 - b) * l11 * ps],
        ]
    )
    # det(I - A) expanded so that the alpha*beta terms cancel symbolically
    det = ps * ((1 - b) * a * l11 + (1 - a) * b * l00 + a * b * (l01 + l10)) + ps * ps * (
        (1 - a) * (1 - b) * l00 * l11 - a * b * l01 * l10
    )
    return TerminatingChain(A, absorb, gap, det)


def _row_normalize(M: np.ndarray, exp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rescale each row of ``M`` by a power of two so its largest entry is in [0.5, 1)."""
    _, e = np.frexp(M.max(axis=-1))
    e = np.where(M.max(axis=-1) > 0, e, 0)
    return np.ldexp(M, -e[..., None]), exp + e


def _row_product(M: np.ndarray, Mexp: np.ndarray, B: np.ndarray, Bexp: np.ndarray):
    """(M, Mexp) @ (B, Bexp) where row i of a factor stands for ``row * 2**exp[i]``."""
    # magnitude of each term M[i, k] * 2**Bexp[k]; shift every output row by its largest
    _, me = np.frexp(M)
    mag = np.where(M > 0, me + Bexp, np.iinfo(np.int64).min // 2)
    shift = mag.max(axis=-1)
    # terms pushed below the double range are negligible next to the largest one in their sum
    coef = np.ldexp(M, Bexp - shift[..., None])
    return _row_normalize(coef @ B, Mexp + shift)


def _power_table(A: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Mantissas ``P`` and row exponents ``E`` with ``A**k[i] == P[k, i] * 2**E[k, i]``, k < n.

    One shared exponent per power is enough unless the two rows decay at
    rates so different that one of them leaves the double range; only then
    does each row get its own exponent.
    """
    P, e = _power_table_shared(A, n)
    if P.max(axis=-1).min() > 2.0**-900:
        return P, np.repeat(e[:, None], 2, axis=1)
    return _power_table_rows(A, n)


def _power_table_shared(A: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    P = np.empty((n, 2, 2))
    E = np.zeros(n, dtype=np.int64)
    P[0] = np.eye(2)
    block, block_exp = A.copy(), 0
    size = 1
    while size < n:
        take = min(size, n - size)
        np.matmul(P[:take], block, out=P[size : size + take])
        E[size : size + take] = E[:take] + block_exp
        size += take
        if size < n:
            block = block @ block
            block_exp *= 2
            _, e = np.frexp(block.max())
            block = np.ldexp(block, -int(e))
            block_exp += int(e)
    return P, E


def _power_table_rows(A: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    P = np.empty((n, 2, 2))
    E = np.zeros((n, 2), dtype=np.int64)
    P[0] = np.eye(2)
    block, block_exp = _row_normalize(A.copy(), np.zeros(2, dtype=np.int64))
    size = 1
    while size < n:
        take = min(size, n - size)
        P[size : size + take], E[size : size + take] = _row_product(P[:take], E[:take], block, block_exp)
        size += take
        if size < n:
            block, block_exp = _row_product(block, block_exp, block, block_exp)
    return P, E


def _scaled_power(A: np.ndarray, k: int) -> np.ndarray:
    """``A**k`` with each row scaled by its own positive factor (binary exponentiation)."""
    result, rexp = np.eye(2), np.zeros(2, dtype=np.int64)
    base, bexp = _row_normalize(A.copy(), np.zeros(2, dtype=np.int64))
    while k:
        if k & 1:
            result, rexp = _row_product(result, rexp, base, bexp)
        k >>= 1
        if k:
            base, bexp = _row_product(base, bexp, base, bexp)
    return result


def _unscale(P: np.ndarray, E: np.ndarray) -> np.ndarray:
    return np.ldexp(P, E[..., None])


@dataclass(frozen=True)
class ConditionalSourceLaw:
    p0: float
    p1: float

    def __getitem__(self, x: int) -> float:
        return (self.p0, self.p1)[x]


def conditional_source_law(chain: TerminatingChain, delta: int, xhat: int) -> ConditionalSourceLaw:
    """Law of the current source state given AoI ``delta`` and estimate ``xhat``."""
    if delta < 0 or xhat not in (0, 1):
        raise ValueError(f"need delta >= 0 and xhat in {{0, 1}}, got ({delta}, {xhat})")
    row = _scaled_power(chain.transient, int(delta))[xhat]
    total = row.sum()
    if total <= 0:
        raise UnreachableCondition(f"(delta={delta}, xhat={xhat}) has zero probability")
    p0 = row[0] / total
    return ConditionalSourceLaw(p0, row[1] / total)


def instantaneous_entropy(chain: TerminatingChain, delta: int, xhat: int) -> float:
    """Entropy h(delta, xhat) of the source given AoI and estimate, in bits."""
    return binary_entropy(conditional_source_law(chain, delta, xhat).p0)


def entropy_curve(chain: TerminatingChain, delta_max: int) -> np.ndarray:
    """h(delta, xhat) for delta = 0..delta_max, shape (delta_max + 1, 2).

    Unreachable pairs are NaN.
    """
    P, _ = _power_table(chain.transient, delta_max + 1)
    total = P.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = P[..., 0] / total
    h = binary_entropy(np.where(total > 0, p0, 0.5))
    return np.where(total > 0, h, np.nan)


# ---------------------------------------------------------------------------
# inter-refresh time and AoI


@dataclass(frozen=True)
class InterRefreshLaw:
    """Truncated law of W given the estimate; ``pmf[w - 1, xhat]``."""

    pmf: np.ndarray
    mean: np.ndarray
    tail_mass: np.ndarray

    @property
    def w_max(self) -> int:
        return self.pmf.shape[0]

    @property
    def truncated_mean(self) -> np.ndarray:
        w = np.arange(1, self.w_max + 1)
        return w @ self.pmf

    def mean_error_bound(self) -> np.ndarray:
        """Bound on ``mean - truncated_mean``.

        The neglected part is ``w_max * P(W > w_max) + sum_{k >= w_max} P(W > k)``
        and the second sum is at most ``P(W > w_max) * max E[W]``.
        """
        return self.tail_mass * (self.w_max + self.mean.max())


def _first_horizon(chain: TerminatingChain, tolerance: float, cap: int) -> int:
    """Table length to try first: where the slowest mode of A decays below ``tolerance``.

    The decay rate 1 - rho(A) is the small eigenvalue of I - A, taken in the
    cancellation-free form 2 det / (tr + sqrt(tr^2 - 4 det)).  Falls back to
    64 (and geometric growth) when the estimate exceeds ``cap``.
    """
    g = chain.gap
    tr = g[0, 0] + g[1, 1]
    rate = 2 * chain.det / (tr + math.sqrt(max(tr * tr - 4 * chain.det, 0.0)))
    if not (0 < rate < 1):
        return 64
    k = 1.1 * math.log(tolerance / 10) / math.log1p(-rate) + 32
    return int(k) if 64 < k <= cap else 64


def _survival_horizon(chain: TerminatingChain, tolerance: float, max_horizon: int):
    """Powers of A up to the first k where P(W > k) < tolerance for both estimates."""
    n = _first_horizon(chain, tolerance, max_horizon)
    while True:
        n = min(n, max_horizon + 1)
        P, E = _power_table(chain.transient, n)
        powers = _unscale(P, E)
        surv = powers.sum(axis=-1)
        below = np.flatnonzero(surv.max(axis=1) < tolerance)
        if below.size:
            return powers[: below[0] + 1]
        if n > max_horizon:
            return powers
        n *= 4


def inter_refresh_law(
    chain: TerminatingChain, tolerance: float = DEFAULT_TOLERANCE, max_horizon: int = MAX_HORIZON
) -> InterRefreshLaw:
    mean = chain.mean_time
    powers = _survival_horizon(chain, tolerance, max_horizon)
    w_max = max(len(powers) - 1, 1)
    if len(powers) < 2:
        powers = _unscale(*_power_table(chain.transient, 2))
    pmf = powers[:w_max] @ chain.absorb
    tail = powers[w_max].sum(axis=-1)
    return InterRefreshLaw(pmf, mean, tail)


@dataclass(frozen=True)
class AoiLaw:
    """Truncated p(delta | xhat) for delta = 0..delta_max; ``pmf[delta, xhat]``."""

    pmf: np.ndarray
    tail_mass: np.ndarray

    @property
    def delta_max(self) -> int:
        return self.pmf.shape[0] - 1


def aoi_law_given_estimate(
    chain: TerminatingChain, tolerance: float = DEFAULT_TOLERANCE, max_horizon: int = MAX_HORIZON
) -> AoiLaw:
    mean = chain.mean_time
    n = _first_horizon(chain, tolerance, max_horizon)
    while True:
        n = min(n, max_horizon + 1)
        powers = _unscale(*_power_table(chain.transient, n + 1))
        # AoI mass beyond delta given xhat: (row of A^(delta+1)) @ E[W] / E[W|xhat]
        tail = (powers[1:] @ mean) / mean
        ok = np.flatnonzero(tail.max(axis=1) < tolerance)
        if ok.size or n > max_horizon:
            k = int(ok[0]) if ok.size else n - 1
            surv = powers[: k + 1].sum(axis=-1)
            return AoiLaw(surv / mean, tail[k])
        n *= 4


def estimate_weights(config: NetworkConfig) -> np.ndarray:
    """Fractions (c0, c1) of delivered updates that carry state 0 and 1.

    The success probability multiplies numerator and denominator alike and
    is left out, so the ratio survives p_s underflowing to zero.
    """
    w = access_weights(config.source) * config.policy.as_array()
    lbar = mean_access_probability(config.source, config.policy)
    if lbar <= 0:
        raise DegeneratePolicy("mean access probability is zero")
    c0 = min(max((w[0] + w[2]) / lbar, 0.0), 1.0)
    return np.array([c0, 1.0 - c0])


def estimate_law(config: NetworkConfig, chain: TerminatingChain | None = None) -> np.ndarray:
    """Stationary law (p(xhat=0), p(xhat=1)) of the receiver estimate."""
    chain = build_chain(config) if chain is None else chain
    mean = chain.mean_time
    weighted = estimate_weights(config) * (mean / mean.max())
    return weighted / weighted.sum()


# ---------------------------------------------------------------------------
# joint law and average conditional entropy


@dataclass(frozen=True)
class JointAoiEstimateLaw:
    """Truncated joint law of (AoI, estimate) with per-cell entropies.

    ``table[delta, xhat]`` and ``entropy_table[delta, xhat]`` cover
    delta = 0..delta_max.  The excluded mass ``tail_mass`` is attributed the
    entropy of the last retained cell (``tail_entropy``), which is the limit
    value whenever ``law_converged`` is set; in all cases ``entropy`` is
    within ``tail_mass`` bits of the untruncated sum.
    """

    table: np.ndarray
    entropy_table: np.ndarray
    tail_mass: float
    tail_by_estimate: np.ndarray
    tail_entropy: np.ndarray
    estimate_pmf: np.ndarray
    mean_time: np.ndarray
    law_converged: bool
    chain: TerminatingChain = field(repr=False)

    @property
    def delta_max(self) -> int:
        return self.table.shape[0] - 1

    @property
    def entropy(self) -> float:
        return float(np.sum(self.table * self.entropy_table) + self.tail_by_estimate @ self.tail_entropy)

    @property
    def error_bound(self) -> float:
        return self.tail_mass

    def aoi_marginal(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def conditional_law(self, xhat: int) -> np.ndarray:
        """p(x = 0 | delta, xhat) over the retained horizon (NaN if unreachable)."""
        P, _ = _power_table(self.chain.transient, self.delta_max + 1)
        total = P[:, xhat].sum(axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, P[:, xhat, 0] / total, np.nan)


def _law_converged(P: np.ndarray, relevant: np.ndarray) -> np.ndarray:
    """Flag k (for k < len(P) - 1) where the conditional law has settled."""
    total = P.sum(axis=-1)
    live = total > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(live, P[..., 0] / total, 0.0)
    step = np.zeros_like(p0)
    step[1:] = np.abs(np.diff(p0, axis=0))
    step[1:][~live[1:] | ~live[:-1]] = 0.0
    settled = np.zeros_like(p0, dtype=bool)
    # a small step that does not grow again: the law sits at an attracting fixed point
    settled[1:-1] = (step[1:-1] <= _LAW_STEP) & (step[2:] <= step[1:-1] + 1e-16)
    settled[1:-1] |= ~live[1:-1]
    settled[:, ~relevant] = True
    settled[0] = False
    return settled[:-1].all(axis=1)


def joint_law(
    config: NetworkConfig,
    tolerance: float = DEFAULT_TOLERANCE,
    max_horizon: int = MAX_HORIZON,
    closure_horizon: int = CLOSURE_HORIZON,
) -> JointAoiEstimateLaw:
    """Joint law p(delta, xhat) = p(delta | xhat) p(xhat) with entropies.

    The horizon grows until the excluded probability drops below
    ``tolerance``.  When that would take more than ``closure_horizon`` slots
    (very rare deliveries), the table instead stops where the conditional
    source law has reached its limit, and the remaining mass is assigned
    the limit entropy.
    """
    chain = build_chain(config)
    mean = chain.mean_time
    pest = estimate_law(config, chain)
    relevant = pest > 0
    n = _first_horizon(chain, tolerance, min(closure_horizon, max_horizon))
    while True:
        n = min(n, max_horizon + 1)
        P, E = _power_table(chain.transient, n + 1)
        powers = _unscale(P, E)
        # mass with AoI beyond k: sum_xhat p(xhat) (row of A^(k+1)) @ E[W] / E[W|xhat]
        tail_x = (powers[1:] @ mean) / mean * pest
        tail = tail_x.sum(axis=1)
        small_tail = np.flatnonzero((tail < tolerance)[:-1])
        if small_tail.size:
            k, converged = int(small_tail[0]), False
            break
        if n >= closure_horizon or n > max_horizon:
            settled = np.flatnonzero(_law_converged(P[:n], relevant))
            if settled.size:
                k, converged = int(settled[0]), True
                break
            if n > max_horizon:
                k, converged = n - 1, False
                break
        n *= 4
    surv = powers[: k + 1].sum(axis=-1)
    table = surv / mean * pest
    total = P[: k + 1].sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = np.where(total > 0, P[: k + 1, :, 0] / total, 0.0)
    htab = np.where(total > 0, binary_entropy(p0), 0.0)
    return JointAoiEstimateLaw(
        table=table,
        entropy_table=htab,
        tail_mass=float(tail[k]),
        tail_by_estimate=tail_x[k],
        tail_entropy=htab[k].copy(),
        estimate_pmf=pest,
        mean_time=mean,
        law_converged=converged,
        chain=chain,
    )


def average_conditional_entropy(
    config: NetworkConfig, tolerance: float = DEFAULT_TOLERANCE, closure_horizon: int = CLOSURE_HORIZON
) -> float:
    """H(X | AoI, estimate) in bits; see :func:`joint_law` for the accuracy."""
    return joint_law(config, tolerance, closure_horizon=closure_horizon).entropy


@dataclass(frozen=True)
class EntropyCdf:
    """P(h <= zeta) over the retained cells; the truth lies in [values, values + tail_mass]."""

    thresholds: np.ndarray
    values: np.ndarray
    tail_mass: float

    @property
    def upper(self) -> np.ndarray:
        return np.minimum(self.values + self.tail_mass, 1.0)


def entropy_cdf(config: NetworkConfig, tolerance: float = DEFAULT_TOLERANCE, thresholds=None) -> EntropyCdf:
    if thresholds is None:
        thresholds = np.linspace(0.0, 1.0, 101)
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    law = joint_law(config, tolerance)
    h = law.entropy_table.ravel()
    mass = law.table.ravel()
    order = np.argsort(h, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(mass[order])])
    idx = np.searchsorted(h[order], thresholds, side="right")
    return EntropyCdf(thresholds, np.minimum(cum[idx], 1.0), law.tail_mass)


def entropy_timeline(config: NetworkConfig, receptions, n_slots: int) -> dict[str, np.ndarray]:
    """Per-slot h(delta, xhat) for a given sequence of (slot, state) receptions.

    The series starts at the first reception and ends at ``n_slots - 1``.
    """
    receptions = sorted((int(s), int(x)) for s, x in receptions)
    slots = [s for s, _ in receptions]
    if not receptions:
        raise ValueError("need at least one reception")
    if any(b <= a for a, b in zip(slots, slots[1:])):
        raise ValueError("reception slots must be strictly increasing")
    start = slots[0]
    t = np.arange(start, n_slots)
    idx = np.searchsorted(slots, t, side="right") - 1
    last = np.asarray(slots)[idx]
    xhat = np.asarray([x for _, x in receptions])[idx]
    delta = t - last
    curve = entropy_curve(build_chain(config), int(delta.max(initial=0)))
    return {"slot": t, "delta": delta, "xhat": xhat, "h": curve[delta, xhat]}
