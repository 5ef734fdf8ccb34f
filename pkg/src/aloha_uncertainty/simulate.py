"""Exact slot-level Monte Carlo of the whole network.

Every node carries its own source, its own random stream and its own
last-value estimator at the receiver; the collision channel couples them.
Per slot the order is: sources transition, nodes decide to transmit from
their (previous, current) state pair, and a slot with a single transmitter
delivers that node's current state.

Random streams: ``SeedSequence(seed).spawn(m)`` gives one generator per
node, which draws the initial state and then, chunk by chunk, the source
and transmit uniforms of that node.  Results therefore do not depend on
chunk size, on how many nodes are tracked, or on worker-pool size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .analysis import ConditionalSourceLaw, build_chain, entropy_curve
from .errors import AlohaUncertaintyError, InsufficientSamples
from .policy import NetworkConfig
from .source import binary_entropy, stationary

MAX_DELTA_CAP = 1_000_000
# node-slots handled per vectorised chunk
_CHUNK_CELLS = 1 << 21


@dataclass(frozen=True)
class SimConfig:
    network: NetworkConfig
    slots: int
    warmup: int = 100_000
    seed: int = 0
    track_all_nodes: bool = True
    delta_cap: int | None = None
    batches: int = 20

    def __post_init__(self) -> None:
        if not (self.slots > self.warmup >= 0):
            raise ValueError(f"need slots > warmup >= 0, got slots={self.slots}, warmup={self.warmup}")
        if self.delta_cap is not None and self.delta_cap < 1:
            raise ValueError("delta_cap must be >= 1")
        if self.batches < 1:
            raise ValueError("batches must be >= 1")

    @property
    def resolved_delta_cap(self) -> int:
        return self.delta_cap if self.delta_cap is not None else default_delta_cap(self.network)


def default_delta_cap(network: NetworkConfig) -> int:
    """Ten times the longest of the source sojourn means and E[W]."""
    src = network.source
    scale = max(1.0 / src.alpha, 1.0 / src.beta)
    try:
        scale = max(scale, float(build_chain(network).mean_time.max()))
    except AlohaUncertaintyError:
        pass
    return int(min(math.ceil(10 * scale), MAX_DELTA_CAP))


@dataclass
class SimulationStats:
    """Occupancy counts ``counts[batch, delta, xhat, x]``.

    The last ``delta`` row (index ``delta_cap``) pools every AoI >= delta_cap.
    Only slots after warmup and after the node's first reception are counted.
    """

    counts: np.ndarray
    receptions: int
    collisions: int
    idles: int
    singletons: int
    first_reception_slot: np.ndarray
    delta_cap: int
    counted_slots: int
    tracked_nodes: int
    config: SimConfig | None = field(default=None, repr=False)

    @property
    def cells(self) -> np.ndarray:
        """Counts summed over batches, shape (delta_cap + 1, 2, 2)."""
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def joint_pmf(self) -> np.ndarray:
        """Empirical p(delta, xhat); row ``delta_cap`` is the pooled tail."""
        if self.total == 0:
            raise InsufficientSamples("no counted slots")
        return self.cells.sum(axis=-1) / self.total

    def estimate_occupancy(self) -> np.ndarray:
        return self.joint_pmf().sum(axis=0)

    def state_occupancy(self) -> np.ndarray:
        return self.cells.sum(axis=(0, 1)) / self.total

    def merge(self, other: SimulationStats) -> SimulationStats:
        """Pool two runs with identical shapes by adding counts."""
        if self.counts.shape != other.counts.shape:
            raise ValueError("cannot merge runs with different delta_cap or batch count")
        return SimulationStats(
            counts=self.counts + other.counts,
            receptions=self.receptions + other.receptions,
            collisions=self.collisions + other.collisions,
            idles=self.idles + other.idles,
            singletons=self.singletons + other.singletons,
            first_reception_slot=np.minimum(self.first_reception_slot, other.first_reception_slot),
            delta_cap=self.delta_cap,
            counted_slots=self.counted_slots + other.counted_slots,
            tracked_nodes=self.tracked_nodes,
            config=None,
        )


def evolve_sources(x0: np.ndarray, u: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    """Source paths of shape ``u.shape`` from initial states ``x0``.

    Node ``i`` moves 0 -> 1 at slot ``t`` iff ``u[i, t] < alpha`` and stays in 1
    iff ``u[i, t] >= beta``.  Each slot is then one of four maps on {0, 1}:
    constant 0, constant 1, identity or swap, so a state is the value of the
    most recent constant map flipped by the parity of swaps since.
    """
    m, T = u.shape
    to1_from0 = u < alpha
    to1_from1 = u >= beta
    const = to1_from0 == to1_from1
    parity = np.cumsum(to1_from0 & ~to1_from1, axis=1, dtype=np.int32) & 1
    # x_t = (value of last constant map XOR parity there) XOR parity at t;
    # carry that bracket forward as the low bit of (2 * position + bit)
    key = np.where(const, 2 * np.arange(1, T + 1, dtype=np.int32) + (to1_from0 ^ parity), 0)
    key = np.maximum.accumulate(np.maximum(key, x0.astype(np.int32)[:, None]), axis=1)
    return ((key & 1) ^ parity).astype(np.int8)


def _chunks(config: SimConfig):
    """Yield per-chunk arrays of the whole network, in slot order."""
    net = config.network
    m = net.m
    alpha, beta = net.source.alpha, net.source.beta
    lam = net.policy.as_array()
    gens = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(m)]
    pi1 = stationary(net.source).pi1
    x_prev = np.array([g.random() < pi1 for g in gens], dtype=np.int8)
    carry = np.full(m, -1, dtype=np.int64)
    T = max(1024, _CHUNK_CELLS // m)
    t0 = 0
    while t0 < config.slots:
        n = min(T, config.slots - t0)
        draws = np.empty((m, 2, n))
        for g, out in zip(gens, draws):
            g.random(out=out)
        X = evolve_sources(x_prev, draws[:, 0], alpha, beta)
        prev = np.concatenate([x_prev[:, None], X[:, :-1]], axis=1)
        tx = draws[:, 1] < lam[2 * prev + X]
        ntx = tx.sum(axis=0)
        rx = tx & (ntx == 1)[None, :]
        t = np.arange(t0, t0 + n)
        # last reception slot and its content, packed as 2 * slot + state
        key = np.maximum.accumulate(np.where(rx, 2 * t + X, -1), axis=1)
        key = np.maximum(key, carry[:, None])
        delta = np.where(key >= 0, t - (key >> 1), -1)
        est = np.where(key >= 0, key & 1, -1).astype(np.int8)
        yield {"t": t, "x": X, "tx": tx, "ntx": ntx, "rx": rx, "delta": delta, "xhat": est}
        x_prev = X[:, -1].copy()
        carry = key[:, -1].copy()
        t0 += n


def run(config: SimConfig) -> SimulationStats:
    m = config.network.m
    cap = config.resolved_delta_cap
    B = config.batches
    span = config.slots - config.warmup
    tracked = slice(None) if config.track_all_nodes else slice(0, 1)
    n_tracked = m if config.track_all_nodes else 1
    flat = np.zeros(B * (cap + 1) * 4, dtype=np.int64)
    receptions = collisions = idles = singletons = 0
    first = np.full(m, -1, dtype=np.int64)
    for c in _chunks(config):
        t = c["t"]
        rx = c["rx"]
        got = rx.any(axis=1) & (first < 0)
        if got.any():
            first[got] = t[np.argmax(rx[got], axis=1)]
        keep = t >= config.warmup
        if not keep.any():
            continue
        if not keep.all():
            c = {k: (v[..., keep] if k != "t" else v[keep]) for k, v in c.items()}
            t = c["t"]
        ntx = c["ntx"]
        idles += int(np.count_nonzero(ntx == 0))
        singletons += int(np.count_nonzero(ntx == 1))
        collisions += int(np.count_nonzero(ntx > 1))
        delta = c["delta"][tracked]
        receptions += int(np.count_nonzero(c["rx"][tracked]))
        valid = delta >= 0
        batch = (t - config.warmup) * B // span
        index = (batch * (cap + 1) + np.minimum(delta, cap)) * 4 + 2 * c["xhat"][tracked] + c["x"][tracked]
        flat += np.bincount(index[valid], minlength=flat.size)
    counts = flat.reshape(B, cap + 1, 2, 2)
    return SimulationStats(
        counts=counts,
        receptions=receptions,
        collisions=collisions,
        idles=idles,
        singletons=singletons,
        first_reception_slot=first,
        delta_cap=cap,
        counted_slots=span,
        tracked_nodes=n_tracked,
        config=config,
    )


def empirical_conditional_table(stats: SimulationStats) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell estimates of p(x = 0 | delta, xhat) over delta < delta_cap.

    Returns ``(p0, stderr, n)`` each of shape (delta_cap, 2); empty cells are NaN.
    """
    cells = stats.cells[: stats.delta_cap]
    n = cells.sum(axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        p0 = cells[..., 0] / n
        se = np.sqrt(p0 * (1 - p0) / n)
    return p0, se, n


def empirical_conditional_law(
    stats: SimulationStats, delta: int, xhat: int
) -> tuple[ConditionalSourceLaw, float]:
    """Ratio estimate of p(x | delta, xhat) with its binomial standard error.

    ``delta == stats.delta_cap`` addresses the pooled overflow cell.
    """
    if not (0 <= delta <= stats.delta_cap) or xhat not in (0, 1):
        raise ValueError(f"cell ({delta}, {xhat}) outside the histogram")
    cell = stats.cells[delta, xhat]
    n = int(cell.sum())
    if n == 0:
        raise InsufficientSamples(f"no samples in cell (delta={delta}, xhat={xhat})")
    p0 = cell[0] / n
    return ConditionalSourceLaw(p0, cell[1] / n), math.sqrt(p0 * (1 - p0) / n)


def _plugin_entropy(cells: np.ndarray) -> float:
    n = cells.sum(axis=-1)
    total = n.sum()
    if total == 0:
        return math.nan
    live = n > 0
    h = binary_entropy(cells[..., 0][live] / n[live])
    return float(np.sum(n[live] * h) / total)


def empirical_average_entropy(stats: SimulationStats, confidence: float = 0.95) -> tuple[float, float]:
    """Plug-in H(X | AoI, estimate) and a batch-means confidence half-width."""
    if stats.total == 0:
        raise InsufficientSamples("no counted slots")
    value = _plugin_entropy(stats.cells)
    per_batch = np.array([_plugin_entropy(b) for b in stats.counts])
    per_batch = per_batch[np.isfinite(per_batch)]
    if per_batch.size < 2:
        return value, math.inf
    q = sps.t.ppf(0.5 + confidence / 2, per_batch.size - 1)
    return value, float(q * per_batch.std(ddof=1) / math.sqrt(per_batch.size))


def sample_timeline(config: SimConfig, node: int = 0, slots: int | None = None) -> dict[str, np.ndarray]:
    """Sample path of one node: slot, AoI, estimate, true state, reception
    flag and the analytical entropy h(delta, xhat).

    Before the node's first reception ``delta`` and ``xhat`` are -1 and h is NaN.
    """
    slots = config.slots if slots is None else slots
    if not (0 <= node < config.network.m):
        raise ValueError(f"node index {node} out of range")
    cfg = SimConfig(config.network, slots, warmup=0, seed=config.seed, delta_cap=1, batches=1)
    parts = {k: [] for k in ("slot", "delta", "xhat", "x", "rx")}
    for c in _chunks(cfg):
        parts["slot"].append(c["t"])
        parts["delta"].append(c["delta"][node])
        parts["xhat"].append(c["xhat"][node])
        parts["x"].append(c["x"][node])
        parts["rx"].append(c["rx"][node])
    out = {k: np.concatenate(v) for k, v in parts.items()}
    h = np.full(slots, np.nan)
    seen = out["delta"] >= 0
    if seen.any():
        try:
            curve = entropy_curve(build_chain(config.network), int(out["delta"].max()))
            h[seen] = curve[out["delta"][seen], out["xhat"][seen]]
        except AlohaUncertaintyError:
            pass
    out["h"] = h
    return out
