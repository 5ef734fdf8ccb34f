"""Side-by-side comparison of the analysis and the exact simulator."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps

from .analysis import joint_law
from .simulate import SimConfig, SimulationStats, empirical_average_entropy, empirical_conditional_table, run

# cells with fewer samples are left out of the per-cell comparisons
MIN_CELL_SAMPLES = 100


@dataclass(frozen=True)
class Tolerances:
    conditional: float = 0.01
    joint: float = 0.002
    estimate: float = 0.01
    entropy: float = 0.01
    delta_max: int = 200
    # family-wise two-sided level for the statistical (m = 1) checks
    level: float = 0.0027


@dataclass
class Check:
    name: str
    discrepancy: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[Check]
    exact: bool
    sim: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "status": "PASS" if self.passed else "FAIL",
            "exact_model": self.exact,
            "checks": [asdict(c) for c in self.checks],
            "simulation": self.sim,
        }


def _z_threshold(n_tests: int, level: float) -> float:
    """Per-test |z| bound keeping the family-wise level (never below 3)."""
    return max(3.0, float(sps.norm.isf(level / (2 * max(n_tests, 1)))))


def _batch_se(stats: SimulationStats, upto: int) -> np.ndarray:
    per_batch = stats.counts[:, :upto].sum(axis=-1).astype(float)
    totals = per_batch.sum(axis=(1, 2))
    live = totals > 0
    frac = per_batch[live] / totals[live][:, None, None]
    if live.sum() < 2:
        return np.full(frac.shape[1:], np.inf)
    return frac.std(axis=0, ddof=1) / math.sqrt(live.sum())


def compare(stats: SimulationStats, tol: Tolerances = Tolerances(), tolerance: float = 1e-12) -> ValidationReport:
    """Per-quantity discrepancies between analysis and a finished simulation.

    With one node the analytical model is exact and every quantity is judged
    against its statistical error (family-wise level ``tol.level``);
    otherwise the absolute tolerances apply.
    """
    net = stats.config.network
    exact = net.m == 1
    law = joint_law(net, tolerance)
    upto = min(tol.delta_max + 1, stats.delta_cap, law.delta_max + 1)
    checks = []

    p0_emp, se, n = empirical_conditional_table(stats)
    p0_emp, se, n = p0_emp[:upto], se[:upto], n[:upto]
    p0_an = np.stack([law.conditional_law(0), law.conditional_law(1)], axis=1)[:upto]
    used = (n >= MIN_CELL_SAMPLES) & np.isfinite(p0_an)
    diff = np.abs(p0_an - p0_emp)[used]
    worst = float(diff.max()) if diff.size else 0.0
    if exact:
        z = _z_threshold(int(used.sum()), tol.level)
        ok = bool(np.all(diff <= z * se[used] + 1e-12))
        checks.append(Check("conditional_law", worst, z, ok, f"max |z| bound {z:.2f} over {int(used.sum())} cells"))
    else:
        checks.append(Check("conditional_law", worst, tol.conditional, worst <= tol.conditional, f"{int(used.sum())} cells"))

    joint_emp = stats.joint_pmf()[:upto]
    jdiff = np.abs(law.table[:upto] - joint_emp)
    jworst = float(jdiff.max())
    if exact:
        jse = _batch_se(stats, upto)
        z = _z_threshold(jdiff.size, tol.level)
        ok = bool(np.all(jdiff <= z * jse + 1e-12))
        checks.append(Check("joint_law", jworst, z, ok, "batch-means standard errors"))
    else:
        checks.append(Check("joint_law", jworst, tol.joint, jworst <= tol.joint))

    occ = stats.estimate_occupancy()
    ediff = float(abs(law.estimate_pmf[0] - occ[0]))
    if exact:
        per_batch = stats.counts[..., 0, :].sum(axis=(1, 2)) / np.maximum(stats.counts.sum(axis=(1, 2, 3)), 1)
        ese = per_batch.std(ddof=1) / math.sqrt(len(per_batch)) if len(per_batch) > 1 else math.inf
        z = _z_threshold(1, tol.level)
        checks.append(Check("estimate_law", ediff, z, ediff <= z * ese + 1e-12))
    else:
        checks.append(Check("estimate_law", ediff, tol.estimate, ediff <= tol.estimate))

    H_emp, half = empirical_average_entropy(stats)
    hdiff = abs(law.entropy - H_emp)
    htol = 3 * half + law.error_bound if exact else max(3 * half, tol.entropy)
    checks.append(Check("average_entropy", hdiff, htol, hdiff <= htol + 1e-12, f"half-width {half:.3g}"))

    sim = {
        "slots": stats.config.slots,
        "warmup": stats.config.warmup,
        "seed": stats.config.seed,
        "tracked_nodes": stats.tracked_nodes,
        "counted_node_slots": stats.total,
        "receptions": stats.receptions,
        "singletons": stats.singletons,
        "collisions": stats.collisions,
        "idles": stats.idles,
        "empirical_entropy": H_emp,
        "empirical_entropy_half_width": half,
        "analytic_entropy": law.entropy,
    }
    return ValidationReport(checks, exact, sim)


def validate(config: SimConfig, tol: Tolerances = Tolerances(), tolerance: float = 1e-12) -> ValidationReport:
    return compare(run(config), tol, tolerance)
