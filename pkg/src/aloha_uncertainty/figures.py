"""Plot-ready data for the five figures.

Each recipe carries the published parameters as defaults.  Overrides are
explicit, type-checked and recorded in every file's provenance line.

Seeds: a recipe takes one integer ``seed``; its ``i``-th simulation uses
``derive_seed(seed, i)``, i.e. the first word of
``SeedSequence(seed, spawn_key=(i,)).generate_state(1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .analysis import build_chain, entropy_cdf, entropy_curve, joint_law
from .errors import ConfigError
from .optimize import sweep_asymmetry, sweep_nodes
from .output import render_csv, write_text
from .policy import NetworkConfig, strategy_random, strategy_reactive
from .simulate import SimConfig, empirical_conditional_table, run, sample_timeline
from .source import SourceParams, source_entropy

DEFAULTS = MappingProxyType(
    {
        "fig2": MappingProxyType(
            {"alpha": 0.1, "beta": 0.01, "m": 50, "slots": 3000, "seed": 1, "delta_max": 400}
        ),
        "fig3": MappingProxyType(
            {
                "alpha": 0.02,
                "beta": 0.02,
                "m": 50,
                "policy": (0.0, 1.0, 1.0, 0.0),
                "slots": 10_000_000,
                "warmup": 100_000,
                "seed": 1,
                "delta_max": 300,
                "track_all_nodes": True,
            }
        ),
        "fig4": MappingProxyType(
            {
                "alpha": 0.02,
                "beta": 0.02,
                "m_values": (10, 50, 100),
                "thresholds": 101,
                "timeline_m": 50,
                "timeline_slots": 1500,
                "seed": 1,
            }
        ),
        "fig5": MappingProxyType(
            {
                "alpha": 0.02,
                "beta": 0.02,
                "m_values": (1, 2, 5, 10, 20, 30, 40, 50, 60, 80, 100, 150, 200),
                "strategies": ("random", "reactive", "load-one", "balanced"),
                "grid_resolution": 11,
                "refine_budget": 500,
            }
        ),
        "fig6": MappingProxyType(
            {
                "m": 50,
                "budget": 0.8,
                "eta_values": (1.0, 2.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0),
                "strategies": ("random", "reactive", "load-one", "balanced"),
                "grid_resolution": 11,
                "refine_budget": 500,
            }
        ),
    }
)


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _coerce(name: str, key: str, value, default):
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(default, int):
            as_float = float(value)
            if as_float != int(as_float):
                raise ValueError
            return int(as_float)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = value.split(",") if isinstance(value, str) else list(value)
            kind = type(default[0])
            return tuple(kind(float(v)) if kind is int else kind(v) for v in items)
    except (TypeError, ValueError):
        pass
    else:
        return value
    raise ConfigError(f"{name}: override {key}={value!r} does not match type {type(default).__name__}")


@dataclass(frozen=True)
class FigureRecipe:
    name: str
    overrides: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in DEFAULTS:
            raise ConfigError(f"unknown figure {self.name!r}; choose from {', '.join(DEFAULTS)}")
        defaults = DEFAULTS[self.name]
        unknown = set(self.overrides) - set(defaults)
        if unknown:
            raise ConfigError(f"{self.name}: unknown overrides {sorted(unknown)}")

    @property
    def params(self) -> dict:
        defaults = DEFAULTS[self.name]
        out = dict(defaults)
        for key, value in self.overrides.items():
            out[key] = _coerce(self.name, key, value, defaults[key])
        return out

    def provenance(self) -> dict:
        return {"mode": "figure", "figure": self.name, **{k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}}


def emit_figure_data(recipe: FigureRecipe, out_dir: str | Path = ".", workers: int | None = None) -> list[Path]:
    """Write the recipe's CSV files into ``out_dir`` and return their paths."""
    out_dir = Path(out_dir)
    files = _BUILDERS[recipe.name](recipe.params, recipe.provenance(), workers)
    paths = []
    for fname, text in files:
        path = out_dir / fname
        write_text(text, path)
        paths.append(path)
    return paths


def _fig2(p, prov, workers):
    src = SourceParams(p["alpha"], p["beta"])
    net = NetworkConfig(p["m"], src, strategy_random(p["m"]))
    tl = sample_timeline(SimConfig(net, p["slots"], warmup=0, seed=derive_seed(p["seed"], 0)), node=0)
    cols = ("slot", "delta", "xhat", "x", "reception", "h")
    rows = zip(tl["slot"], tl["delta"], tl["xhat"], tl["x"], tl["rx"], tl["h"])
    timeline = render_csv(cols, rows, prov, {"h": "bit", "delta": "slot"}, [f"source_entropy={source_entropy(src)!r}"])
    curve = entropy_curve(build_chain(net), p["delta_max"])
    rows = [(d, curve[d, 0], curve[d, 1], source_entropy(src)) for d in range(p["delta_max"] + 1)]
    curve_csv = render_csv(("delta", "h_xhat0", "h_xhat1", "source_entropy"), rows, prov, {"h_xhat0": "bit", "h_xhat1": "bit"})
    return [("fig2_timeline.csv", timeline), ("fig2_curve.csv", curve_csv)]


def _fig3(p, prov, workers):
    net = NetworkConfig(p["m"], SourceParams(p["alpha"], p["beta"]), _policy(p["policy"]))
    law = joint_law(net)
    cfg = SimConfig(
        net, p["slots"], warmup=p["warmup"], seed=derive_seed(p["seed"], 0), track_all_nodes=p["track_all_nodes"]
    )
    stats = run(cfg)
    upto = min(p["delta_max"] + 1, stats.delta_cap)
    p0_emp, se, n = empirical_conditional_table(stats)
    analytic = law.conditional_law(0)
    joint_emp = stats.joint_pmf()
    per_batch = stats.counts[:, :upto, 0].sum(axis=-1) / stats.counts.sum(axis=(1, 2, 3))[:, None]
    jse = per_batch.std(axis=0, ddof=1) / np.sqrt(per_batch.shape[0])
    pad = lambda arr, d: arr[d] if d < len(arr) else 0.0  # noqa: E731
    cond_rows = [(d, pad(analytic, d), p0_emp[d, 0], se[d, 0], n[d, 0]) for d in range(upto)]
    joint_rows = [(d, pad(law.table[:, 0], d), joint_emp[d, 0], jse[d]) for d in range(upto)]
    note = [f"simulation: receptions={stats.receptions} singletons={stats.singletons} "
            f"collisions={stats.collisions} idles={stats.idles} counted_node_slots={stats.total}"]
    cond = render_csv(
        ("delta", "analytic_p_x0_given_xhat0", "empirical_p_x0_given_xhat0", "empirical_stderr", "samples"),
        cond_rows, prov, notes=note,
    )
    joint = render_csv(
        ("delta", "analytic_p_delta_xhat0", "empirical_p_delta_xhat0", "empirical_stderr"), joint_rows, prov, notes=note
    )
    return [("fig3_conditional.csv", cond), ("fig3_joint.csv", joint)]


def _fig4(p, prov, workers):
    src = SourceParams(p["alpha"], p["beta"])
    zeta = np.linspace(0.0, 1.0, p["thresholds"])
    cols, series = ["zeta"], []
    for m in p["m_values"]:
        for name, pol in (("random", strategy_random(m)), ("reactive", strategy_reactive())):
            cdf = entropy_cdf(NetworkConfig(m, src, pol), thresholds=zeta)
            cols += [f"cdf_{name}_m{m}", f"cdf_{name}_m{m}_upper"]
            series += [cdf.values, cdf.upper]
    rows = [(z, *(s[i] for s in series)) for i, z in enumerate(zeta)]
    cdf_csv = render_csv(cols, rows, prov, {"zeta": "bit"})
    # companion sample paths: same seed, random vs reactive
    m = p["timeline_m"]
    seed = derive_seed(p["seed"], 0)
    paths = {
        name: sample_timeline(SimConfig(NetworkConfig(m, src, pol), p["timeline_slots"], warmup=0, seed=seed))
        for name, pol in (("random", strategy_random(m)), ("reactive", strategy_reactive()))
    }
    cols = ("slot", "h_random", "h_reactive", "x_random", "x_reactive")
    rows = zip(paths["random"]["slot"], paths["random"]["h"], paths["reactive"]["h"], paths["random"]["x"], paths["reactive"]["x"])
    timeline = render_csv(cols, rows, prov, {"h_random": "bit", "h_reactive": "bit"})
    return [("fig4_cdf.csv", cdf_csv), ("fig4_timeline.csv", timeline)]


def _wide(rows, key, strategies, extra):
    """Pivot sweep rows (one per key value and strategy) into one row per key value."""
    out = {}
    for r in rows:
        wide = out.setdefault(r[key], {key: r[key], **{k: r[k] for k in extra}})
        tag = r["strategy"].replace("-", "_")
        for col in ("H", "H_error_bound", "load", "l00", "l01", "l10", "l11", "error"):
            wide[f"{col}_{tag}"] = r[col]
    cols = [key, *extra]
    for s in strategies:
        tag = s.replace("-", "_")
        cols += [f"H_{tag}", f"H_error_bound_{tag}", f"load_{tag}", f"l00_{tag}", f"l01_{tag}", f"l10_{tag}", f"l11_{tag}", f"error_{tag}"]
    return cols, list(out.values())


def _problem_kwargs(p):
    return {"grid_resolution": p["grid_resolution"], "refine_budget": p["refine_budget"]}


def _fig5(p, prov, workers):
    src = SourceParams(p["alpha"], p["beta"])
    rows = sweep_nodes(src, p["m_values"], p["strategies"], _problem_kwargs(p), workers)
    for r in rows:
        r["source_entropy"] = source_entropy(src)
    cols, wide = _wide(rows, "m", p["strategies"], ("source_entropy",))
    return [("fig5.csv", render_csv(cols, wide, prov))]


def _fig6(p, prov, workers):
    rows = sweep_asymmetry(p["m"], p["budget"], p["eta_values"], p["strategies"], _problem_kwargs(p), workers)
    cols, wide = _wide(rows, "eta", p["strategies"], ("alpha", "beta"))
    return [("fig6.csv", render_csv(cols, wide, prov))]


def _policy(vec):
    from .policy import AccessPolicy

    return AccessPolicy.from_vector(vec)


_BUILDERS = {"fig2": _fig2, "fig3": _fig3, "fig4": _fig4, "fig5": _fig5, "fig6": _fig6}
