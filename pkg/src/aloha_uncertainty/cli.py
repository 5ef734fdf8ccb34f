"""Command-line driver.

    aloha-uncertainty <mode> [--key value]... [--config path] [--out path]

A config file is a JSON object whose keys mirror the flags (``delta_cap`` or
``delta-cap``), or any CSV written by this tool, whose provenance line holds
the fully resolved config.  Flags override the file.  Every parameter is
checked before any computation starts.

On failure a JSON error record ``{"error", "origin", "message"}`` goes to
stderr; the exit code is 2 for configuration errors and 1 otherwise.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import DEFAULT_TOLERANCE, joint_law
from .errors import ConfigError
from .figures import DEFAULTS as FIGURE_DEFAULTS
from .figures import FigureRecipe, emit_figure_data
from .optimize import SWEEP_COLUMNS, OptimizationProblem, optimize, sweep_asymmetry, sweep_nodes
from .output import _json_default, config_json, read_config_line, render_csv, write_text
from .policy import (
    STRATEGIES,
    AccessPolicy,
    NetworkConfig,
    channel_load,
    mean_access_probability,
    named_policy,
    success_probability,
)
from .simulate import SimConfig, empirical_average_entropy, run, sample_timeline
from .source import SourceParams, params_from_budget, source_entropy
from .validation import Tolerances, validate

REQUIRED = object()


def _int(text):
    value = float(text)
    if not math.isfinite(value) or value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _list(kind):
    def parse(value):
        items = value if isinstance(value, (list, tuple)) else str(value).split(",")
        out = [kind(v.strip() if isinstance(v, str) else v) for v in items if not (isinstance(v, str) and not v.strip())]
        if not out:
            raise ValueError("empty list")
        return out

    return parse


def _policy_value(value):
    """A strategy name or four comma-separated probabilities."""
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    text = str(value).strip()
    if text in STRATEGIES:
        return text
    parts = text.split(",")
    if len(parts) != 4:
        raise ValueError(f"policy must be one of {', '.join(STRATEGIES)} or four comma-separated numbers")
    return [float(p) for p in parts]


_SOURCE = {
    "m": (_int, REQUIRED),
    "alpha": (float, None),
    "beta": (float, None),
    "eta": (float, None),
    "budget": (float, None),
}
_SIM = {
    "policy": (_policy_value, REQUIRED),
    "slots": (_int, REQUIRED),
    "warmup": (_int, 100_000),
    "seed": (_int, 0),
    "track_all_nodes": (_bool, True),
    "delta_cap": (_int, None),
    "batches": (_int, 20),
}
_SEARCH = {"grid_resolution": (_int, 11), "refine_budget": (_int, 500)}
_ALL_STRATEGIES = ["random", "reactive", "load-one", "balanced"]

SCHEMAS = {
    "analyze": {**_SOURCE, "policy": (_policy_value, REQUIRED), "tolerance": (float, DEFAULT_TOLERANCE)},
    "simulate": {**_SOURCE, **_SIM},
    "validate": {
        **_SOURCE,
        **_SIM,
        "tolerance": (float, DEFAULT_TOLERANCE),
        "tol_conditional": (float, 0.01),
        "tol_joint": (float, 0.002),
        "tol_estimate": (float, 0.01),
        "tol_entropy": (float, 0.01),
        "delta_max": (_int, 200),
    },
    "timeline": {
        **_SOURCE,
        "policy": (_policy_value, REQUIRED),
        "slots": (_int, REQUIRED),
        "seed": (_int, 0),
        "node": (_int, 0),
    },
    "optimize": {
        **_SOURCE,
        **_SEARCH,
        "target_load": (float, None),
        "starts": (_int, 3),
        "seed": (_int, 0),
    },
    "sweep-nodes": {
        "alpha": (float, REQUIRED),
        "beta": (float, REQUIRED),
        "m_values": (_list(_int), REQUIRED),
        "strategies": (_list(str), _ALL_STRATEGIES),
        **_SEARCH,
    },
    "sweep-asymmetry": {
        "m": (_int, REQUIRED),
        "budget": (float, REQUIRED),
        "eta_values": (_list(float), REQUIRED),
        "strategies": (_list(str), _ALL_STRATEGIES),
        **_SEARCH,
    },
}
MODES = (*SCHEMAS, "figure")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="aloha-uncertainty", description="Receiver uncertainty under slotted ALOHA.")
    sub = parser.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for mode, schema in SCHEMAS.items():
        p = sub.add_parser(mode)
        for key in schema:
            p.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
        p.add_argument("--config", default=None, help="JSON file or CSV written by this tool")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
    p = sub.add_parser("figure", help="plot-ready data; extra --key value pairs override recipe defaults")
    p.add_argument("name", nargs="?", default=None, help=", ".join(FIGURE_DEFAULTS))
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=".", help="output directory")
    return parser


def _load_config(path) -> dict:
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        if path.suffix == ".csv":
            data = read_config_line(path)
        else:
            data = json.loads(path.read_text(encoding="utf-8"))
    except (ValueError, OSError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def resolve(mode: str, flags: dict, file_config: dict) -> dict:
    """Merge file and flag values over the defaults and type-check them all."""
    schema = SCHEMAS[mode]
    file_mode = file_config.pop("mode", mode)
    if file_mode != mode:
        raise ConfigError(f"config is for mode {file_mode!r}, not {mode!r}")
    unknown = sorted(set(file_config) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for mode {mode}: {', '.join(unknown)}")
    out = {"mode": mode}
    for key, (parse, default) in schema.items():
        raw = flags.get(key)
        if raw is None:
            raw = file_config.get(key)
        if raw is None:
            if default is REQUIRED:
                raise ConfigError(f"mode {mode} needs --{key.replace('_', '-')}")
            out[key] = default
            continue
        try:
            out[key] = parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    _check(out)
    return out


def _check(cfg: dict) -> None:
    if "m" in cfg and cfg["m"] < 1:
        raise ConfigError("m must be >= 1")
    if "eta" in cfg:
        by_rates = cfg["alpha"] is not None or cfg["beta"] is not None
        by_budget = cfg["eta"] is not None or cfg["budget"] is not None
        if by_rates == by_budget:
            raise ConfigError("give either --alpha and --beta or --eta and --budget")
        pair = ("alpha", "beta") if by_rates else ("eta", "budget")
        if any(cfg[k] is None for k in pair):
            raise ConfigError(f"--{pair[0]} and --{pair[1]} go together")
    for key in ("strategies",):
        bad = [s for s in cfg.get(key) or [] if s not in _ALL_STRATEGIES]
        if bad:
            raise ConfigError(f"unknown strategies {bad}; choose from {', '.join(_ALL_STRATEGIES)}")
    if cfg.get("slots") is not None and cfg["slots"] <= cfg.get("warmup", 0):
        raise ConfigError("slots must exceed warmup")
    if cfg.get("grid_resolution") is not None and cfg["grid_resolution"] < 2:
        raise ConfigError("grid_resolution must be >= 2")
    if isinstance(cfg.get("policy"), list) and not all(0.0 <= p <= 1.0 for p in cfg["policy"]):
        raise ConfigError("policy probabilities must lie in [0, 1]")
    if cfg.get("tolerance") is not None and not (0 < cfg["tolerance"] < 1):
        raise ConfigError("tolerance must lie in (0, 1)")


def _source(cfg: dict) -> SourceParams:
    if cfg.get("eta") is not None:
        return params_from_budget(cfg["eta"], cfg["m"], cfg["budget"])
    try:
        return SourceParams(cfg["alpha"], cfg["beta"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _network(cfg: dict) -> NetworkConfig:
    source = _source(cfg)
    pol = cfg["policy"]
    policy = named_policy(pol, source, cfg["m"]) if isinstance(pol, str) else AccessPolicy.from_vector(pol)
    return NetworkConfig(cfg["m"], source, policy)


def _network_columns(net: NetworkConfig) -> dict:
    return {
        "m": net.m,
        "alpha": net.source.alpha,
        "beta": net.source.beta,
        **dict(zip(("l00", "l01", "l10", "l11"), net.policy.as_tuple())),
        "lbar": mean_access_probability(net.source, net.policy),
        "p_s": success_probability(net),
        "load": channel_load(net),
    }


# ---------------------------------------------------------------------------
# modes


def _analyze(cfg):
    net = _network(cfg)
    law = joint_law(net, cfg["tolerance"])
    row = {
        **_network_columns(net),
        "H": law.entropy,
        "H_error_bound": law.error_bound,
        "H_source": source_entropy(net.source),
        "tail_mass": law.tail_mass,
        "p_xhat0": law.estimate_pmf[0],
        "p_xhat1": law.estimate_pmf[1],
        "mean_w_xhat0": law.mean_time[0],
        "mean_w_xhat1": law.mean_time[1],
        "delta_max": law.delta_max,
    }
    units = {"H": "bit", "H_error_bound": "bit", "H_source": "bit", "mean_w_xhat0": "slot", "mean_w_xhat1": "slot"}
    return render_csv(list(row), [row], cfg, units)


def _sim_config(cfg, net):
    return SimConfig(
        net,
        cfg["slots"],
        warmup=cfg["warmup"],
        seed=cfg["seed"],
        track_all_nodes=cfg["track_all_nodes"],
        delta_cap=cfg["delta_cap"],
        batches=cfg["batches"],
    )


def _simulate(cfg):
    net = _network(cfg)
    stats = run(_sim_config(cfg, net))
    H, half = empirical_average_entropy(stats)
    cells = stats.cells
    pmf = stats.joint_pmf()
    rows = []
    for delta, xhat in zip(*np.nonzero(cells.sum(axis=-1))):
        n0, n1 = (int(v) for v in cells[delta, xhat])
        p0 = n0 / (n0 + n1)
        rows.append(
            (int(delta), int(xhat), n0, n1, pmf[delta, xhat], p0, math.sqrt(p0 * (1 - p0) / (n0 + n1)), delta == stats.delta_cap)
        )
    notes = [
        f"channel: receptions={stats.receptions} singletons={stats.singletons} collisions={stats.collisions} idles={stats.idles}",
        f"empirical H={H!r} bit, 95% half-width={half!r}; estimate occupancy={stats.estimate_occupancy().tolist()}",
    ]
    cols = ("delta", "xhat", "count_x0", "count_x1", "p_delta_xhat", "p_x0_given", "stderr_p_x0_given", "pooled_tail")
    return render_csv(cols, rows, cfg, {"delta": "slot"}, notes)


def _validate(cfg):
    net = _network(cfg)
    tol = Tolerances(cfg["tol_conditional"], cfg["tol_joint"], cfg["tol_estimate"], cfg["tol_entropy"], cfg["delta_max"])
    report = validate(_sim_config(cfg, net), tol, cfg["tolerance"])
    return json.dumps({"config": json.loads(config_json(cfg)), **report.to_dict()}, indent=2, sort_keys=True, default=_json_default) + "\n"


def _timeline(cfg):
    net = _network(cfg)
    tl = sample_timeline(SimConfig(net, cfg["slots"], warmup=0, seed=cfg["seed"]), node=cfg["node"])
    cols = ("slot", "delta", "xhat", "x", "reception", "h")
    rows = zip(tl["slot"], tl["delta"], tl["xhat"], tl["x"], tl["rx"], tl["h"])
    return render_csv(cols, rows, cfg, {"delta": "slot", "h": "bit"}, [f"H_source={source_entropy(net.source)!r}"])


def _optimize(cfg):
    source = _source(cfg)
    problem = OptimizationProblem(
        cfg["m"],
        source,
        target_load=cfg["target_load"],
        grid_resolution=cfg["grid_resolution"],
        refine_budget=cfg["refine_budget"],
        seed=cfg["seed"],
        starts=cfg["starts"],
        workers=None,
    )
    result = optimize(problem)
    net = NetworkConfig(cfg["m"], source, result.policy)
    row = {**_network_columns(net), "H": result.objective, "H_error_bound": result.error_bound, "evaluations": result.evaluations}
    return render_csv(list(row), [row], cfg, {"H": "bit", "H_error_bound": "bit"})


def _search_kwargs(cfg):
    return {"grid_resolution": cfg["grid_resolution"], "refine_budget": cfg["refine_budget"]}


def _sweep_nodes(cfg):
    source = _source(cfg)
    rows = sweep_nodes(source, cfg["m_values"], cfg["strategies"], _search_kwargs(cfg))
    return render_csv(("m", "alpha", "beta", *SWEEP_COLUMNS), rows, cfg, {"H": "bit"})


def _sweep_asymmetry(cfg):
    rows = sweep_asymmetry(cfg["m"], cfg["budget"], cfg["eta_values"], cfg["strategies"], _search_kwargs(cfg))
    return render_csv(("eta", "m", "alpha", "beta", *SWEEP_COLUMNS), rows, cfg, {"H": "bit"})


_RUNNERS = {
    "analyze": _analyze,
    "simulate": _simulate,
    "validate": _validate,
    "timeline": _timeline,
    "optimize": _optimize,
    "sweep-nodes": _sweep_nodes,
    "sweep-asymmetry": _sweep_asymmetry,
}


def _figure(args, extra):
    overrides = _load_config(args.config)
    overrides.pop("mode", None)
    name = args.name or overrides.pop("figure", None)
    overrides.pop("figure", None)
    if name is None:
        raise ConfigError("figure needs a name: " + ", ".join(FIGURE_DEFAULTS))
    if len(extra) % 2:
        raise ConfigError(f"overrides come in --key value pairs, got {extra}")
    for flag, value in zip(extra[::2], extra[1::2]):
        if not flag.startswith("--"):
            raise ConfigError(f"expected --key, got {flag!r}")
        overrides[flag[2:].replace("-", "_")] = value
    recipe = FigureRecipe(name, overrides)
    recipe.params  # type-check before computing
    for path in emit_figure_data(recipe, args.out):
        print(path)


def _error_record(exc: BaseException) -> dict:
    origin = getattr(exc, "origin", None) or type(exc).__module__.rsplit(".", 1)[-1]
    return {"error": type(exc).__name__, "origin": origin, "message": str(exc)}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = _build_parser()
        args, extra = parser.parse_known_args(argv)
        if args.mode == "figure":
            _figure(args, extra)
            return 0
        if extra:
            raise ConfigError(f"unrecognised arguments: {' '.join(extra)}")
        flags = {k: v for k, v in vars(args).items() if k not in ("mode", "config", "out")}
        cfg = resolve(args.mode, flags, _load_config(args.config))
        write_text(_RUNNERS[args.mode](cfg), args.out)
        return 0
    except ConfigError as exc:
        print(json.dumps(_error_record(exc)), file=sys.stderr)
        return 2
    except Exception as exc:  # every failure leaves a record
        print(json.dumps(_error_record(exc)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
