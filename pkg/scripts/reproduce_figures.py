"""Write the data behind every figure into one directory.

    python scripts/reproduce_figures.py --out results/ [--only fig3 fig5] [--quick]

``--quick`` shortens the simulations and coarsens the optimizer grid so the
whole set finishes in a few minutes; the files record the overrides used.
"""

import argparse
import time
from pathlib import Path

from aloha_uncertainty.figures import DEFAULTS, FigureRecipe, emit_figure_data
from aloha_uncertainty.parallel import worker_count

QUICK = {
    "fig3": {"slots": 1_000_000, "warmup": 10_000},
    "fig5": {"grid_resolution": 6, "refine_budget": 120},
    "fig6": {"grid_resolution": 6, "refine_budget": 120},
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--only", nargs="*", choices=sorted(DEFAULTS), default=sorted(DEFAULTS))
    ap.add_argument("--quick", action="store_true")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name in args.only:
        recipe = FigureRecipe(name, QUICK.get(name, {}) if args.quick else {})
        start = time.perf_counter()
        paths = emit_figure_data(recipe, args.out, worker_count())
        print(f"{name}: {', '.join(p.name for p in paths)} ({time.perf_counter() - start:.1f} s)")


if __name__ == "__main__":
    main()
