"""Compare the analytical (AoI, estimate, state) law with a long simulation.

    python scripts/validate_fig3.py [--m 50] [--slots 10000000] [--seed 1]

Prints the validation report as JSON and exits nonzero if any check fails.
"""

import argparse
import json
import sys

from aloha_uncertainty.output import _json_default
from aloha_uncertainty.policy import AccessPolicy, NetworkConfig
from aloha_uncertainty.simulate import SimConfig
from aloha_uncertainty.source import SourceParams
from aloha_uncertainty.validation import validate


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=50)
    ap.add_argument("--alpha", type=float, default=0.02)
    ap.add_argument("--beta", type=float, default=0.02)
    ap.add_argument("--policy", type=float, nargs=4, default=(0.0, 1.0, 1.0, 0.0))
    ap.add_argument("--slots", type=int, default=10_000_000)
    ap.add_argument("--warmup", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    net = NetworkConfig(args.m, SourceParams(args.alpha, args.beta), AccessPolicy.from_vector(args.policy))
    report = validate(SimConfig(net, args.slots, warmup=args.warmup, seed=args.seed, track_all_nodes=True))
    print(json.dumps(report.to_dict(), indent=2, default=_json_default))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
