"""Command-line driver for benchmark runs.

Configuration comes from an optional flat JSON file plus flag overrides; each
run owns its output directory. Exit codes: 0 converged, 2 solver
non-convergence, 3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .adaptive import AdaptiveConfig
from .bench import SOLVER_ERRORS, run
from .pde import BENCHMARKS


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rfpde",
                                description="Adaptive random-feature solver for "
                                            "second-order boundary-value problems")
    p.add_argument("--problem", choices=BENCHMARKS, help="benchmark name")
    p.add_argument("--config", help="JSON file with configuration fields")
    p.add_argument("--out", required=True, help="output directory for artifacts")
    p.add_argument("--m0", type=int, help="basis size on subdomain 0")
    p.add_argument("--mstar", type=int, help="basis size on each ball subdomain")
    p.add_argument("--epsilon", type=float, help="mean-residual threshold")
    p.add_argument("--radius", type=float, help="ball radius")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--gamma", type=float, help="shared shape parameter")
    p.add_argument("--strategy", choices=("uniform", "transferable"),
                   help="hidden-parameter construction")
    p.add_argument("--R", type=float, dest="uniform_range",
                   help="range bound for the uniform strategy")
    p.add_argument("--sweep", help="comma-separated m_star values to sweep")
    return p


_FLAG_FIELDS = {
    "m0": "m0", "mstar": "m_star", "epsilon": "epsilon", "radius": "radius",
    "seed": "seed", "gamma": "gamma", "strategy": "strategy",
    "uniform_range": "uniform_range",
}


def _load_config(args) -> tuple[str, AdaptiveConfig]:
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    problem = args.problem or data.get("benchmark") or data.get("problem")
    if not problem:
        raise ValueError("no benchmark given (--problem or config 'benchmark')")
    if problem not in BENCHMARKS:
        raise ValueError(f"unknown benchmark {problem!r}")
    for flag, field_name in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            data[field_name] = value
    if args.sweep:
        data["sweep"] = [int(tok) for tok in args.sweep.split(",") if tok.strip()]
    return problem, AdaptiveConfig.from_dict(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        problem, config = _load_config(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3
    try:
        manifest = run(problem, config, args.out)
    except SOLVER_ERRORS as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 2
    err = manifest.get("err_l2")
    n_balls = manifest.get("n_balls")
    summary = f"{problem}: status={manifest['status']}"
    if n_balls is not None:
        summary += f" subdomains={n_balls + 1}"
    if err is not None:
        summary += f" err_l2={err:.3e}"
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
