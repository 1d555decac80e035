"""Benchmark harness: test grids, the relative l2 error, and run artifacts.

A run executes the adaptive solver on a named benchmark, evaluates the
piecewise expansion on a uniform test grid (each point evaluated with the
basis of the subdomain that owns it), and writes a manifest plus CSV/JSON
artifacts sufficient to reproduce the run bit-identically and to re-check
every reported number offline.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .adaptive import (AdaptiveConfig, MaxRefinementsError, ScaleSearchError,
                       SolveState, adaptive_solve)
from .lsq import NonConvergenceError
from .pde import SemilinearProblem, benchmark

#: Solver-side failures a run records in its manifest before re-raising.
SOLVER_ERRORS = (NonConvergenceError, MaxRefinementsError, ScaleSearchError,
                 geo.GeometryError)

_EVAL_CHUNK = 16384


class UndefinedMetricError(ValueError):
    """The error metric's denominator vanishes."""


def err_l2(predicted: np.ndarray, exact: np.ndarray) -> float:
    """Relative discrete l2 error sqrt(sum |pred - exact|^2 / sum |exact|^2)."""
    predicted = np.asarray(predicted, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if predicted.shape != exact.shape or predicted.ndim != 1 or len(exact) == 0:
        raise ValueError("predicted and exact must be equal-length nonempty vectors")
    denom = np.sqrt(np.sum(exact * exact))
    if denom == 0.0:
        raise UndefinedMetricError("exact field is identically zero")
    return float(np.sqrt(np.sum((predicted - exact) ** 2)) / denom)


@dataclass
class TestGrid:
    """Test points with exact/predicted values and absolute errors."""

    points: np.ndarray
    exact: np.ndarray
    predicted: np.ndarray
    subdomain: np.ndarray

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.predicted - self.exact)

    @property
    def n_points(self) -> int:
        return len(self.points)

    def err_l2(self) -> float:
        return err_l2(self.predicted, self.exact)


def predict(state: SolveState, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the piecewise expansion; returns (values, subdomain labels).

    Points on a sphere belong to the ball; a point outside every subdomain is
    a geometry bug and raises.
    """
    labels = state.partition.classify(points)
    if np.any(labels < 0):
        raise RuntimeError("test point assigned to no subdomain")
    values = np.empty(len(points))
    for k in range(state.partition.n_subdomains):
        mask = labels == k
        if not np.any(mask):
            continue
        pts = points[mask]
        out = np.empty(len(pts))
        for start in range(0, len(pts), _EVAL_CHUNK):
            chunk = pts[start:start + _EVAL_CHUNK]
            out[start:start + len(chunk)] = \
                state.bases[k].values(chunk) @ state.alphas[k]
        values[mask] = out
    return values, labels


def build_test_points(problem: SemilinearProblem, resolution: int) -> np.ndarray:
    """Endpoint-inclusive uniform lattice masked to the closed domain."""
    return geo.generate_interior_grid(problem.region, resolution=resolution)


def evaluate_on_grid(state: SolveState, problem: SemilinearProblem,
                     resolution: int) -> TestGrid:
    if problem.exact is None:
        raise ValueError("benchmark has no exact solution to compare against")
    points = build_test_points(problem, resolution)
    predicted, labels = predict(state, points)
    return TestGrid(points=points, exact=problem.exact(points),
                    predicted=predicted, subdomain=labels)


# -- artifacts ---------------------------------------------------------------

def _write_solution_csv(path, grid: TestGrid) -> None:
    d = grid.points.shape[1]
    header = ",".join(["x", "y", "z"][:d] + ["predicted", "exact", "abs_err"])
    with open(path, "w") as fh:
        fh.write(header + "\n")
        err = grid.abs_err
        for i in range(grid.n_points):
            cols = [f"{v:.17g}" for v in grid.points[i]]
            cols += [f"{grid.predicted[i]:.17g}", f"{grid.exact[i]:.17g}",
                     f"{err[i]:.17g}"]
            fh.write(",".join(cols) + "\n")


def _write_trace_jsonl(path, trace) -> None:
    with open(path, "w") as fh:
        for record in trace:
            fh.write(json.dumps(record.to_dict()) + "\n")


def _write_subdomains_json(path, state: SolveState) -> None:
    balls = []
    for ball in state.partition.balls:
        balls.append({
            "index": ball.index,
            "center": ball.center.tolist(),
            "radius": ball.radius,
            "scale": state.bases[ball.index].scale,
        })
    with open(path, "w") as fh:
        json.dump({"n_balls": len(balls), "balls": balls}, fh, indent=2)


def run(name: str, config: AdaptiveConfig, outdir) -> dict:
    """Execute a benchmark run (or an m_star sweep) and write its artifacts.

    Writes manifest.json, trace.jsonl, solution.csv, subdomains.json in
    ``outdir``; sweep mode additionally writes errors.csv with one
    (m_star, err_l2) row per sweep point, each point running in its own
    subdirectory. Solver failures are recorded in the manifest with
    status="failed" and the exception re-raised by the CLI layer only.
    """
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    problem = benchmark(name)
    cfg = config.resolved(problem.dim)

    if cfg.sweep:
        rows = []
        sub_manifests = []
        failures = []
        for m in cfg.sweep:
            sub_cfg = AdaptiveConfig.from_dict({**cfg.to_dict(), "m_star": m,
                                                "sweep": None})
            sub_dir = outdir / f"mstar{m}"
            try:
                manifest = run(name, sub_cfg, sub_dir)
                rows.append((m, manifest.get("err_l2")))
            except SOLVER_ERRORS as exc:
                failures.append(f"m_star={m}: {type(exc).__name__}: {exc}")
                rows.append((m, None))
            sub_manifests.append(str(sub_dir / "manifest.json"))
        with open(outdir / "errors.csv", "w") as fh:
            fh.write("m_star,err_l2\n")
            for m, err in rows:
                fh.write(f"{m},{'' if err is None else format(err, '.17g')}\n")
        manifest = {
            "benchmark": name,
            "config": cfg.to_dict(),
            "status": "ok" if not failures else "failed",
            "failures": failures,
            "sweep_manifests": sub_manifests,
            "artifacts": {"errors": str(outdir / "errors.csv")},
        }
        with open(outdir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        if failures:
            raise NonConvergenceError(
                "sweep had failing points: " + "; ".join(failures))
        return manifest

    t_start = time.perf_counter()
    timings = {}
    manifest = {"benchmark": name, "config": cfg.to_dict(), "status": "ok"}

    def diagnostic(state: SolveState) -> float:
        g = evaluate_on_grid(state, problem, cfg.test_resolution)
        if cfg.dump_fields_per_refinement:
            _write_solution_csv(outdir / f"solution_k{state.partition.n_balls}.csv", g)
        return g.err_l2()

    try:
        state, trace = adaptive_solve(
            problem, cfg, diagnostic=diagnostic if problem.exact else None)
        timings["solve_s"] = time.perf_counter() - t_start
    except SOLVER_ERRORS as exc:
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["trace"] = [r.to_dict() for r in getattr(exc, "trace", []) or []]
        with open(outdir / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        raise

    t_eval = time.perf_counter()
    grid = evaluate_on_grid(state, problem, cfg.test_resolution)
    timings["evaluate_s"] = time.perf_counter() - t_eval

    _write_solution_csv(outdir / "solution.csv", grid)
    _write_trace_jsonl(outdir / "trace.jsonl", trace)
    _write_subdomains_json(outdir / "subdomains.json", state)
    timings["total_s"] = time.perf_counter() - t_start

    manifest.update({
        "err_l2": grid.err_l2(),
        "n_balls": state.partition.n_balls,
        "final_loss": state.report.loss,
        "trace": [r.to_dict() for r in trace],
        "timings": timings,
        "artifacts": {
            "solution": str(outdir / "solution.csv"),
            "trace": str(outdir / "trace.jsonl"),
            "subdomains": str(outdir / "subdomains.json"),
        },
    })
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    return manifest


def run_from_manifest(manifest_path, outdir) -> dict:
    """Re-execute a run from its manifest; reproduces artifacts byte-for-byte."""
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    config = AdaptiveConfig.from_dict(manifest["config"])
    return run(manifest["benchmark"], config, outdir)
