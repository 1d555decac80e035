"""Block least-squares assembly and the Gauss-Newton outer loop.

One dense system couples all subdomains: interior rows enforce the strong
form, boundary rows the Dirichlet data, and each interface point contributes
a value row and a normal-derivative row tying a ball block to the subdomain-0
block with opposite signs. Linear problems are solved in one shot; nonlinear
ones by plain (undamped) Gauss-Newton on the linearized system, starting from
zero coefficients, with the relative change of the squared residual as the
stopping measure.

The same machinery also solves the local single-ball problems used by the
scale search: there the subdomain-0 trace is frozen and enters the right-hand
side instead of contributing columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .basis import BasisSet
from .geometry import BallSubdomain, CollocationSets, PartitionState, outward_normals
from .pde import SemilinearProblem

ROW_INTERIOR = 0
ROW_BOUNDARY = 1
ROW_IFACE_VALUE = 2
ROW_IFACE_NORMAL = 3
ROW_KIND_NAMES = ("interior", "boundary", "interface-value", "interface-normal")

#: Loss weights per row kind (interior, boundary, value, normal). The method
#: uses unit weights; a non-default vector scales rows by sqrt(weight).
DEFAULT_WEIGHTS = (1.0, 1.0, 1.0, 1.0)

DEFAULT_SVD_CUTOFF = 1e-12


class AssemblyError(ValueError):
    """Collocation/basis data unfit for assembly."""


class NonConvergenceError(RuntimeError):
    """Gauss-Newton diverged; carries the iteration trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


@dataclass
class SystemBlocks:
    """Dense system F alpha = T plus row/column provenance maps."""

    matrix: np.ndarray                 # (rows, cols)
    rhs: np.ndarray                    # (rows,)
    col_slices: list[slice]            # one slice of columns per subdomain
    row_kind: np.ndarray               # int8, ROW_* constants
    row_subdomain: np.ndarray          # int32
    row_point: np.ndarray              # int32, index into the point set

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def col_subdomain(self) -> np.ndarray:
        out = np.empty(self.matrix.shape[1], dtype=np.int32)
        for k, sl in enumerate(self.col_slices):
            out[sl] = k
        return out

    @property
    def col_basis_index(self) -> np.ndarray:
        out = np.empty(self.matrix.shape[1], dtype=np.int32)
        for sl in self.col_slices:
            out[sl] = np.arange(sl.stop - sl.start)
        return out

    def split(self, alpha: np.ndarray) -> list[np.ndarray]:
        return [alpha[sl] for sl in self.col_slices]


@dataclass
class SolveReport:
    """Solution coefficients plus diagnostics of the solve."""

    alpha: np.ndarray                  # stacked coefficients
    alphas: list[np.ndarray]           # per subdomain
    loss: float                        # squared residual |F alpha - T|^2
    rank: int
    residual_by_kind: dict
    iterations: list = field(default_factory=list)  # (n, loss, re_mse)
    converged: bool = True


class _Rows:
    def __init__(self, n_cols: int):
        self.n_cols = n_cols
        self.blocks: list[np.ndarray] = []
        self.rhs: list[np.ndarray] = []
        self.kind: list[np.ndarray] = []
        self.sub: list[np.ndarray] = []
        self.point: list[np.ndarray] = []

    def add(self, rows: np.ndarray, rhs: np.ndarray, kind: int, sub: int,
            weight: float) -> None:
        if rows.shape[0] == 0:
            return
        if weight != 1.0:
            w = np.sqrt(weight)
            rows = rows * w
            rhs = rhs * w
        self.blocks.append(rows)
        self.rhs.append(rhs)
        n = rows.shape[0]
        self.kind.append(np.full(n, kind, dtype=np.int8))
        self.sub.append(np.full(n, sub, dtype=np.int32))
        self.point.append(np.arange(n, dtype=np.int32))

    def build(self, col_slices: list[slice]) -> SystemBlocks:
        if not self.blocks:
            raise AssemblyError("no rows to assemble")
        return SystemBlocks(matrix=np.vstack(self.blocks),
                            rhs=np.concatenate(self.rhs),
                            col_slices=col_slices,
                            row_kind=np.concatenate(self.kind),
                            row_subdomain=np.concatenate(self.sub),
                            row_point=np.concatenate(self.point))


def _column_layout(bases: Sequence[BasisSet]) -> tuple[list[slice], int]:
    slices = []
    start = 0
    for b in bases:
        slices.append(slice(start, start + b.size))
        start += b.size
    return slices, start


def _interior_block(problem, basis, alpha_k, points):
    lap = basis.laplacians(points)
    rows = -lap
    rhs = problem.forcing(points) + lap @ alpha_k
    if problem.nonlinearity is not None:
        vals = basis.values(points)
        u = vals @ alpha_k
        rows = rows + problem.nonlinearity_prime(u)[:, None] * vals
        rhs = rhs - problem.nonlinearity(u)
    return rows, rhs


def assemble(partition: PartitionState, bases: Sequence[BasisSet],
             colloc: CollocationSets, problem: SemilinearProblem,
             alphas: Optional[np.ndarray] = None,
             weights: Sequence[float] = DEFAULT_WEIGHTS,
             require_nonempty: bool = True) -> SystemBlocks:
    """Assemble the coupled system, linearized at ``alphas`` (zeros if None).

    At zero coefficients and for a linear operator this is exactly the direct
    transcription of the collocated problem; otherwise rows carry the
    operator's directional derivative and the right-hand side the current
    residuals (including the cancel-the-jump interface terms).
    """
    n_sub = partition.n_subdomains
    if len(bases) != n_sub or colloc.n_subdomains != n_sub:
        raise AssemblyError("bases/collocation do not align with the partition")
    col_slices, n_cols = _column_layout(bases)
    if alphas is None:
        alphas = np.zeros(n_cols)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.shape != (n_cols,):
        raise AssemblyError(f"expected {n_cols} stacked coefficients")
    parts = [alphas[sl] for sl in col_slices]

    if require_nonempty:
        for k in range(n_sub):
            if len(colloc.interior[k]) == 0:
                raise AssemblyError(f"empty interior collocation set for subdomain {k}")
            if k >= 1 and len(colloc.interface[k]) == 0:
                raise AssemblyError(f"empty interface collocation set for ball {k}")
        if sum(len(b) for b in colloc.boundary) == 0:
            raise AssemblyError("no boundary collocation points at all")

    w_int, w_bnd, w_val, w_nrm = weights
    out = _Rows(n_cols)

    for k in range(n_sub):
        pts = colloc.interior[k]
        if len(pts) == 0:
            continue
        rows_k, rhs = _interior_block(problem, bases[k], parts[k], pts)
        rows = np.zeros((len(pts), n_cols))
        rows[:, col_slices[k]] = rows_k
        out.add(rows, rhs, ROW_INTERIOR, k, w_int)

    for k in range(n_sub):
        pts = colloc.boundary[k]
        if len(pts) == 0:
            continue
        vals = bases[k].values(pts)
        rows = np.zeros((len(pts), n_cols))
        rows[:, col_slices[k]] = vals
        rhs = problem.boundary(pts) - vals @ parts[k]
        out.add(rows, rhs, ROW_BOUNDARY, k, w_bnd)

    for k in range(1, n_sub):
        pts = colloc.interface[k]
        if len(pts) == 0:
            continue
        ball = partition.ball(k)
        normals = outward_normals(ball, pts)
        vals_k = bases[k].values(pts)
        vals_0 = bases[0].values(pts)
        rows = np.zeros((len(pts), n_cols))
        rows[:, col_slices[k]] = vals_k
        rows[:, col_slices[0]] = -vals_0
        rhs = vals_0 @ parts[0] - vals_k @ parts[k]
        out.add(rows, rhs, ROW_IFACE_VALUE, k, w_val)

        nd_k = bases[k].normal_derivatives(pts, normals)
        nd_0 = bases[0].normal_derivatives(pts, normals)
        rows = np.zeros((len(pts), n_cols))
        rows[:, col_slices[k]] = nd_k
        rows[:, col_slices[0]] = -nd_0
        rhs = nd_0 @ parts[0] - nd_k @ parts[k]
        out.add(rows, rhs, ROW_IFACE_NORMAL, k, w_nrm)

    return out.build(col_slices)


def assemble_linear(partition: PartitionState, bases: Sequence[BasisSet],
                    colloc: CollocationSets, problem: SemilinearProblem,
                    weights: Sequence[float] = DEFAULT_WEIGHTS) -> SystemBlocks:
    """Direct transcription of the collocated problem; linear operators only."""
    if not problem.is_linear:
        raise AssemblyError("assemble_linear requires a linear operator")
    return assemble(partition, bases, colloc, problem, alphas=None, weights=weights)


def assemble_local(problem: SemilinearProblem, ball: BallSubdomain,
                   basis_k: BasisSet, basis_0: BasisSet, alpha_0: np.ndarray,
                   interior: np.ndarray, boundary: np.ndarray, interface: np.ndarray,
                   alpha_k: Optional[np.ndarray] = None,
                   weights: Sequence[float] = DEFAULT_WEIGHTS) -> SystemBlocks:
    """Single-ball system with the subdomain-0 expansion frozen at ``alpha_0``.

    The frozen trace and normal trace enter the interface right-hand sides;
    only the ball's coefficients are unknowns.
    """
    if len(interior) == 0:
        raise AssemblyError(f"empty interior collocation set for ball {ball.index}")
    if len(interface) == 0:
        raise AssemblyError(f"empty interface collocation set for ball {ball.index}")
    if alpha_k is None:
        alpha_k = np.zeros(basis_k.size)
    alpha_k = np.asarray(alpha_k, dtype=float)
    w_int, w_bnd, w_val, w_nrm = weights
    col_slices = [slice(0, basis_k.size)]
    out = _Rows(basis_k.size)

    rows, rhs = _interior_block(problem, basis_k, alpha_k, interior)
    out.add(rows, rhs, ROW_INTERIOR, ball.index, w_int)

    if len(boundary):
        vals = basis_k.values(boundary)
        out.add(vals, problem.boundary(boundary) - vals @ alpha_k,
                ROW_BOUNDARY, ball.index, w_bnd)

    normals = outward_normals(ball, interface)
    vals_k = basis_k.values(interface)
    u0 = basis_0.values(interface) @ alpha_0
    out.add(vals_k, u0 - vals_k @ alpha_k, ROW_IFACE_VALUE, ball.index, w_val)

    nd_k = basis_k.normal_derivatives(interface, normals)
    dn_u0 = basis_0.normal_derivatives(interface, normals) @ alpha_0
    out.add(nd_k, dn_u0 - nd_k @ alpha_k, ROW_IFACE_NORMAL, ball.index, w_nrm)

    return out.build(col_slices)


def solve_min_norm(blocks: SystemBlocks,
                   cutoff: float = DEFAULT_SVD_CUTOFF) -> SolveReport:
    """Minimum-norm least-squares solution via SVD with relative cutoff.

    Singular directions below ``cutoff`` times the largest singular value are
    discarded; the report carries the effective rank and a per-row-kind
    breakdown of the squared residual.
    """
    F, T = blocks.matrix, blocks.rhs
    if F.size == 0:
        raise AssemblyError("empty system")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(T))):
        raise AssemblyError("non-finite entries in the assembled system")
    alpha, _, rank, _ = np.linalg.lstsq(F, T, rcond=cutoff)
    res = F @ alpha - T
    by_kind = {}
    for kind, name in enumerate(ROW_KIND_NAMES):
        mask = blocks.row_kind == kind
        if np.any(mask):
            by_kind[name] = float(np.sum(res[mask] ** 2))
    return SolveReport(alpha=alpha, alphas=blocks.split(alpha),
                       loss=float(res @ res), rank=int(rank),
                       residual_by_kind=by_kind)


#: Divergence guard: abort when the loss exceeds this multiple of the initial loss.
DIVERGENCE_FACTOR = 1e6


def gauss_newton_core(assembler: Callable[[Optional[np.ndarray]], SystemBlocks],
                      is_linear: bool, n_max: int = 50, tol: float = 1e-5,
                      cutoff: float = DEFAULT_SVD_CUTOFF,
                      alpha0: Optional[np.ndarray] = None) -> SolveReport:
    """Gauss-Newton driver over an assembler callback.

    ``assembler(alphas)`` must return the system linearized at ``alphas``
    (zeros when None). Linear operators take the direct one-shot branch. Each
    step solves for increments, applies them, and stops once the relative
    change of the squared residual drops below ``tol``; exhausting ``n_max``
    returns converged=False, and a loss blow-up beyond DIVERGENCE_FACTOR x
    the initial loss raises NonConvergenceError.
    """
    if is_linear:
        report = solve_min_norm(assembler(None), cutoff)
        report.iterations = [(0, report.loss, None)]
        report.converged = True
        return report

    blocks = assembler(None if alpha0 is None else np.asarray(alpha0, dtype=float))
    alpha = np.zeros(blocks.matrix.shape[1]) if alpha0 is None \
        else np.asarray(alpha0, dtype=float).copy()
    trace = []
    prev_loss = None
    first_loss = None
    report = None
    converged = False
    for n in range(n_max):
        sol = solve_min_norm(blocks, cutoff)
        alpha = alpha + sol.alpha
        loss = sol.loss
        re_mse = None if prev_loss is None else (
            0.0 if prev_loss == 0.0 else abs(loss - prev_loss) / prev_loss)
        trace.append((n, loss, re_mse))
        report = sol
        if first_loss is None:
            first_loss = loss
        elif loss > DIVERGENCE_FACTOR * max(first_loss, np.finfo(float).tiny):
            raise NonConvergenceError(
                f"Gauss-Newton diverged at step {n}: loss {loss:.3e} vs "
                f"initial {first_loss:.3e}", trace=trace)
        if prev_loss == 0.0 or (re_mse is not None and re_mse < tol):
            converged = True
            break
        prev_loss = loss
        if n + 1 < n_max:
            blocks = assembler(alpha)
    return SolveReport(alpha=alpha, alphas=blocks.split(alpha), loss=trace[-1][1],
                       rank=report.rank, residual_by_kind=report.residual_by_kind,
                       iterations=trace, converged=converged)


def gauss_newton(partition: PartitionState, bases: Sequence[BasisSet],
                 colloc: CollocationSets, problem: SemilinearProblem,
                 n_max: int = 50, tol: float = 1e-5,
                 cutoff: float = DEFAULT_SVD_CUTOFF,
                 weights: Sequence[float] = DEFAULT_WEIGHTS,
                 alpha0: Optional[np.ndarray] = None) -> SolveReport:
    """Solve the coupled problem over all subdomains (direct when linear)."""

    def assembler(alphas):
        return assemble(partition, bases, colloc, problem, alphas=alphas,
                        weights=weights)

    return gauss_newton_core(assembler, problem.is_linear, n_max=n_max, tol=tol,
                             cutoff=cutoff, alpha0=alpha0)


def dump_matrix(array: np.ndarray, path) -> None:
    """Binary dump: 8-byte header (uint32 rows, cols, little-endian) then
    row-major little-endian float64 data."""
    arr = np.atleast_2d(np.asarray(array, dtype=float))
    header = np.array(arr.shape, dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(8), dtype="<u4")
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(int(rows), int(cols))


def dump_system(blocks: SystemBlocks, matrix_path, rhs_path) -> None:
    """Dump F and T for offline inspection (see dump_matrix for the format)."""
    dump_matrix(blocks.matrix, matrix_path)
    dump_matrix(blocks.rhs[:, None], rhs_path)
