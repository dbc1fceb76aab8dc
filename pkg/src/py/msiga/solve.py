#####################################################################################
# The MIT License (MIT)
#
# Copyright (c) 2024 The msiga developers. All rights reserved.
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in
# all copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT.  IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN
# THE SOFTWARE.
#####################################################################################
"""
Dirichlet elimination, linear solves (assembled or matrix-free), compliance,
reactions and the error metrics comparing the fast path with the oracle.
"""
import dataclasses
import inspect
import logging
import math
from typing import Optional

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .config import AssemblyConfig, DEFAULT_SOLVER_TOL
from .errors import ConvergenceError, EmptyDirichletSetError
from .fast_assembly import (AssemblyReport, SparseOperator, assemble_all,
                            assemble_load, assemble_stiffness,
                            assemble_volume, element_nz_blocks,
                            gather_vector, prepare_fast, scatter_vector)
from .model import composed_control_points
from .oracle import oracle_assemble, oracle_fields
from .utils import StageTimer

log = logging.getLogger(__name__)


class MatrixFreeOperator(scipy.sparse.linalg.LinearOperator):
    """
    K applied element by element from the lookup table and the projected
    macro coefficients; K itself is never formed.
    """
    def __init__(self, model, tables, projected, block_size=64):
        tables.check(projected.space, model.dof_map.n_tile)
        self.model = model
        self.tables = tables
        self.projected = projected
        self.block_size = max(1, int(block_size))
        self.peak_block_bytes = 0
        self._f = None
        sparsity = tables.sparsity
        n_tile, n_nz = sparsity.n_tile, sparsity.n_nz
        off = np.flatnonzero(~sparsity.diagonal)
        ones = np.ones(n_nz)
        self._gather_rows = scipy.sparse.csr_matrix(
            (ones, (sparsity.rows, np.arange(n_nz))), shape=(n_tile, n_nz))
        self._gather_cols = scipy.sparse.csr_matrix(
            (ones[off], (sparsity.cols[off], off)), shape=(n_tile, n_nz))
        self._diag_rows = np.flatnonzero(sparsity.diagonal)
        super(MatrixFreeOperator, self).__init__(shape=(model.n_dof,
                                                        model.n_dof),
                                                 dtype=np.float64)

    @property
    def f(self):
        if self._f is None:
            self._f = assemble_load(self.model, self.tables, self.projected)
        return self._f

    def _blocks(self):
        m = self.model.macro.n_elements
        for start in range(0, m, self.block_size):
            elements = np.arange(start, min(start + self.block_size, m))
            nz = element_nz_blocks(self.tables, self.projected, elements)
            self.peak_block_bytes = max(self.peak_block_bytes, nz.nbytes)
            yield elements, nz

    def _matvec(self, x):
        x = np.asarray(x, dtype=float).ravel()
        sparsity = self.tables.sparsity
        u_elem = gather_vector(self.model, x)
        out = np.zeros_like(u_elem)
        for elements, nz in self._blocks():
            ue = u_elem[elements]
            b = len(elements)
            to_row = np.einsum("tnkl,tnl->tnk", nz, ue[:, sparsity.cols])
            to_col = np.einsum("tnkl,tnk->tnl", nz, ue[:, sparsity.rows])
            out[elements] += (self._gather_rows @ to_row.transpose(1, 0, 2).reshape(
                sparsity.n_nz, -1)).reshape(-1, b, self.model.dim).transpose(1, 0, 2)
            out[elements] += (self._gather_cols @ to_col.transpose(1, 0, 2).reshape(
                sparsity.n_nz, -1)).reshape(-1, b, self.model.dim).transpose(1, 0, 2)
        return scatter_vector(self.model, out)

    def _rmatvec(self, x):
        return self._matvec(x)

    def diagonal(self):
        """diag(K) from the same element products."""
        d = self.model.dim
        diag = np.zeros((self.model.macro.n_elements, self.tables.n_tile, d))
        k = np.arange(d)
        order = self.tables.sparsity.rows[self._diag_rows]
        for elements, nz in self._blocks():
            values = nz[:, self._diag_rows][:, :, k, k]
            diag[elements[:, None], order[None, :]] = values
        return scatter_vector(self.model, diag)


def matvec_free(model, tables, projected, u, block_size=64):
    return MatrixFreeOperator(model, tables, projected, block_size).matvec(u)


@dataclasses.dataclass(eq=False)
class ReducedSystem:
    K: object
    f: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    values: np.ndarray
    n_dof: int
    diagonal: Optional[np.ndarray] = None

    @property
    def n_free(self):
        return len(self.free)

    def expand(self, u_free):
        u = np.zeros(self.n_dof)
        u[self.free] = u_free
        u[self.fixed] = self.values
        return u


def dirichlet_values(model, bcs=None):
    """Prescribed values on the tile control points of Dirichlet faces."""
    bcs = bcs or model.bcs
    dim = model.dim
    prescribed = {}
    for condition in bcs.dirichlet:
        members = model.dof_map.face_sets[condition.face]
        if len(members) == 0:
            raise EmptyDirichletSetError(
                f"empty Dirichlet set: the tile has no boundary control points "
                f"on face {condition.face + 1}")
        for t in model.macro.boundary_elements(condition.face):
            x = composed_control_points(model, t)[members]
            g = condition.evaluate(x)
            dofs = dim * model.dof_map.global_indices[t][members][:, None] + np.arange(dim)
            for dof, value in zip(dofs.ravel(), g.ravel()):
                prescribed[int(dof)] = float(value)
    fixed = np.array(sorted(prescribed), dtype=np.int64)
    values = np.array([prescribed[k] for k in fixed], dtype=float)
    return fixed, values


def apply_dirichlet(op, bcs, model):
    """
    Eliminate the Dirichlet DOFs of an assembled or matrix-free operator,
    lifting inhomogeneous data into the right-hand side.
    """
    fixed, values = dirichlet_values(model, bcs)
    n = model.n_dof
    free = np.setdiff1d(np.arange(n), fixed)
    lift = np.zeros(n)
    lift[fixed] = values
    if isinstance(op, MatrixFreeOperator):
        f = op.f[free] - (op.matvec(lift)[free] if np.any(values) else 0.0)

        def reduced(x):
            full = np.zeros(n)
            full[free] = np.ravel(x)
            return op.matvec(full)[free]

        K = scipy.sparse.linalg.LinearOperator((len(free), len(free)),
                                              matvec=reduced,
                                              rmatvec=reduced,
                                              dtype=np.float64)
        diagonal = op.diagonal()[free]
    else:
        full = op.K
        K = full[free][:, free].tocsr()
        f = op.f[free] - full[free][:, fixed] @ values
        diagonal = K.diagonal()
    log.debug(f"Dirichlet elimination: {len(fixed)} fixed, {len(free)} free DOFs")
    return ReducedSystem(K, f, free, fixed, values, n, diagonal)


def _cg(A, b, tol, maxiter, M, callback):
    params = inspect.signature(scipy.sparse.linalg.cg).parameters
    kwargs = {"rtol": tol} if "rtol" in params else {"tol": tol}
    return scipy.sparse.linalg.cg(A, b, atol=0.0, maxiter=maxiter, M=M,
                                  callback=callback, **kwargs)


def _relative_residual(K, u, f):
    norm = np.linalg.norm(f)
    r = np.linalg.norm(K @ u - f)
    return r / norm if norm > 0 else r


def solve_linear(system, method="direct", tol=DEFAULT_SOLVER_TOL):
    """
    Solve the reduced system; returns the full DOF vector.

    Direct solves need an assembled matrix; "cg" uses Jacobi-preconditioned
    conjugate gradients capped at 50 sqrt(n_dof) iterations.
    """
    n = system.n_free
    if n == 0 or not np.any(system.f):
        return system.expand(np.zeros(n))
    if method == "direct":
        if not scipy.sparse.issparse(system.K):
            raise ValueError("direct solves need an assembled matrix, use cg")
        K = system.K.tocsc()
        u = scipy.sparse.linalg.spsolve(K, system.f)
        if _relative_residual(K, u, system.f) > tol:
            u = u + scipy.sparse.linalg.spsolve(K, system.f - K @ u)
        residual = _relative_residual(K, u, system.f)
        if residual > tol:
            log.warning(f"direct solve residual {residual:.3e} above {tol:g}")
    elif method == "cg":
        diagonal = system.diagonal
        if diagonal is None:
            diagonal = system.K.diagonal()
        inv = np.where(diagonal > 0, 1.0 / np.where(diagonal > 0, diagonal, 1.0), 1.0)
        M = scipy.sparse.linalg.LinearOperator((n, n), matvec=lambda x: inv * np.ravel(x),
                                               dtype=np.float64)
        norm_f = np.linalg.norm(system.f)
        history = []

        def record(xk):
            history.append(np.linalg.norm(system.f - system.K @ xk) / norm_f)

        maxiter = int(math.ceil(50 * math.sqrt(system.n_dof)))
        u, info = _cg(system.K, system.f, 0.1 * tol, maxiter, M, record)
        residual = _relative_residual(system.K, u, system.f)
        if info != 0 or residual > tol:
            raise ConvergenceError(len(history), history or [residual], tol)
        log.info(f"cg converged in {len(history)} iterations "
                 f"(relative residual {residual:.3e})")
    else:
        raise ValueError(f"unknown solver {method!r}")
    return system.expand(u)


def compliance(f, u):
    return 0.5 * float(np.dot(f, u))


def reactions(op, u, system):
    """Reaction forces K u - f on the fixed DOFs."""
    return (op.matvec(u) - op.f)[system.fixed]


def ritz_values(operator, k=10, iterations=30, seed=0):
    """Largest Ritz values of a symmetric operator from Lanczos with full reorthogonalization."""
    n = operator.shape[0]
    iterations = min(iterations, n)
    rng = np.random.default_rng(seed)
    basis = np.zeros((iterations, n))
    alpha = np.zeros(iterations)
    beta = np.zeros(max(iterations - 1, 0))
    v = rng.standard_normal(n)
    basis[0] = v / np.linalg.norm(v)
    steps = iterations
    for j in range(iterations):
        w = operator @ basis[j]
        alpha[j] = basis[j] @ w
        w = w - basis[:j + 1].T @ (basis[:j + 1] @ w)
        w = w - basis[:j + 1].T @ (basis[:j + 1] @ w)
        if j + 1 == iterations:
            break
        beta[j] = np.linalg.norm(w)
        if beta[j] == 0.0:
            steps = j + 1
            break
        basis[j + 1] = w / beta[j]
    values = scipy.linalg.eigh_tridiagonal(alpha[:steps], beta[:steps - 1],
                                           eigvals_only=True)
    return np.sort(values)[::-1][:k]


@dataclasses.dataclass
class Metrics:
    e_proj: float
    e_disp: float
    e_stress: float
    e_mat: float
    e_vec: float
    t_cost: float
    compliance_fast: float
    compliance_oracle: float

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(eq=False)
class PathResult:
    """Operator, solution and sampled fields of one assembly path."""
    op: object
    report: object
    u: np.ndarray
    fields: object
    compliance: float
    state: object = None


def _ratio(num, den):
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / den)


def assembled_matrix(model, op):
    if isinstance(op, MatrixFreeOperator):
        upper = assemble_stiffness(model, op.tables, op.projected, op.block_size)
        return SparseOperator(upper, op.f).K
    return op.K


def compute_metrics(model, fast, oracle):
    """Relative errors of the fast path against the oracle, and the nz-time speed-up."""
    ff, fo = fast.fields, oracle.fields
    w = fo.weights
    du = fo.u - ff.u
    dg = fo.grad_u - ff.grad_u
    h1 = np.sum(w * (np.sum(du**2, axis=1) + np.sum(dg**2, axis=(1, 2))))
    h1_ref = np.sum(w * (np.sum(fo.u**2, axis=1) + np.sum(fo.grad_u**2,
                                                           axis=(1, 2))))
    ds = fo.stress - ff.stress
    l2 = np.sum(w * np.sum(ds**2, axis=(1, 2)))
    l2_ref = np.sum(w * np.sum(fo.stress**2, axis=(1, 2)))
    e_mat = _ratio(
        scipy.sparse.linalg.norm(oracle.op.K - assembled_matrix(model, fast.op)),
        scipy.sparse.linalg.norm(oracle.op.K))
    e_vec = _ratio(np.linalg.norm(oracle.op.f - fast.op.f),
                   np.linalg.norm(oracle.op.f))
    e_proj = fast.report.e_proj or 0.0
    return Metrics(e_proj, math.sqrt(_ratio(h1, h1_ref)),
                   math.sqrt(_ratio(l2, l2_ref)), e_mat, e_vec,
                   _ratio(oracle.report.nz_time, fast.report.nz_time),
                   fast.compliance, oracle.compliance)


def solve_model(model, cfg=None, method="fast"):
    """
    Assemble with the fast path or the oracle, impose Dirichlet data, solve
    and sample the fields at the oracle quadrature points.
    """
    cfg = (cfg or AssemblyConfig.from_env()).resolve(model)
    state = None
    if method == "fast":
        if cfg.matrix_free:
            state = prepare_fast(model, cfg)
            op = MatrixFreeOperator(model, state.tables, state.projected,
                                    cfg.block_size)
            with state.timer.stage("product"):
                op.matvec(np.ones(op.shape[0]))
            volume, _ = assemble_volume(model, state.tables, state.projected)
            times = {
                k: state.timer[k]
                for k in ("projection", "tables", "product")
            }
            report = AssemblyReport("fast-matrix-free", op.shape[0], 0,
                                    tuple(state.space.degrees),
                                    state.projected.e_proj, times,
                                    times["product"],
                                    state.cache_hit, volume)
        else:
            op, report, state = assemble_all(model, cfg, return_state=True)
    elif method in ("oracle", "gauss"):
        op, report = oracle_assemble(model, cfg.oracle_order, cfg.threads,
                                     cfg.block_size)
    else:
        raise ValueError(f"unknown assembly method {method!r}")
    timer = StageTimer()
    with timer.stage("solve"):
        system = apply_dirichlet(op, model.bcs, model)
        solver = "cg" if cfg.matrix_free else cfg.solver
        u = solve_linear(system, solver, cfg.solver_tol)
    report.times["solve"] = timer["solve"]
    fields = oracle_fields(model, u, cfg.oracle_order)
    return PathResult(op, report, u, fields, compliance(op.f, u), state)


def export_solution(u, path):
    frame = pd.DataFrame({"dof": np.arange(len(u)), "value": u})
    frame.to_csv(path, index=False, float_format="%.17g")


def export_fields(samples, path):
    samples.to_frame().to_csv(path, index=False, float_format="%.17g")
