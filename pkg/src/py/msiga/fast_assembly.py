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
Multiscale operator formation: projected macro coefficients times lookup
tables in one blocked matrix product, then a symmetric sparse scatter.
"""
import dataclasses
import logging
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.io
import scipy.sparse

from .config import AssemblyConfig
from .errors import DimensionMismatchError
from .lookup import load_or_build_tables
from .projection import build_space, project_model, select_degree
from .utils import StageTimer

log = logging.getLogger(__name__)


def _full_from_upper(upper):
    coo = upper.tocoo()
    off = coo.row != coo.col
    rows = np.concatenate([coo.row, coo.col[off]])
    cols = np.concatenate([coo.col, coo.row[off]])
    data = np.concatenate([coo.data, coo.data[off]])
    return scipy.sparse.coo_matrix((data, (rows, cols)),
                                   shape=upper.shape).tocsr()


@dataclasses.dataclass(eq=False)
class SparseOperator:
    upper: scipy.sparse.csr_matrix
    f: np.ndarray
    _full: Optional[scipy.sparse.csr_matrix] = dataclasses.field(default=None,
                                                                repr=False)

    @property
    def n_dof(self):
        return self.upper.shape[0]

    @property
    def K(self):
        """Symmetric expansion of the stored upper triangle."""
        if self._full is None:
            self._full = _full_from_upper(self.upper)
            self._full.sort_indices()
        return self._full

    @property
    def n_nz_global(self):
        return int(self.K.nnz)

    def matvec(self, u):
        return self.K @ u


class ScatterPlan(object):
    """Maps element nz blocks (n_nz, d, d) to entries of the global upper triangle."""
    def __init__(self, model, sparsity):
        self.dim = model.dim
        self.n_dof = model.n_dof
        self.global_indices = model.dof_map.global_indices
        self.rows = sparsity.rows
        self.cols = sparsity.cols
        k = np.arange(self.dim)
        drop = sparsity.diagonal[:, None, None] & (k[:, None] > k[None, :])[None]
        self.keep = np.flatnonzero(~drop.ravel())
        self.keys = np.unique(
            np.concatenate([
                self.element_keys(t)
                for t in range(self.global_indices.shape[0])
            ]))

    def element_keys(self, t):
        r, c = self._entries(self.global_indices[t:t + 1])
        return r * self.n_dof + c

    def _entries(self, g):
        d = self.dim
        k = np.arange(d)
        ga = g[:, self.rows]
        gb = g[:, self.cols]
        r = d * ga[:, :, None, None] + k[None, None, :, None]
        c = d * gb[:, :, None, None] + k[None, None, None, :]
        r, c = np.broadcast_arrays(r, c)
        r = r.reshape(len(g), -1)[:, self.keep]
        c = c.reshape(len(g), -1)[:, self.keep]
        return np.minimum(r, c).ravel(), np.maximum(r, c).ravel()

    def accumulate(self, data, elements, blocks):
        """Add nz blocks (len(elements), n_nz, d, d) into data, element-major."""
        r, c = self._entries(self.global_indices[elements])
        pos = np.searchsorted(self.keys, r * self.n_dof + c)
        values = blocks.reshape(len(blocks), -1)[:, self.keep].ravel()
        data += np.bincount(pos, weights=values, minlength=len(self.keys))

    def matrix(self, data):
        rows = self.keys // self.n_dof
        cols = self.keys % self.n_dof
        return scipy.sparse.coo_matrix((data, (rows, cols)),
                                       shape=(self.n_dof, self.n_dof)).tocsr()


def scatter_vector(model, element_values):
    """Sum per-element vectors (m_M, n_T, d) into a global DOF vector."""
    d = model.dim
    dofs = d * model.dof_map.global_indices[:, :, None] + np.arange(d)
    return np.bincount(dofs.ravel(), weights=element_values.ravel(),
                       minlength=model.n_dof)


def gather_vector(model, u):
    d = model.dim
    dofs = d * model.dof_map.global_indices[:, :, None] + np.arange(d)
    return np.asarray(u)[dofs]


def _check_inputs(model, tables, projected):
    tables.check(projected.space, model.dof_map.n_tile)
    if projected.n_elements != model.macro.n_elements or tables.dim != model.dim:
        raise DimensionMismatchError(
            "projected fields, tables and model disagree on element count or dimension")


def element_nz_blocks(tables, projected, elements):
    """nz blocks (len(elements), n_nz, d, d) of the matricized product."""
    d = tables.dim
    coeffs = projected.full_a(elements)
    b = coeffs.shape[0]
    rhs = coeffs.transpose(1, 2, 3, 0, 4, 5).reshape(tables.n_pi * d * d,
                                                     b * d * d)
    nz = tables.mat_k @ rhs
    return nz.reshape(tables.n_nz, b, d, d).transpose(1, 0, 2, 3)


def assemble_volume(model, tables, projected, route="direct"):
    """
    Total and per-element volumes from the projected |det J| coefficients.

    route "folded" uses the inverse-folded table against the projection
    right-hand sides.
    """
    if route == "folded":
        rhs = projected.coeffs_det @ projected.space.mass
        per_element = rhs @ tables.t_pi
    else:
        per_element = projected.coeffs_det @ tables.t_h
    return float(per_element.sum()), per_element


def assemble_stiffness(model, tables, projected, block_size=64, timer=None,
                       plan=None):
    """Global stiffness (upper triangle) from the blocked matricized product."""
    _check_inputs(model, tables, projected)
    timer = timer or StageTimer()
    if plan is None:
        with timer.stage("scatter"):
            plan = ScatterPlan(model, tables.sparsity)
    data = np.zeros(len(plan.keys))
    m = model.macro.n_elements
    for start in range(0, m, block_size):
        elements = np.arange(start, min(start + block_size, m))
        with timer.stage("product"):
            blocks = element_nz_blocks(tables, projected, elements)
        with timer.stage("scatter"):
            plan.accumulate(data, elements, blocks)
    with timer.stage("scatter"):
        upper = plan.matrix(data)
    return upper


def assemble_load(model, tables, projected):
    """Global load vector from the body-force and traction table slices."""
    _check_inputs(model, tables, projected)
    space = projected.space
    load = tables.load
    values = np.einsum("ac,tck->tak", load[:, :, 0], projected.coeffs_b)
    for face, coeffs in projected.coeffs_t.items():
        elements = model.macro.boundary_elements(face)
        cols = space.face_sets[face]
        slice_f = load[:, cols, 1 + face]
        values[elements] += np.einsum("ac,tck->tak", slice_f, coeffs[elements])
    return scatter_vector(model, values)


@dataclasses.dataclass
class AssemblyReport:
    method: str
    n_dof: int
    n_nz_global: int
    p_proj: Optional[Tuple[int, ...]]
    e_proj: Optional[float]
    times: Dict[str, float]
    nz_time: float
    cache_hit: bool = False
    volume: Optional[float] = None

    def to_dict(self):
        out = dataclasses.asdict(self)
        out["p_proj"] = None if self.p_proj is None else list(self.p_proj)
        return out


@dataclasses.dataclass(eq=False)
class FastState:
    """Everything the fast path computed on the way to the operator."""
    config: AssemblyConfig
    space: object
    projected: object
    tables: object
    cache_hit: bool
    timer: StageTimer


def prepare_fast(model, cfg=None, timer=None):
    """Projection degree choice, macro-field projection and table lookup."""
    cfg = (cfg or AssemblyConfig.from_env()).resolve(model)
    timer = timer or StageTimer()
    with timer.stage("projection"):
        degrees = cfg.p_proj
        if degrees is None:
            degrees = select_degree(model, cfg.tol, threads=cfg.threads)
        space = build_space(degrees)
        projected = project_model(model, space, cfg.threads)
    with timer.stage("tables"):
        tables, hit = load_or_build_tables(model, space, cfg)
    return FastState(cfg, space, projected, tables, hit, timer)


def assemble_all(model, cfg=None, return_state=False):
    """
    Run projection, table lookup, matricized product and scatter.

    :return: (SparseOperator, AssemblyReport[, FastState])
    """
    state = prepare_fast(model, cfg)
    timer = state.timer
    upper = assemble_stiffness(model, state.tables, state.projected,
                               state.config.block_size, timer)
    with timer.stage("scatter"):
        f = assemble_load(model, state.tables, state.projected)
    op = SparseOperator(upper, f)
    volume, _ = assemble_volume(model, state.tables, state.projected)
    times = {
        k: timer[k]
        for k in ("projection", "tables", "product", "scatter")
    }
    report = AssemblyReport("fast", op.n_dof, op.n_nz_global,
                            tuple(state.space.degrees), state.projected.e_proj,
                            times, timer["product"], state.cache_hit, volume)
    log.info(f"fast assembly: n_dof={op.n_dof}, nnz={op.n_nz_global}, "
             f"times={times}")
    if return_state:
        return op, report, state
    return op, report


def export_matrix_market(op, path, comment=""):
    lower = op.upper.T.tocoo()
    scipy.io.mmwrite(path, lower, comment=comment, field="real",
                     precision=17, symmetry="symmetric")


def export_vector(vector, path):
    np.savetxt(path, np.asarray(vector, dtype=float), fmt="%.17g")
