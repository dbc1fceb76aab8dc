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
Reference element loop with full Gauss quadrature of the exact macro
fields. Shares the DOF map, sparsity and scatter of the fast path.
"""
import dataclasses
import logging

import numpy as np
import pandas as pd

from .curvilinear import (contravariant_stress, covariant_strain,
                          face_measure, macro_field_from_state,
                          physical_strain, physical_stress,
                          state_from_jacobian)
from .fast_assembly import (AssemblyReport, ScatterPlan, SparseOperator,
                            gather_vector, scatter_vector)
from .lookup import build_sparsity
from .model import tile_face_quadrature, tile_quadrature
from .quadrature import gauss_rule, sample_grid
from .splines import patch_basis
from .utils import StageTimer, parallel_map

__all__ = [
    "gauss_rule", "oracle_volume", "oracle_assemble", "oracle_fields",
    "FieldSamples", "default_order"
]

log = logging.getLogger(__name__)


def default_order(model, n=None):
    """Gauss points per direction and tile span: explicit, model file, or p_T + 2."""
    if n is not None:
        return int(n)
    if model.quadrature.oracle_order is not None:
        return int(model.quadrature.oracle_order)
    return model.tile.max_degree + 2


def _macro_state(element, images):
    _, jac, _ = element.evaluate(images, 1)
    return state_from_jacobian(jac, element.index, images)


def oracle_volume(model, n=None):
    """Volume by two changes of variables, tile then macro, at n points per direction."""
    order = default_order(model, n)
    quad = tile_quadrature(model.tile, model.dof_map, order)
    images = np.vstack([q.images.reshape(-1, model.dim) for q in quad])
    weights = np.concatenate([q.weights.ravel() for q in quad])
    total = 0.0
    for element in model.macro.elements:
        total += float(weights @ _macro_state(element, images).det_j)
    return total


def _element_blocks(model, quad, sparsity, t):
    """Exact nz block (n_nz, d, d) of element t."""
    dim = model.dim
    element = model.macro.elements[t]
    block = np.zeros((sparsity.n_nz, dim, dim))
    for qp in quad:
        state = _macro_state(element, qp.images.reshape(-1, dim))
        a = macro_field_from_state(state, model.material).reshape(
            qp.n_spans, -1, dim, dim, dim, dim)
        for s in range(qp.n_spans):
            grads = qp.grads[s] * qp.weights[s][:, None, None]
            tmp = np.einsum("xai,xijkl->xajkl", grads, a[s])
            local = np.einsum("xajkl,xbj->abkl", tmp, qp.grads[s])
            idx = qp.indices[s]
            ia, ib = np.nonzero(idx[:, None] <= idx[None, :])
            rows = sparsity.locate(idx[ia], idx[ib])
            block[rows] += local[ia, ib]
    return block


def _element_load(model, quad, faces, t):
    dim = model.dim
    element = model.macro.elements[t]
    body = model.bcs.body(dim)
    out = np.zeros((model.dof_map.n_tile, dim))
    if np.any(body):
        for qp in quad:
            state = _macro_state(element, qp.images.reshape(-1, dim))
            b_bar = body[None, :] * state.det_j[:, None]
            b_bar = b_bar.reshape(qp.n_spans, -1, dim)
            for s in range(qp.n_spans):
                weighted = qp.values[s] * qp.weights[s][:, None]
                out[qp.indices[s]] += weighted.T @ b_bar[s]
    for face in model.bcs.traction_faces():
        if t not in model.macro.boundary_elements(face):
            continue
        traction = model.bcs.traction(face, dim)
        for fq in faces:
            if fq.cube_face != face:
                continue
            s_count, n_pts, _ = fq.values.shape
            state = _macro_state(element, fq.images.reshape(-1, dim))
            t_bar = traction[None, :] * face_measure(state, face)[:, None]
            t_bar = t_bar.reshape(s_count, n_pts, dim)
            for s in range(s_count):
                weighted = fq.values[s] * fq.weights[s][:, None]
                out[fq.indices[s]] += weighted.T @ t_bar[s]
    return out


def oracle_assemble(model, n=None, threads=1, block_size=64):
    """
    Stiffness and load of the composed model by the standard element loop.

    :return: (SparseOperator, AssemblyReport); the report's nz_time covers
        the element-matrix computations only.
    """
    timer = StageTimer()
    order = default_order(model, n)
    with timer.stage("tables"):
        quad = tile_quadrature(model.tile, model.dof_map, order)
        faces = tile_face_quadrature(model.tile, model.dof_map, order)
        sparsity = build_sparsity(model.tile, model.dof_map)
    with timer.stage("scatter"):
        plan = ScatterPlan(model, sparsity)
    data = np.zeros(len(plan.keys))
    m = model.macro.n_elements
    loads = np.zeros((m, model.dof_map.n_tile, model.dim))
    for start in range(0, m, block_size):
        elements = np.arange(start, min(start + block_size, m))
        with timer.stage("product"):
            blocks = np.stack(
                parallel_map(
                    lambda t: _element_blocks(model, quad, sparsity, t),
                    elements, threads))
        with timer.stage("scatter"):
            plan.accumulate(data, elements, blocks)
        with timer.stage("load"):
            for t in elements:
                loads[t] = _element_load(model, quad, faces, t)
    with timer.stage("scatter"):
        op = SparseOperator(plan.matrix(data), scatter_vector(model, loads))
    times = {
        k: timer[k]
        for k in ("projection", "tables", "product", "scatter")
    }
    report = AssemblyReport("oracle", op.n_dof, op.n_nz_global, None, None,
                            times, timer["product"], False,
                            oracle_volume(model, order))
    log.info(f"oracle assembly: n={order}, n_dof={op.n_dof}, "
             f"nz time {timer['product']:.3f}s")
    return op, report


@dataclasses.dataclass(frozen=True, eq=False)
class FieldSamples:
    """Physical fields at sample points of every element."""
    x: np.ndarray
    u: np.ndarray
    grad_u: np.ndarray
    strain: np.ndarray
    stress: np.ndarray
    von_mises: np.ndarray
    weights: np.ndarray
    element: np.ndarray

    @property
    def n_points(self):
        return len(self.x)

    def to_frame(self):
        dim = self.x.shape[1]
        names = "xyz"[:dim]
        columns = {names[k]: self.x[:, k] for k in range(dim)}
        columns.update({f"u{names[k]}": self.u[:, k] for k in range(dim)})
        columns["von_mises"] = self.von_mises
        return pd.DataFrame(columns)


def _grid_samples(tile, dof_map, n):
    """Per-patch sample data on a uniform grid of n points per direction."""
    out = []
    for i, patch in enumerate(tile.patches):
        pts = sample_grid(n, patch.dim_param)
        idx, values, grads, _ = patch_basis(patch, pts, 1)
        cps = patch.control_points[idx]
        images = np.einsum("mq,mqd->md", values, cps)
        jac = np.einsum("mqi,mqd->mdi", grads, cps)
        grads_y = np.einsum("mqi,mij->mqj", grads, np.linalg.inv(jac))
        out.append((images, dof_map.tile_local[i][idx], values, grads_y,
                    None))
    return out


def _quadrature_samples(tile, dof_map, order):
    out = []
    for qp in tile_quadrature(tile, dof_map, order):
        s, n_pts = qp.weights.shape
        dim = qp.images.shape[-1]
        indices = np.repeat(qp.indices, n_pts, axis=0)
        out.append((qp.images.reshape(-1, dim), indices,
                    qp.values.reshape(s * n_pts, -1),
                    qp.grads.reshape(s * n_pts, -1, dim), qp.weights.ravel()))
    return out


def _von_mises(stress, strain, lam):
    dim = stress.shape[-1]
    full = np.zeros((len(stress), 3, 3))
    full[:, :dim, :dim] = stress
    if dim == 2:
        full[:, 2, 2] = lam * np.trace(strain, axis1=1, axis2=2)
    dev = full - np.trace(full, axis1=1, axis2=2)[:, None, None] * np.eye(3) / 3
    return np.sqrt(1.5 * np.einsum("mij,mij->m", dev, dev))


def oracle_fields(model, u, n=None, mode="quadrature"):
    """
    Displacement, strain and stress samples of a solution vector.

    :param mode: "quadrature" samples at the oracle Gauss points with
        physical weights, "grid" on a uniform per-patch grid of n points
    """
    dim = model.dim
    if mode == "quadrature":
        samples = _quadrature_samples(model.tile, model.dof_map,
                                      default_order(model, n))
    elif mode == "grid":
        samples = _grid_samples(model.tile, model.dof_map, n or 5)
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    u_elem = gather_vector(model, u)
    parts = {k: [] for k in ("x", "u", "grad", "strain", "stress", "w", "t")}
    for element in model.macro.elements:
        ue = u_elem[element.index]
        for images, indices, values, grads_y, weights in samples:
            state = _macro_state(element, images)
            x, _, _ = element.evaluate(images, 0)
            local = ue[indices]
            du = np.einsum("mqi,mqk->mik", grads_y, local)
            strain = physical_strain(state, covariant_strain(state, du))
            stress = physical_stress(
                state, contravariant_stress(state, model.material, du))
            parts["x"].append(x)
            parts["u"].append(np.einsum("mq,mqk->mk", values, local))
            parts["grad"].append(
                np.einsum("mik,mil->mkl", du, state.g_contra))
            parts["strain"].append(strain)
            parts["stress"].append(stress)
            parts["w"].append(
                np.full(len(x), np.nan) if weights is None else weights *
                state.det_j)
            parts["t"].append(np.full(len(x), element.index))
    stack = {k: np.concatenate(v) for k, v in parts.items()}
    lam, _ = model.material.lame
    return FieldSamples(stack["x"], stack["u"], stack["grad"], stack["strain"],
                        stack["stress"],
                        _von_mises(stack["stress"], stack["strain"], lam),
                        stack["w"], stack["t"])
