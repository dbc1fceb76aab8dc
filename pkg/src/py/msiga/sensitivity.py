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
Volume and compliance gradients with respect to the macro control points,
through adjoint fields living in the projection space.
"""
import dataclasses
import logging
from typing import Optional

import numpy as np
import pandas as pd
import scipy.sparse.linalg

from .config import AssemblyConfig
from .curvilinear import unpack_macro_field
from .fast_assembly import (SparseOperator, assemble_load, assemble_stiffness,
                            assemble_volume, gather_vector)
from .projection import (_volume_rule, build_space, project_macro_element,
                         project_model, projection_orders)
from .solve import apply_dirichlet, compliance, dirichlet_values, solve_linear
from .splines import bernstein_tensor
from .utils import parallel_map, progress

log = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclasses.dataclass(frozen=True, eq=False)
class AdjointField:
    """
    Adjoint coefficients in the projection space.

    volume: coeffs (n_pi,) shared by all elements.
    compliance: coeffs (m_M, n_pi, d, d, d, d) and the raw integrals W.
    """
    kind: str
    coeffs: np.ndarray
    raw: Optional[np.ndarray] = None


def design_scale(model):
    """Diagonal of the bounding box of the macro control points."""
    cps = model.macro.patch.control_points
    return float(np.linalg.norm(cps.max(axis=0) - cps.min(axis=0)))


def volume_adjoint(tables):
    return AdjointField("volume", tables.t_pi)


def _patch_basis_on_element(model, element, pts):
    """Patch basis restricted to an element: values (m, n_loc), gradients (m, n_loc, d)."""
    values, grads, _ = bernstein_tensor(element.degrees, pts, 1)
    n = values @ element.extraction
    dn = np.einsum("mbi,bj->mji", grads, element.extraction)
    if not model.macro.is_rational:
        return n, dn
    w = model.macro.patch.weights[element.support]
    nw = n * w
    total = nw.sum(axis=1)
    dtotal = np.einsum("mji,j->mi", dn, w)
    r = nw / total[:, None]
    dr = (dn * w[None, :, None] - r[:, :, None] * dtotal[:, None, :]) / total[:,
                                                                            None,
                                                                            None]
    return r, dr


def grad_volume(model, tables):
    """
    dV/dP for every macro control point coordinate, shape (n_M, d).

    Integrates the volume adjoint times the derivative of |det J| on the
    projection quadrature, then chains through the extraction operators.
    """
    space = build_space(tables.degrees)
    orders = projection_orders(space, model.macro.degrees)
    pts, w, basis = _volume_rule(space.degrees, tuple(orders))
    v = basis @ tables.t_pi
    cps = model.macro.patch.control_points
    grad = np.zeros_like(cps)
    for element in model.macro.elements:
        r, dr = _patch_basis_on_element(model, element, pts)
        jac = np.einsum("mji,jk->mki", dr, cps[element.support])
        det = np.linalg.det(jac)
        jinv = np.linalg.inv(jac)
        dets = np.einsum("mji,mik->mjk", dr, jinv)
        local = np.einsum("m,mjk->jk", w * v * np.abs(det), dets)
        np.add.at(grad, element.support, local)
    return grad


def _pair_products(lam, u, rows, cols):
    return lam[:, rows, :, None] * u[:, cols, None, :]


def adjoint_compliance(model, tables, u, v=None, block_size=64):
    """
    Compliance adjoints W_t[C, i, j, k, l] = sum over tile pairs of
    v_A[k] u_B[l] K(A, B, C, i, j), and their projection-space solve.
    """
    space = build_space(tables.degrees)
    d = model.dim
    sparsity = tables.sparsity
    rows, cols = sparsity.rows, sparsity.cols
    off = np.flatnonzero(~sparsity.diagonal)
    u_elem = gather_vector(model, u)
    v_elem = u_elem if v is None else gather_vector(model, v)
    m = model.macro.n_elements
    raw = np.zeros((m, tables.n_pi, d, d, d, d))
    mat_k = tables.mat_k
    for start in range(0, m, block_size):
        elements = np.arange(start, min(start + block_size, m))
        b = len(elements)
        ue, ve = u_elem[elements], v_elem[elements]
        pairs = _pair_products(ve, ue, rows, cols).transpose(1, 0, 2, 3)
        x = mat_k.T @ pairs.reshape(sparsity.n_nz, -1)
        x = x.reshape(tables.n_pi, d, d, b, d, d).transpose(3, 0, 1, 2, 4, 5)
        mirror = _pair_products(ve, ue, cols[off], rows[off]).transpose(1, 0, 2, 3)
        y = mat_k[off].T @ mirror.reshape(len(off), -1)
        y = y.reshape(tables.n_pi, d, d, b, d, d).transpose(3, 0, 2, 1, 4, 5)
        raw[elements] = x + y
    flat = raw.transpose(1, 0, 2, 3, 4, 5).reshape(tables.n_pi, -1)
    coeffs = space.solve(flat).reshape((tables.n_pi, m) + (d, ) * 4).transpose(
        1, 0, 2, 3, 4, 5)
    return AdjointField("compliance", coeffs, raw)


def _perturbed(model, element, j, k, delta):
    """Element with patch control point support[j] moved by delta along x_k."""
    coeffs = element.coeffs.copy()
    column = element.extraction[:, j]
    if element.weights is None:
        coeffs[:, k] += delta * column
    else:
        w = model.macro.patch.weights[element.support[j]]
        coeffs[:, k] += delta * column * w / element.weights
    return element.with_coeffs(coeffs, element.weights)


def _adjoint_state(model, tables, projected, u):
    """lambda = [K_ff^-1 f_f; 0], equal to u for homogeneous Dirichlet data."""
    fixed, values = dirichlet_values(model)
    if not np.any(values):
        return u
    op = SparseOperator(assemble_stiffness(model, tables, projected),
                        assemble_load(model, tables, projected))
    system = apply_dirichlet(op, model.bcs, model)
    lam = np.zeros(model.n_dof)
    lam[system.free] = scipy.sparse.linalg.spsolve(system.K.tocsc(),
                                                   op.f[system.free])
    return lam


def grad_compliance(model, tables, projected, u, fixed_load_support=False,
                    step=None, threads=1):
    """
    dC/dP of the compliance C = f.u / 2 at the solved state u, shape (n_M, d).

    dA/dP and the load extensions' derivatives come from central differences
    of the projected Bernstein coefficients of the affected elements only.
    With fixed_load_support the external-work derivative is dropped.
    """
    space = projected.space
    tables.check(space, model.dof_map.n_tile)
    d = model.dim
    lam = _adjoint_state(model, tables, projected, u)
    adjoint = adjoint_compliance(model, tables, u, lam)
    z = gather_vector(model, 0.5 * (u + lam))
    h = (step or FD_STEP) * design_scale(model)
    loads = tables.load
    faces = model.bcs.traction_faces()
    boundary = {face: set(model.macro.boundary_elements(face)) for face in faces}

    def element_gradient(element):
        t = element.index
        loaded = [f for f in faces if t in boundary[f]]
        out = np.zeros((len(element.support), d))
        for j in range(len(element.support)):
            for k in range(d):
                plus = project_macro_element(
                    model, space, _perturbed(model, element, j, k, h), loaded,
                    with_error=False)
                minus = project_macro_element(
                    model, space, _perturbed(model, element, j, k, -h), loaded,
                    with_error=False)
                da = unpack_macro_field((plus.a - minus.a) / (2 * h), d)
                value = -0.5 * float(np.sum(adjoint.raw[t] * da))
                if not fixed_load_support:
                    db = (plus.b - minus.b) / (2 * h)
                    df = loads[:, :, 0] @ db
                    for face in loaded:
                        dt = (plus.t[face] - minus.t[face]) / (2 * h)
                        df += loads[:, space.face_sets[face], 1 + face] @ dt
                    value += float(np.sum(z[t] * df))
                out[j, k] = value
        return out

    grad = np.zeros_like(model.macro.patch.control_points)
    results = parallel_map(element_gradient, model.macro.elements, threads)
    for element, local in zip(model.macro.elements, results):
        np.add.at(grad, element.support, local)
    return grad


def _fixed_degree_config(tables, cfg):
    cfg = cfg or AssemblyConfig.from_env()
    return cfg.updated(p_proj=tuple(tables.degrees), tol=None)


def evaluate_qoi(model, tables, qoi, cfg=None):
    """Volume or compliance of the fast path at fixed projection degrees."""
    cfg = _fixed_degree_config(tables, cfg)
    space = build_space(tables.degrees)
    projected = project_model(model, space, cfg.threads)
    if qoi == "volume":
        return assemble_volume(model, tables, projected)[0]
    if qoi != "compliance":
        raise ValueError(f"unknown quantity of interest {qoi!r}")
    op = SparseOperator(assemble_stiffness(model, tables, projected,
                                           cfg.block_size),
                        assemble_load(model, tables, projected))
    system = apply_dirichlet(op, model.bcs, model)
    u = solve_linear(system, "direct", cfg.solver_tol)
    return compliance(op.f, u)


@dataclasses.dataclass(frozen=True, eq=False)
class FiniteDifferenceCheck:
    indices: np.ndarray
    steps: tuple
    values: np.ndarray

    def errors(self, gradient):
        """Relative error of each step against the matching gradient entries."""
        exact = gradient[self.indices[:, 0], self.indices[:, 1]]
        scale = np.linalg.norm(exact)
        scale = scale if scale > 0 else 1.0
        return np.linalg.norm(self.values - exact[None, :], axis=1) / scale

    def best_error(self, gradient):
        return float(self.errors(gradient).min())


def finite_difference_gradient(model, tables, qoi, indices=None,
                               steps=(1e-4, 1e-5, 1e-6), cfg=None, quiet=True):
    """
    Central differences of the re-assembled (and re-solved) quantity of
    interest for selected (control point, direction) pairs.
    """
    cps = model.macro.patch.control_points
    if indices is None:
        indices = [(j, k) for j in range(cps.shape[0]) for k in range(cps.shape[1])]
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, 2)
    scale = design_scale(model)
    values = np.zeros((len(steps), len(indices)))
    for s, step in enumerate(steps):
        h = step * scale
        for n, (j, k) in enumerate(progress(indices, f"fd step {step:g}", quiet)):
            results = []
            for sign in (1.0, -1.0):
                moved = np.array(cps)
                moved[j, k] += sign * h
                perturbed = model.with_macro(model.macro.with_control_points(moved))
                results.append(evaluate_qoi(perturbed, tables, qoi, cfg))
            values[s, n] = (results[0] - results[1]) / (2 * h)
    log.info(f"finite differences of {qoi}: {len(indices)} entries, "
             f"{len(steps)} steps")
    return FiniteDifferenceCheck(indices, tuple(steps), values)


def export_gradient(gradient, path):
    n, d = gradient.shape
    frame = pd.DataFrame({
        "control_point": np.repeat(np.arange(n), d),
        "direction": np.tile(np.arange(d), n),
        "value": gradient.ravel()
    })
    frame.to_csv(path, index=False, float_format="%.17g")
