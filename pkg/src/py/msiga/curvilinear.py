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
Linear elasticity in the curvilinear coordinates of a macro element.

Arrays are batched over sample points (leading axis m). Basis vectors are
stored row-wise: g_cov[m, i] is the covariant vector g_i at point m.
"""
import dataclasses
import functools
import logging
from typing import Dict, Optional

import numpy as np

from .errors import DegenerateElementError, UnsupportedLoadError
from .splines import _as_points

log = logging.getLogger(__name__)

VOIGT = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)),
}

_SINGULAR_TOL = 1e-13


@dataclasses.dataclass(frozen=True, eq=False)
class MetricState:
    g_cov: np.ndarray
    g_contra: np.ndarray
    metric_cov: np.ndarray
    metric_contra: np.ndarray
    det_j: np.ndarray
    jacobian: np.ndarray

    @property
    def dim(self):
        return self.g_cov.shape[-1]

    @property
    def n_points(self):
        return self.g_cov.shape[0]


def state_from_jacobian(jac, element=None, points=None):
    jac = np.asarray(jac, dtype=float)
    if jac.ndim == 2:
        jac = jac[None]
    det = np.linalg.det(jac)
    scale = np.prod(np.linalg.norm(jac, axis=1), axis=-1)
    bad = ~(np.abs(det) > _SINGULAR_TOL * scale)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        where = points[k] if points is not None else [float("nan")] * jac.shape[-1]
        raise DegenerateElementError(element, where, det[k])
    g_cov = jac.transpose(0, 2, 1)
    metric_cov = g_cov @ jac
    metric_contra = np.linalg.inv(metric_cov)
    metric_contra = 0.5 * (metric_contra + metric_contra.transpose(0, 2, 1))
    g_contra = metric_contra @ g_cov
    return MetricState(g_cov, g_contra, metric_cov, metric_contra, np.abs(det),
                       jac)


def metric_state(element, xi):
    """Covariant and contravariant bases and metrics of element t at points xi."""
    pts = _as_points(xi, element.dim_param)
    _, jac, _ = element.evaluate(pts, 1)
    return state_from_jacobian(jac, element.index, pts)


def material_tensor(state, mat):
    """Full contravariant elasticity tensor C[m, i, j, k, l]."""
    lam, mu = mat.lame
    g = state.metric_contra
    return (lam * np.einsum("mij,mkl->mijkl", g, g) +
            mu * (np.einsum("mik,mjl->mijkl", g, g) +
                  np.einsum("mil,mjk->mijkl", g, g)))


def _voigt_index(dim):
    pairs = np.array(VOIGT[dim])
    return pairs[:, 0], pairs[:, 1]


def material_voigt(state, mat):
    """Contravariant material matrix in Voigt order, shape (m, n_voigt, n_voigt)."""
    full = material_tensor(state, mat)
    a, b = _voigt_index(state.dim)
    c = full[:, a[:, None], b[:, None], a[None, :], b[None, :]]
    assert np.array_equal(c, c.transpose(0, 2, 1)), "material matrix lost symmetry"
    return c


def g_blocks(state):
    """Strain-displacement blocks G[m, i, :, I], so that eps = sum_i G_i^T u_,i."""
    dim = state.dim
    pairs = VOIGT[dim]
    blocks = np.zeros((state.n_points, dim, dim, len(pairs)))
    for col, (a, b) in enumerate(pairs):
        if a == b:
            blocks[:, a, :, col] = state.g_cov[:, a]
        else:
            blocks[:, a, :, col] = state.g_cov[:, b]
            blocks[:, b, :, col] = state.g_cov[:, a]
    return blocks


def voigt_strain(state, du):
    """Voigt covariant strain (engineering shears) of gradients du[m, i, k] = u_,i[k]."""
    return np.einsum("mikI,mik->mI", g_blocks(state), du)


def covariant_strain(state, du):
    """Componentwise covariant strain, eps[m, i, j] = (u_,i . g_j + u_,j . g_i) / 2."""
    t = np.einsum("mik,mjk->mij", du, state.g_cov)
    return 0.5 * (t + t.transpose(0, 2, 1))


def contravariant_stress(state, mat, du):
    return np.einsum("mijkl,mkl->mij", material_tensor(state, mat),
                     covariant_strain(state, du))


def physical_strain(state, eps_cov):
    return np.einsum("mij,mik,mjl->mkl", eps_cov, state.g_contra,
                     state.g_contra)


def physical_stress(state, sigma_contra):
    return np.einsum("mij,mik,mjl->mkl", sigma_contra, state.g_cov,
                     state.g_cov)


def macro_field_from_state(state, mat):
    """Blocks A[m, i, j, k, l] = (G_i C G_j^T)[k, l] |det J|."""
    blocks = g_blocks(state)
    c = material_voigt(state, mat)
    a = np.einsum("mikI,mIJ,mjlJ->mijkl", blocks, c, blocks)
    return a * state.det_j[:, None, None, None, None]


@functools.lru_cache(maxsize=None)
def macro_field_components(dim):
    """(i, j, k, l) of the stored components: i <= j, and k <= l on diagonal blocks."""
    comps = []
    for i in range(dim):
        for j in range(i, dim):
            for k in range(dim):
                for l in range(dim):
                    if i == j and l < k:
                        continue
                    comps.append((i, j, k, l))
    return np.array(comps, dtype=np.int64)


def component_multiplicity(dim):
    """How often each stored component occurs in the full block tensor."""
    comps = macro_field_components(dim)
    off = (comps[:, 0] < comps[:, 1]) | (comps[:, 2] < comps[:, 3])
    return np.where(off, 2.0, 1.0)


def pack_macro_field(a):
    dim = a.shape[-1]
    i, j, k, l = macro_field_components(dim).T
    return a[..., i, j, k, l]


def unpack_macro_field(packed, dim):
    i, j, k, l = macro_field_components(dim).T
    out = np.zeros(packed.shape[:-1] + (dim, ) * 4)
    out[..., i, j, k, l] = packed
    out[..., j, i, l, k] = packed
    return out


def face_measure(state, face):
    """|det I| on a face: the face-normal direction uses the unit contravariant vector."""
    axis = face // 2
    vectors = state.g_cov.copy()
    normal = state.g_contra[:, axis]
    vectors[:, axis] = normal / np.linalg.norm(normal, axis=-1)[:, None]
    return np.abs(np.linalg.det(vectors))


@dataclasses.dataclass(frozen=True, eq=False)
class MacroFieldSample:
    blocks: np.ndarray
    state: MetricState
    body: Optional[np.ndarray] = None
    tractions: Optional[Dict[int, np.ndarray]] = None

    @property
    def packed(self):
        return pack_macro_field(self.blocks)


def macro_field(element, xi, mat):
    state = metric_state(element, xi)
    return MacroFieldSample(macro_field_from_state(state, mat), state)


def body_extension(state, body):
    return np.asarray(body, dtype=float)[None, :] * state.det_j[:, None]


def traction_extension(state, face, traction):
    return np.asarray(traction, dtype=float)[None, :] * face_measure(
        state, face)[:, None]


def load_extensions(model, t, xi, face=None):
    """
    Extended body force at xi and, for a face, the extended traction.

    :return: (b_bar (m, d), t_bar (m, d) or None)
    """
    element = model.macro.elements[t]
    pts = _as_points(xi, model.dim)
    if face is not None:
        axis, side = face // 2, face % 2
        if t not in model.macro.boundary_elements(face):
            raise UnsupportedLoadError(
                f"face {face + 1} of element {t} is interior to the macro map")
        if np.any(np.abs(pts[:, axis] - side) > 1e-12):
            raise UnsupportedLoadError(
                f"traction points of face {face + 1} must satisfy xi_{axis + 1}={side}")
    state = metric_state(element, pts)
    b_bar = body_extension(state, model.bcs.body(model.dim))
    t_bar = None
    if face is not None:
        t_bar = traction_extension(state, face,
                                   model.bcs.traction(face, model.dim))
    return b_bar, t_bar
