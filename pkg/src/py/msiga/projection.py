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
L2 projection of macro fields onto one Bernstein space shared by all
elements, with face projectors for tractions and adaptive degree choice.
"""
import dataclasses
import functools
import logging
from typing import Dict, Tuple

import numpy as np
import scipy.linalg
import scipy.special

from .curvilinear import (body_extension, component_multiplicity,
                          macro_field_from_state, pack_macro_field,
                          state_from_jacobian, traction_extension,
                          unpack_macro_field)
from .errors import ProjectionNotConvergedError
from .quadrature import sample_grid, tensor_rule
from .splines import bernstein_tensor
from .utils import parallel_map

log = logging.getLogger(__name__)

MAX_DEGREE = 10
ERROR_SAMPLES = 6


def mass_1d(p):
    a = np.arange(p + 1)
    binom = scipy.special.comb(p, a)
    return np.outer(binom, binom) / (
        (2 * p + 1) * scipy.special.comb(2 * p, a[:, None] + a[None, :]))


def _kron_all(mats):
    return functools.reduce(np.kron, mats, np.ones((1, 1)))


@dataclasses.dataclass(frozen=True, eq=False)
class BernsteinSpace:
    degrees: Tuple[int, ...]
    mass: np.ndarray
    factor: tuple
    face_sets: Tuple[np.ndarray, ...]
    face_factors: Tuple[tuple, ...]

    @property
    def dim(self):
        return len(self.degrees)

    @property
    def n(self):
        return self.mass.shape[0]

    @property
    def shape(self):
        return tuple(p + 1 for p in self.degrees)

    def basis(self, xi, n_derivs=0):
        values, grads, _ = bernstein_tensor(self.degrees, xi, n_derivs)
        return values if n_derivs == 0 else (values, grads)

    def solve(self, rhs):
        return scipy.linalg.cho_solve(self.factor, rhs)

    def solve_face(self, face, rhs):
        return scipy.linalg.cho_solve(self.face_factors[face], rhs)


def build_space(degrees):
    """Bernstein space of the given per-direction degrees with its factorized mass."""
    degrees = tuple(int(p) for p in degrees)
    if any(p < 0 for p in degrees):
        raise ValueError(f"projection degrees must be >= 0, got {degrees}")
    return _build_space(degrees)


@functools.lru_cache(maxsize=32)
def _build_space(degrees):
    masses = [mass_1d(p) for p in degrees]
    mass = _kron_all(masses)
    grid = np.arange(mass.shape[0]).reshape(tuple(p + 1 for p in degrees))
    face_sets, face_factors = [], []
    for axis, p in enumerate(degrees):
        rest = [m for k, m in enumerate(masses) if k != axis]
        face_factor = scipy.linalg.cho_factor(_kron_all(rest))
        for side in (0, 1):
            index = [slice(None)] * len(degrees)
            index[axis] = 0 if side == 0 else p
            face_sets.append(grid[tuple(index)].ravel())
            face_factors.append(face_factor)
    log.debug(f"Bernstein space of degrees {degrees}: n_pi={mass.shape[0]}")
    return BernsteinSpace(degrees, mass, scipy.linalg.cho_factor(mass),
                          tuple(face_sets), tuple(face_factors))


def projection_orders(space, macro_degrees):
    return tuple(
        max(p, q) + 3 for p, q in zip(space.degrees, macro_degrees))


@functools.lru_cache(maxsize=64)
def _volume_rule(degrees, orders):
    pts, w = tensor_rule(orders)
    values, _, _ = bernstein_tensor(degrees, pts, 0)
    return pts, w, values


@functools.lru_cache(maxsize=64)
def _face_rule(degrees, orders, face):
    axis, side = face // 2, face % 2
    keep = [k for k in range(len(degrees)) if k != axis]
    p2, w = tensor_rule([orders[k] for k in keep])
    pts = np.empty((len(w), len(degrees)))
    pts[:, keep] = p2
    pts[:, axis] = side
    space = build_space(degrees)
    values, _, _ = bernstein_tensor(degrees, pts, 0)
    return pts, w, values[:, space.face_sets[face]]


@functools.lru_cache(maxsize=16)
def _error_points(degrees, orders):
    grid = sample_grid(ERROR_SAMPLES, len(degrees))
    pts = np.vstack([grid, _volume_rule(degrees, orders)[0]])
    values, _, _ = bernstein_tensor(degrees, pts, 0)
    return pts, values


def project_element(space, evaluator, orders):
    """
    Bernstein coefficients of the L2 projection of a field on [0,1]^d.

    :param evaluator: callable mapping points (m, d) to values (m, n_comp)
    :param orders: Gauss points per direction
    """
    if np.isscalar(orders):
        orders = (int(orders), ) * space.dim
    pts, w, values = _volume_rule(space.degrees, tuple(orders))
    f = np.asarray(evaluator(pts), dtype=float)
    return space.solve(values.T @ (w[:, None] * f.reshape(len(w), -1)))


def project_face(space, face, evaluator, orders):
    """Coefficients on the face set I_F of the face projection of a field."""
    if np.isscalar(orders):
        orders = (int(orders), ) * space.dim
    pts, w, values = _face_rule(space.degrees, tuple(orders), face)
    f = np.asarray(evaluator(pts), dtype=float)
    return space.solve_face(face,
                            values.T @ (w[:, None] * f.reshape(len(w), -1)))


def reconstruct(space, coeffs, xi):
    return space.basis(xi) @ coeffs


def relative_error(exact, approx, weights=None):
    """Max over points of ||exact - approx|| / ||exact|| with optional component weights."""
    exact = exact.reshape(len(exact), -1)
    approx = approx.reshape(len(approx), -1)
    w = np.ones(exact.shape[1]) if weights is None else weights
    num = np.sqrt(((exact - approx)**2 * w).sum(axis=1))
    den = np.sqrt((exact**2 * w).sum(axis=1))
    scale = den.max() if len(den) else 0.0
    if scale == 0.0:
        return float(num.max()) if len(num) else 0.0
    ratio = np.where(den > 1e-300 * scale, num / np.where(den > 0, den, 1.0),
                     num / scale)
    return float(ratio.max())


def projection_error(space, coeffs, evaluator, orders=None, weights=None):
    """
    Max relative error of a projected field over a 6-point tensor grid plus
    the element quadrature points.
    """
    if orders is None:
        orders = tuple(p + 3 for p in space.degrees)
    pts, values = _error_points(space.degrees, tuple(orders))
    exact = np.asarray(evaluator(pts), dtype=float)
    return relative_error(exact, values @ coeffs, weights)


@dataclasses.dataclass(frozen=True, eq=False)
class ProjectedMacroFields:
    space: BernsteinSpace
    coeffs_a: np.ndarray
    coeffs_b: np.ndarray
    coeffs_t: Dict[int, np.ndarray]
    coeffs_det: np.ndarray
    errors: np.ndarray

    @property
    def e_proj(self):
        return float(self.errors.max()) if len(self.errors) else 0.0

    @property
    def n_elements(self):
        return self.coeffs_a.shape[0]

    @property
    def dim(self):
        return self.coeffs_b.shape[-1]

    def full_a(self, elements=slice(None)):
        return unpack_macro_field(self.coeffs_a[elements], self.dim)

    def replace_elements(self, values):
        """Copy with the per-element entries of the given element indices replaced."""
        a, b, det, err = (self.coeffs_a.copy(), self.coeffs_b.copy(),
                          self.coeffs_det.copy(), self.errors.copy())
        t = {face: c.copy() for face, c in self.coeffs_t.items()}
        for index, element in values.items():
            a[index], b[index], det[index], err[index] = (element.a, element.b,
                                                         element.det,
                                                         element.error)
            for face, c in element.t.items():
                t[face][index] = c
        return dataclasses.replace(self, coeffs_a=a, coeffs_b=b, coeffs_t=t,
                                   coeffs_det=det, errors=err)


@dataclasses.dataclass(frozen=True, eq=False)
class ElementProjection:
    a: np.ndarray
    b: np.ndarray
    det: np.ndarray
    t: Dict[int, np.ndarray]
    error: float


def _a_evaluator(element, mat):
    def evaluate(pts):
        _, jac, _ = element.evaluate(pts, 1)
        state = state_from_jacobian(jac, element.index, pts)
        return pack_macro_field(macro_field_from_state(state, mat))

    return evaluate


def project_macro_element(model, space, element, loaded_faces=(),
                          with_error=True):
    """Project A, b, |det J| and the tractions of the loaded faces of one element."""
    dim = model.dim
    mat = model.material
    body = model.bcs.body(dim)
    orders = projection_orders(space, model.macro.degrees)
    n_comp = len(component_multiplicity(dim))

    def evaluate(pts):
        _, jac, _ = element.evaluate(pts, 1)
        state = state_from_jacobian(jac, element.index, pts)
        return np.hstack([
            pack_macro_field(macro_field_from_state(state, mat)),
            state.det_j[:, None],
            body_extension(state, body)
        ])

    coeffs = project_element(space, evaluate, orders)
    a = coeffs[:, :n_comp]
    det = coeffs[:, n_comp]
    b = coeffs[:, n_comp + 1:]
    t = {}
    for face in loaded_faces:
        traction = model.bcs.traction(face, dim)

        def evaluate_face(pts, face=face, traction=traction):
            _, jac, _ = element.evaluate(pts, 1)
            state = state_from_jacobian(jac, element.index, pts)
            return traction_extension(state, face, traction)

        t[face] = project_face(space, face, evaluate_face, orders)
    error = 0.0
    if with_error:
        error = projection_error(space, a, _a_evaluator(element, mat), orders,
                                 component_multiplicity(dim))
    return ElementProjection(a, b, det, t, error)


def project_model(model, space, threads=1):
    """Projected macro fields of every element of the model."""
    dim = model.dim
    faces = model.bcs.traction_faces()
    boundary = {face: set(model.macro.boundary_elements(face)) for face in faces}

    def run(element):
        loaded = [f for f in faces if element.index in boundary[f]]
        return project_macro_element(model, space, element, loaded)

    results = parallel_map(run, model.macro.elements, threads)
    coeffs_t = {
        face: np.zeros((model.macro.n_elements, len(space.face_sets[face]), dim))
        for face in faces
    }
    for index, res in enumerate(results):
        for face, c in res.t.items():
            coeffs_t[face][index] = c
    fields = ProjectedMacroFields(space, np.stack([r.a for r in results]),
                                  np.stack([r.b for r in results]), coeffs_t,
                                  np.stack([r.det for r in results]),
                                  np.array([r.error for r in results]))
    log.info(f"projected {fields.n_elements} elements onto degrees "
             f"{space.degrees}: E_proj={fields.e_proj:.3e}")
    return fields


def _stiffness_error(model, degrees, threads=1):
    space = build_space(degrees)
    orders = projection_orders(space, model.macro.degrees)
    weights = component_multiplicity(model.dim)

    def run(element):
        evaluate = _a_evaluator(element, model.material)
        coeffs = project_element(space, evaluate, orders)
        return projection_error(space, coeffs, evaluate, orders, weights)

    return max(parallel_map(run, model.macro.elements, threads))


def select_degree(model, tol, cap=MAX_DEGREE, threads=1, return_error=False):
    """
    Greedy per-direction degree increase until E_proj <= tol, starting at the
    macro degrees.
    """
    if not tol > 0:
        raise ValueError(f"projection tolerance must be > 0, got {tol}")
    degrees = tuple(model.macro.degrees)
    memo = {}

    def error(trial):
        if trial not in memo:
            memo[trial] = _stiffness_error(model, trial, threads)
            log.debug(f"E_proj{trial} = {memo[trial]:.3e}")
        return memo[trial]

    current = error(degrees)
    while current > tol:
        trials = []
        for axis in range(len(degrees)):
            if degrees[axis] >= cap:
                continue
            trial = tuple(p + (k == axis) for k, p in enumerate(degrees))
            trials.append((error(trial), axis, trial))
        if not trials:
            raise ProjectionNotConvergedError(tol, degrees, current)
        current, _, degrees = min(trials)
    log.info(f"selected projection degrees {degrees} (E_proj={current:.3e})")
    return (degrees, current) if return_error else degrees
