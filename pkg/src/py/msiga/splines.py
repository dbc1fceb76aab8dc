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
B-spline, NURBS and Bernstein bases on normalized parameter domains.

Control points of a tensor-product patch are stored in C order over the
per-direction basis indices, so the last parametric direction runs
fastest: index = (i0 * n1 + i1) * n2 + i2.
"""
import dataclasses
import functools
import logging
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .errors import DomainError, ModelError

log = logging.getLogger(__name__)

_DOMAIN_TOL = 1e-12


def _as_points(x, dim):
    pts = np.asarray(x, dtype=float).reshape(-1, dim)
    if pts.size and (pts.min() < -_DOMAIN_TOL or pts.max() > 1 + _DOMAIN_TOL):
        bad = pts[np.any((pts < -_DOMAIN_TOL) | (pts > 1 + _DOMAIN_TOL),
                         axis=1)][0]
        raise DomainError(f"parameter {list(bad)} outside [0,1]^{dim}")
    return np.clip(pts, 0.0, 1.0)


@dataclasses.dataclass(frozen=True, eq=False)
class KnotVector:
    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        knots = np.array(self.knots, dtype=float).ravel()
        if p < 0:
            raise ModelError(f"negative spline degree {p}")
        if len(knots) < 2 * (p + 1):
            raise ModelError(
                f"knot vector of degree {p} needs at least {2 * (p + 1)} knots")
        if np.any(np.diff(knots) < 0):
            raise ModelError("knot vector is not nondecreasing")
        lo, hi = knots[0], knots[-1]
        if not hi > lo:
            raise ModelError("knot vector spans an empty interval")
        knots = (knots - lo) / (hi - lo)
        if np.any(knots[:p + 1] != 0.0) or np.any(knots[-(p + 1):] != 1.0):
            raise ModelError(f"knot vector is not open for degree {p}")
        interior = knots[p + 1:len(knots) - p - 1]
        if len(interior):
            if interior[0] == 0.0 or interior[-1] == 1.0:
                raise ModelError("end knots repeated more than degree+1 times")
            _, counts = np.unique(interior, return_counts=True)
            if counts.max() > max(p, 1):
                raise ModelError(
                    f"interior knot multiplicity {counts.max()} exceeds degree {p}"
                )
        knots.flags.writeable = False
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(cls, degree, n_spans=1):
        inner = np.linspace(0.0, 1.0, n_spans + 1)[1:-1]
        return cls(degree,
                   np.concatenate([np.zeros(degree + 1), inner,
                                   np.ones(degree + 1)]))

    @property
    def n_basis(self):
        return len(self.knots) - self.degree - 1

    @property
    def breaks(self):
        return np.unique(self.knots)

    @property
    def n_spans(self):
        return len(self.breaks) - 1

    @property
    def span_indices(self):
        return np.searchsorted(self.knots, self.breaks[:-1], side="right") - 1

    def find_span(self, x):
        spans = np.searchsorted(self.knots, x, side="right") - 1
        return np.clip(spans, self.degree, self.n_basis - 1)

    def greville(self):
        p = self.degree
        if p == 0:
            return 0.5 * (self.knots[:-1] + self.knots[1:])
        return np.array([
            self.knots[i + 1:i + p + 1].mean() for i in range(self.n_basis)
        ])

    def to_list(self):
        return [float(k) for k in self.knots]


def basis_derivatives(kv, x, n_derivs=0):
    """
    Nonzero basis functions and their derivatives at many points.

    :param kv: knot vector
    :param x: points in [0,1], shape (m,)
    :param n_derivs: highest derivative order
    :return: spans (m,) and derivatives (m, n_derivs + 1, degree + 1)
    """
    x = np.clip(np.asarray(x, dtype=float).ravel(), 0.0, 1.0)
    p = kv.degree
    knots = kv.knots
    m = x.shape[0]
    spans = kv.find_span(x)
    n = min(n_derivs, p)

    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, n_derivs + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    for r in range(p + 1):
        a = np.zeros((m, 2, p + 1))
        a[:, 0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, n + 1):
            d = np.zeros(m)
            rk = r - k
            pk = p - k
            if r >= k:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1,
                                                                    rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, k] = -a[:, s1, k - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, k] * ndu[:, r, pk]
            ders[:, k, r] = d
            s1, s2 = s2, s1
    factor = p
    for k in range(1, n + 1):
        ders[:, k, :] *= factor
        factor *= p - k
    return spans, ders


def eval_bspline_basis(kv, x, n_derivs=0):
    """
    Values and derivatives of the degree+1 functions active at x.

    :return: (span index, array of shape (n_derivs + 1, degree + 1))
    """
    if not -_DOMAIN_TOL <= x <= 1 + _DOMAIN_TOL:
        raise DomainError(f"parameter {x} outside [0,1]")
    spans, ders = basis_derivatives(kv, [x], n_derivs)
    return int(spans[0]), ders[0]


@functools.lru_cache(maxsize=None)
def _bernstein_knots(degree):
    return KnotVector(degree,
                      [0.0] * (degree + 1) + [1.0] * (degree + 1))


def bernstein_1d(degree, x, n_derivs=0):
    """Univariate Bernstein values/derivatives, shape (m, n_derivs + 1, degree + 1)."""
    return basis_derivatives(_bernstein_knots(degree), x, n_derivs)[1]


def _tensor_products(ders, n_derivs):
    dim = len(ders)
    m = ders[0].shape[0]

    def product(orders):
        out = ders[0][:, orders[0], :]
        for k in range(1, dim):
            out = (out[:, :, None] * ders[k][:, orders[k], None, :]).reshape(
                m, -1)
        return out

    values = product([0] * dim)
    grads = hess = None
    if n_derivs >= 1:
        grads = np.stack(
            [product([int(k == i) for k in range(dim)]) for i in range(dim)],
            axis=-1)
    if n_derivs >= 2:
        hess = np.empty(values.shape + (dim, dim))
        for i in range(dim):
            for j in range(i, dim):
                orders = [0] * dim
                orders[i] += 1
                orders[j] += 1
                hess[..., i, j] = hess[..., j, i] = product(orders)
    return values, grads, hess


def _rationalize(values, grads, hess, weights):
    nw = values * weights
    w = nw.sum(axis=1)
    r = nw / w[:, None]
    dr = d2r = None
    if grads is not None:
        gw = grads * weights[..., None]
        dw = gw.sum(axis=1)
        dr = (gw - r[:, :, None] * dw[:, None, :]) / w[:, None, None]
        if hess is not None:
            hw = hess * weights[..., None, None]
            d2w = hw.sum(axis=1)
            d2r = (hw - dr[:, :, :, None] * dw[:, None, None, :] -
                   dw[:, None, :, None] * dr[:, :, None, :] -
                   r[:, :, None, None] * d2w[:, None]) / w[:, None, None, None]
    return r, dr, d2r


def bernstein_tensor(degrees, xi, n_derivs=0):
    """Tensor Bernstein basis at a batch of points: values, gradients, Hessians."""
    degrees = tuple(int(p) for p in degrees)
    pts = _as_points(xi, len(degrees))
    ders = [bernstein_1d(p, pts[:, k], n_derivs) for k, p in enumerate(degrees)]
    return _tensor_products(ders, n_derivs)


def eval_bernstein_basis(degrees, xi, n_derivs=0):
    """
    All tensor Bernstein functions of the given per-direction degrees.

    Returns the values for n_derivs == 0, otherwise (values, gradients) or
    (values, gradients, Hessians). A single point drops the batch axis.
    """
    single = np.ndim(xi) == 1
    values, grads, hess = bernstein_tensor(degrees, xi, n_derivs)
    out = tuple(a for a in (values, grads, hess) if a is not None)
    if single:
        out = tuple(a[0] for a in out)
    return out[0] if n_derivs == 0 else out


def _combine(basis, coeffs):
    if coeffs.ndim == 2:
        if basis.ndim == 2:
            return basis @ coeffs
        return np.einsum("mq...,qd->md...", basis, coeffs)
    return np.einsum("mq...,mqd->md...", basis, coeffs)


def _evaluate_basis(basis, coeffs):
    values, grads, hess = basis
    pos = _combine(values, coeffs)
    jac = None if grads is None else _combine(grads, coeffs)
    h = None if hess is None else _combine(hess, coeffs)
    return pos, jac, h


@dataclasses.dataclass(frozen=True, eq=False)
class SplinePatch:
    knot_vectors: Tuple[KnotVector, ...]
    control_points: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        kvs = tuple(self.knot_vectors)
        if len(kvs) not in (1, 2, 3):
            raise ModelError(f"unsupported parametric dimension {len(kvs)}")
        cps = np.array(self.control_points, dtype=float)
        if cps.ndim == 1:
            cps = cps[:, None]
        n = int(np.prod([kv.n_basis for kv in kvs]))
        if cps.shape[0] != n:
            raise ModelError(
                f"patch expects {n} control points, got {cps.shape[0]}")
        weights = self.weights
        if weights is not None:
            weights = np.array(weights, dtype=float).ravel()
            if weights.shape[0] != n:
                raise ModelError(f"patch expects {n} weights, got {len(weights)}")
            if np.any(weights <= 0):
                raise ModelError("NURBS weights must be positive")
            weights.flags.writeable = False
        cps.flags.writeable = False
        object.__setattr__(self, "knot_vectors", kvs)
        object.__setattr__(self, "control_points", cps)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_arrays(cls, degrees, knots, control_points, weights=None):
        kvs = tuple(KnotVector(p, k) for p, k in zip(degrees, knots))
        return cls(kvs, control_points, weights)

    @property
    def dim_param(self):
        return len(self.knot_vectors)

    @property
    def dim(self):
        return self.control_points.shape[1]

    @property
    def degrees(self):
        return tuple(kv.degree for kv in self.knot_vectors)

    @property
    def shape(self):
        return tuple(kv.n_basis for kv in self.knot_vectors)

    @property
    def n_control(self):
        return self.control_points.shape[0]

    @property
    def is_rational(self):
        return self.weights is not None

    @property
    def element_shape(self):
        return tuple(kv.n_spans for kv in self.knot_vectors)

    @property
    def n_elements(self):
        return int(np.prod(self.element_shape))

    def homogeneous(self):
        w = np.ones(self.n_control) if self.weights is None else self.weights
        return np.hstack([self.control_points * w[:, None], w[:, None]])

    def with_control_points(self, control_points):
        return dataclasses.replace(self, control_points=control_points)

    def to_dict(self):
        doc = {
            "degrees": list(self.degrees),
            "knots": [kv.to_list() for kv in self.knot_vectors],
            "control_points": self.control_points.tolist()
        }
        if self.weights is not None:
            doc["weights"] = self.weights.tolist()
        return doc


def patch_basis(patch, points, n_derivs=1):
    """
    Active basis functions of a patch at a batch of parameter points.

    :return: (indices (m, q), values (m, q), gradients (m, q, dim_param) or
        None, Hessians or None); rational bases for NURBS patches.
    """
    pts = _as_points(points, patch.dim_param)
    m = pts.shape[0]
    ders = []
    idx = None
    for k, kv in enumerate(patch.knot_vectors):
        spans, dk = basis_derivatives(kv, pts[:, k], n_derivs)
        ders.append(dk)
        local = spans[:, None] - kv.degree + np.arange(kv.degree + 1)
        if idx is None:
            idx = local
        else:
            idx = (idx[:, :, None] * kv.n_basis + local[:, None, :]).reshape(
                m, -1)
    values, grads, hess = _tensor_products(ders, n_derivs)
    if patch.weights is not None:
        values, grads, hess = _rationalize(values, grads, hess,
                                           patch.weights[idx])
    return idx, values, grads, hess


def evaluate_points(patch, points, n_derivs=1):
    idx, values, grads, hess = patch_basis(patch, points, n_derivs)
    return _evaluate_basis((values, grads, hess), patch.control_points[idx])


def eval_patch(patch, x, n_derivs=1):
    """
    Position, Jacobian (d x dim_param) and optionally second derivatives.

    Accepts one point or a batch of points; missing orders are None.
    """
    single = np.ndim(x) == 1
    pos, jac, hess = evaluate_points(patch, x, n_derivs)
    if single:
        pos = pos[0]
        jac = None if jac is None else jac[0]
        hess = None if hess is None else hess[0]
    return pos, jac, hess


def insert_knot(kv, ctrl, x):
    """Insert x once into kv; ctrl holds one row per basis function."""
    if not 0.0 < x < 1.0:
        raise DomainError(f"can only insert interior knots, got {x}")
    p = kv.degree
    knots = kv.knots
    ctrl = np.asarray(ctrl, dtype=float)
    k = int(np.searchsorted(knots, x, side="right") - 1)
    new = np.empty((ctrl.shape[0] + 1, ) + ctrl.shape[1:])
    new[:k - p + 1] = ctrl[:k - p + 1]
    new[k + 1:] = ctrl[k:]
    for i in range(k - p + 1, k + 1):
        alpha = (x - knots[i]) / (knots[i + p] - knots[i])
        new[i] = alpha * ctrl[i] + (1.0 - alpha) * ctrl[i - 1]
    return KnotVector(p, np.insert(knots, k + 1, x)), new


def _apply_along(grid, axis, fn):
    moved = np.moveaxis(grid, axis, 0)
    flat = moved.reshape(moved.shape[0], -1)
    out = fn(flat)
    out = out.reshape((out.shape[0], ) + moved.shape[1:])
    return np.moveaxis(out, 0, axis)


def _patch_from_grid(kvs, grid, rational):
    dim = grid.shape[-1] - 1
    flat = grid.reshape(-1, dim + 1)
    if rational:
        w = flat[:, -1]
        return SplinePatch(tuple(kvs), flat[:, :-1] / w[:, None], w)
    return SplinePatch(tuple(kvs), flat[:, :-1])


def refine_patch(patch, n_per_span):
    """Split every knot span of every direction into n_per_span equal parts."""
    counts = np.broadcast_to(np.asarray(n_per_span, dtype=int),
                             (patch.dim_param, ))
    grid = patch.homogeneous().reshape(patch.shape + (patch.dim + 1, ))
    kvs = list(patch.knot_vectors)
    for axis, count in enumerate(counts):
        breaks = kvs[axis].breaks
        for lo, hi in zip(breaks[:-1], breaks[1:]):
            for j in range(1, count):
                x = lo + (hi - lo) * j / count

                def insert(flat, x=x, axis=axis):
                    kv, out = insert_knot(kvs[axis], flat, x)
                    kvs[axis] = kv
                    return out

                grid = _apply_along(grid, axis, insert)
    return _patch_from_grid(kvs, grid, patch.is_rational)


def collocation_matrix(kv, x):
    spans, ders = basis_derivatives(kv, x, 0)
    out = np.zeros((len(spans), kv.n_basis))
    for a in range(kv.degree + 1):
        out[np.arange(len(spans)), spans - kv.degree + a] = ders[:, 0, a]
    return out


def _elevated_knots(kv, r):
    breaks, counts = np.unique(kv.knots, return_counts=True)
    return KnotVector(kv.degree + r, np.repeat(breaks, counts + r))


def elevate_degree(patch, increments):
    """Raise the per-direction degrees by increments without changing the map."""
    incs = np.broadcast_to(np.asarray(increments, dtype=int),
                           (patch.dim_param, ))
    grid = patch.homogeneous().reshape(patch.shape + (patch.dim + 1, ))
    kvs = list(patch.knot_vectors)
    for axis, r in enumerate(incs):
        if r <= 0:
            continue
        old = kvs[axis]
        new = _elevated_knots(old, int(r))
        g = new.greville()
        transfer = scipy.linalg.solve(collocation_matrix(new, g),
                                      collocation_matrix(old, g))
        grid = _apply_along(grid, axis, lambda flat: transfer @ flat)
        kvs[axis] = new
    return _patch_from_grid(kvs, grid, patch.is_rational)


@dataclasses.dataclass(frozen=True, eq=False)
class BezierElement:
    index: int
    grid_index: Tuple[int, ...]
    box: np.ndarray
    degrees: Tuple[int, ...]
    coeffs: np.ndarray
    weights: Optional[np.ndarray] = None
    extraction: Optional[np.ndarray] = None
    support: Optional[np.ndarray] = None

    @property
    def n_bernstein(self):
        return self.coeffs.shape[0]

    @property
    def dim(self):
        return self.coeffs.shape[1]

    @property
    def dim_param(self):
        return len(self.degrees)

    @property
    def is_rational(self):
        return self.weights is not None

    def to_parent(self, xi):
        xi = np.asarray(xi, dtype=float)
        return self.box[:, 0] + xi * (self.box[:, 1] - self.box[:, 0])

    def basis(self, xi, n_derivs=1):
        values, grads, hess = bernstein_tensor(self.degrees, xi, n_derivs)
        if self.weights is not None:
            values, grads, hess = _rationalize(values, grads, hess,
                                               self.weights)
        return values, grads, hess

    def evaluate(self, xi, n_derivs=1):
        """Batched position, Jacobian and Hessian of the element map."""
        return _evaluate_basis(self.basis(xi, n_derivs), self.coeffs)

    def with_coeffs(self, coeffs, weights=None):
        return dataclasses.replace(self,
                                   coeffs=np.asarray(coeffs, dtype=float),
                                   weights=weights)


def extraction_operators(kv):
    """Per-span (degree+1) x (degree+1) maps from B-spline to Bernstein coefficients."""
    p = kv.degree
    ctrl = np.eye(kv.n_basis)
    refined = kv
    for x in kv.breaks[1:-1]:
        mult = int(np.count_nonzero(kv.knots == x))
        for _ in range(p - mult):
            refined, ctrl = insert_knot(refined, ctrl, x)
    step = max(p, 1)
    ops = []
    for e, span in enumerate(kv.span_indices):
        rows = ctrl[e * step:e * step + p + 1]
        ops.append(rows[:, span - p:span + 1])
    return ops


def bezier_extract(patch):
    """Split a patch into one Bernstein element per nonzero knot span box."""
    per_dir = [extraction_operators(kv) for kv in patch.knot_vectors]
    spans = [kv.span_indices for kv in patch.knot_vectors]
    breaks = [kv.breaks for kv in patch.knot_vectors]
    hom = patch.homogeneous()
    elements = []
    for index, grid_index in enumerate(np.ndindex(*patch.element_shape)):
        op = np.ones((1, 1))
        support = np.zeros(1, dtype=int)
        box = np.empty((patch.dim_param, 2))
        for k, e in enumerate(grid_index):
            kv = patch.knot_vectors[k]
            op = np.kron(op, per_dir[k][e])
            local = spans[k][e] - kv.degree + np.arange(kv.degree + 1)
            support = (support[:, None] * kv.n_basis + local[None, :]).ravel()
            box[k] = breaks[k][e], breaks[k][e + 1]
        bw = op @ hom[support]
        if patch.is_rational:
            weights = bw[:, -1]
            coeffs = bw[:, :-1] / weights[:, None]
        else:
            weights = None
            coeffs = bw[:, :-1]
        elements.append(
            BezierElement(index, tuple(int(e) for e in grid_index), box,
                          patch.degrees, coeffs, weights, op, support))
    log.debug(f"extracted {len(elements)} Bezier elements of degrees "
              f"{patch.degrees}")
    return elements
