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
Generators for reference tiles and macro maps used by the tests, the
benchmark sweeps and tools/model_gallery.
"""
import abc
import logging

import numpy as np
import scipy.linalg

from .errors import ModelError
from .model import (BoundaryConditions, ComposedModel, DirichletCondition,
                    MacroGeometry, Material, ProjectionSettings,
                    QuadratureSettings, TileGeometry, Traction)
from .splines import KnotVector, SplinePatch, collocation_matrix, refine_patch

log = logging.getLogger(__name__)


def _counts(value, dim):
    counts = tuple(int(v) for v in np.broadcast_to(np.asarray(value), (dim, )))
    if any(c < 1 for c in counts):
        raise ModelError(f"element counts must be >= 1, got {counts}")
    return counts


def _knot_vectors(degrees, n_spans):
    return tuple(KnotVector.uniform(p, n) for p, n in zip(degrees, n_spans))


def _greville_grid(kvs):
    grids = np.meshgrid(*[kv.greville() for kv in kvs], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def greville_patch(fn, degrees, n_spans):
    """Patch with control points fn(Greville points); exact for multilinear fn."""
    kvs = _knot_vectors(degrees, n_spans)
    return SplinePatch(kvs, fn(_greville_grid(kvs)))


def interpolated_patch(fn, degrees, n_spans):
    """Patch interpolating fn at the tensor Greville points."""
    kvs = _knot_vectors(degrees, n_spans)
    values = fn(_greville_grid(kvs))
    grid = values.reshape(tuple(kv.n_basis for kv in kvs) + (values.shape[-1], ))
    for axis, kv in enumerate(kvs):
        colloc = collocation_matrix(kv, kv.greville())
        moved = np.moveaxis(grid, axis, 0)
        solved = scipy.linalg.solve(colloc, moved.reshape(moved.shape[0], -1))
        grid = np.moveaxis(solved.reshape(moved.shape), 0, axis)
    return SplinePatch(kvs, grid.reshape(-1, values.shape[-1]))


class TileBuilder(abc.ABC):
    @staticmethod
    @abc.abstractmethod
    def name():
        pass

    @abc.abstractmethod
    def build(self, dim=2, degree=1, n_spans=1, **params):
        pass

    def _check(self, dim, degree):
        if dim not in (2, 3):
            raise ModelError(f"unsupported dimension {dim}")
        if degree < 1:
            raise ModelError(f"tile degree must be >= 1, got {degree}")


class IdentityTile(TileBuilder):
    @staticmethod
    def name():
        return "identity"

    def build(self, dim=2, degree=1, n_spans=1):
        self._check(dim, degree)
        patch = greville_patch(lambda x: x.copy(), (degree, ) * dim,
                               _counts(n_spans, dim))
        return TileGeometry((patch, ))


class CrossTile(TileBuilder):
    """Central box with one arm per cube face; the waist narrows arms at the cube faces."""
    @staticmethod
    def name():
        return "cross"

    def build(self, dim=2, degree=1, n_spans=1, arm=0.3, waist=0.0):
        self._check(dim, degree)
        if not 0.0 < arm < 0.5:
            raise ModelError(f"cross arm length must lie in (0, 0.5), got {arm}")
        if not 0.0 <= waist < 0.5 - arm:
            raise ModelError(f"cross waist must lie in [0, {0.5 - arm}), got {waist}")
        degrees = (degree, ) * dim
        spans = _counts(n_spans, dim)
        patches = [greville_patch(lambda x: arm + (1 - 2 * arm) * x, degrees, spans)]
        for axis in range(dim):
            for side in (0, 1):
                patches.append(
                    greville_patch(self._arm_map(axis, side, arm, waist), degrees,
                                   spans))
        return TileGeometry(tuple(patches))

    @staticmethod
    def _arm_map(axis, side, arm, waist):
        def fn(theta):
            x = np.empty_like(theta)
            along = theta[:, axis]
            x[:, axis] = arm * along if side == 0 else (1 - arm) + arm * along
            inward = along if side == 0 else 1 - along
            lo = arm + waist * (1 - inward)
            hi = (1 - arm) - waist * (1 - inward)
            for k in range(theta.shape[1]):
                if k != axis:
                    x[:, k] = lo + theta[:, k] * (hi - lo)
            return x

        return fn


_QUARTER_TURNS = [
    np.array([[1, 0], [0, 1]]),
    np.array([[0, -1], [1, 0]]),
    np.array([[-1, 0], [0, -1]]),
    np.array([[0, 1], [-1, 0]]),
]


class FrameTile(TileBuilder):
    """Four trapezoidal patches around a square hole, extruded in 3D."""
    @staticmethod
    def name():
        return "frame"

    def build(self, dim=2, degree=1, n_spans=1, hole=0.25):
        self._check(dim, degree)
        if not 0.0 < hole < 0.5:
            raise ModelError(f"frame hole half-width must lie in (0, 0.5), got {hole}")
        margin = 0.5 - hole
        degrees = (degree, ) * dim
        spans = _counts(n_spans, dim)
        patches = []
        for turn in _QUARTER_TURNS:

            def fn(theta, turn=turn):
                s, t = theta[:, 0], theta[:, 1]
                bottom = np.stack([(1 - t) * s + t * (margin + s * (1 - 2 * margin)),
                                   t * margin], axis=-1)
                x = np.empty_like(theta)
                x[:, :2] = 0.5 + (bottom - 0.5) @ turn.T
                if theta.shape[1] == 3:
                    x[:, 2] = theta[:, 2]
                return x

            patches.append(greville_patch(fn, degrees, spans))
        return TileGeometry(tuple(patches))


class MacroBuilder(abc.ABC):
    @staticmethod
    @abc.abstractmethod
    def name():
        pass

    @abc.abstractmethod
    def build(self, dim=2, n_elements=2, **params):
        pass


class CubeMacro(MacroBuilder):
    @staticmethod
    def name():
        return "cube"

    def build(self, dim=2, n_elements=2, length=1.0, degree=1):
        patch = greville_patch(lambda x: length * x, (degree, ) * dim,
                               _counts(n_elements, dim))
        return MacroGeometry(patch)


class AffineMacro(MacroBuilder):
    @staticmethod
    def name():
        return "affine"

    def build(self, dim=2, n_elements=2, matrix=None, offset=None, degree=1):
        if matrix is None:
            matrix = np.eye(dim) + 0.25 * np.triu(np.ones((dim, dim)), 1)
            matrix[-1, 0] += 0.1
        matrix = np.asarray(matrix, dtype=float)
        offset = np.zeros(dim) if offset is None else np.asarray(offset, dtype=float)
        if matrix.shape != (dim, dim) or not np.linalg.det(matrix) > 0:
            raise ModelError("affine macro needs a square matrix with positive determinant")
        patch = greville_patch(lambda x: x @ matrix.T + offset, (degree, ) * dim,
                               _counts(n_elements, dim))
        return MacroGeometry(patch)


def _annulus_control_points(radii, dim, height):
    points = []
    for r in radii:
        for x, y in ((r, 0.0), (r, r), (0.0, r)):
            if dim == 2:
                points.append((x, y))
            else:
                points.extend([(x, y, 0.0), (x, y, height)])
    return np.array(points)


class ArcMacro(MacroBuilder):
    """Exact quarter annulus (NURBS), radial then angular direction."""
    @staticmethod
    def name():
        return "arc"

    def build(self, dim=2, n_elements=2, inner=1.0, outer=2.0, height=1.0):
        weights = np.tile(
            np.repeat([1.0, np.sqrt(0.5), 1.0], 1 if dim == 2 else 2), 2)
        degrees = (1, 2) if dim == 2 else (1, 2, 1)
        kvs = tuple(KnotVector.uniform(p, 1) for p in degrees)
        coarse = SplinePatch(kvs, _annulus_control_points((inner, outer), dim,
                                                          height), weights)
        return MacroGeometry(refine_patch(coarse, _counts(n_elements, dim)))


class BentMacro(MacroBuilder):
    """Polynomial quadratic counterpart of the annulus."""
    @staticmethod
    def name():
        return "bent"

    def build(self, dim=2, n_elements=2, inner=1.0, outer=2.0, height=1.0):
        degrees = (2, 2) if dim == 2 else (2, 2, 1)
        kvs = tuple(KnotVector.uniform(p, 1) for p in degrees)
        coarse = SplinePatch(
            kvs,
            _annulus_control_points((inner, 0.5 * (inner + outer), outer), dim,
                                    height))
        return MacroGeometry(refine_patch(coarse, _counts(n_elements, dim)))


class TwistMacro(MacroBuilder):
    """Unit square section rotated about the axis while running along x3."""
    @staticmethod
    def name():
        return "twist"

    def build(self, dim=3, n_elements=2, angle=np.pi / 4, length=1.0, degree=2):
        if dim != 3:
            raise ModelError("the twist macro is three-dimensional")

        def fn(xi):
            phi = angle * xi[:, 2]
            c, s = np.cos(phi), np.sin(phi)
            a, b = xi[:, 0] - 0.5, xi[:, 1] - 0.5
            return np.stack([0.5 + c * a - s * b, 0.5 + s * a + c * b,
                             length * xi[:, 2]], axis=-1)

        return MacroGeometry(
            interpolated_patch(fn, (1, 1, degree), _counts(n_elements, dim)))


class RodMacro(MacroBuilder):
    @staticmethod
    def name():
        return "rod"

    def build(self, dim=2, n_elements=(4, 1, 1), length=4.0, degree=1):
        counts = _counts(np.asarray(n_elements)[:dim] if np.ndim(n_elements) else
                         n_elements, dim)
        scale = np.ones(dim)
        scale[0] = length
        return MacroGeometry(
            greville_patch(lambda x: x * scale, (degree, ) * dim, counts))


tiles = {cls.name(): cls for cls in (IdentityTile, CrossTile, FrameTile)}
macros = {
    cls.name(): cls
    for cls in (CubeMacro, AffineMacro, ArcMacro, BentMacro, TwistMacro,
                RodMacro)
}


def tile_names():
    return list(tiles)


def macro_names():
    return list(macros)


def make_tile(name, dim=2, **params):
    if name not in tiles:
        raise ModelError(f"unknown tile {name!r}, choose from {tile_names()}")
    return tiles[name]().build(dim=dim, **params)


def make_macro(name, dim=2, **params):
    if name not in macros:
        raise ModelError(f"unknown macro {name!r}, choose from {macro_names()}")
    return macros[name]().build(dim=dim, **params)


LOADS = ("traction", "gravity", "displacement", "none")


def make_bcs(dim, load="traction", value=None):
    """Face 1 clamped, loaded on the opposite face (or by gravity)."""
    if load == "none":
        return BoundaryConditions()
    clamp = DirichletCondition(0, np.zeros(dim))
    if load == "traction":
        value = np.eye(dim)[0] if value is None else np.asarray(value, dtype=float)
        return BoundaryConditions((clamp, ), (Traction(1, value), ))
    if load == "gravity":
        value = -np.eye(dim)[dim - 1] if value is None else np.asarray(value, dtype=float)
        return BoundaryConditions((clamp, ), (), value)
    if load == "displacement":
        value = 0.1 * np.eye(dim)[0] if value is None else np.asarray(value, dtype=float)
        return BoundaryConditions((clamp, DirichletCondition(1, value)))
    raise ModelError(f"unknown load case {load!r}, choose from {LOADS}")


def make_model(tile="identity", macro="cube", dim=2, tile_params=None,
               macro_params=None, young_modulus=1.0, poisson_ratio=0.3,
               load="traction", value=None, p_proj=None, tol=None,
               tile_order=None, oracle_order=None):
    """Composed model of a gallery tile on a gallery macro map."""
    model = ComposedModel(make_tile(tile, dim, **(tile_params or {})),
                          make_macro(macro, dim, **(macro_params or {})),
                          Material(young_modulus, poisson_ratio),
                          make_bcs(dim, load, value),
                          QuadratureSettings(tile_order, oracle_order),
                          ProjectionSettings(tol, None if p_proj is None else
                                             tuple(np.broadcast_to(p_proj, (dim, )).tolist())))
    log.debug(f"gallery model {tile}/{macro} in {dim}D: {model.n_dof} DOFs")
    return model
