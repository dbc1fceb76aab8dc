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
Problem container: reference tile, macro geometry, material, boundary
conditions and the global DOF coupling of the composed structure.

Faces are numbered 0..2d-1 internally (face = 2 * axis + side, side 0 at
parameter 0) and 1..2d in model files.
"""
import dataclasses
import json
import logging
from typing import Callable, Optional, Tuple, Union

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph
import scipy.spatial

from .errors import (DegenerateElementError, ModelError, RationalMacroError,
                     SingularTileError, TileNotConformingError,
                     UnsupportedLoadError)
from .quadrature import sample_grid, span_boxes, tensor_rule
from .splines import (BezierElement, SplinePatch, bezier_extract, eval_patch,
                      patch_basis)

log = logging.getLogger(__name__)

MERGE_TOL = 1e-10
FACE_TOL = 1e-12


def face_axis(face):
    return face // 2, face % 2


def face_label(face):
    return face + 1


def parse_face(label, dim):
    face = int(label) - 1
    if not 0 <= face < 2 * dim:
        raise ModelError(f"face label {label} outside 1..{2 * dim}")
    return face


def patch_face_indices(patch, face):
    """Control points of a patch lying on one of its parametric faces."""
    axis, side = face_axis(face)
    grid = np.arange(patch.n_control).reshape(patch.shape)
    index = [slice(None)] * patch.dim_param
    index[axis] = 0 if side == 0 else patch.shape[axis] - 1
    return grid[tuple(index)].ravel()


def detect_face_markers(patch):
    markers = {}
    cps = patch.control_points
    for face in range(2 * patch.dim_param):
        pts = cps[patch_face_indices(patch, face)]
        for cube_face in range(2 * patch.dim):
            axis, side = face_axis(cube_face)
            if np.all(np.abs(pts[:, axis] - side) < FACE_TOL):
                markers[face] = cube_face
                break
    return markers


@dataclasses.dataclass(frozen=True, eq=False)
class TileGeometry:
    patches: Tuple[SplinePatch, ...]
    face_markers: Optional[Tuple[dict, ...]] = None

    def __post_init__(self):
        patches = tuple(self.patches)
        if not patches:
            raise ModelError("tile needs at least one patch")
        dim = patches[0].dim
        for i, patch in enumerate(patches):
            if patch.dim != dim or patch.dim_param != dim:
                raise ModelError(
                    f"tile patch {i} maps R^{patch.dim_param} to R^{patch.dim}, "
                    f"expected R^{dim} to R^{dim}")
            cps = patch.control_points
            if cps.min() < -FACE_TOL or cps.max() > 1 + FACE_TOL:
                raise ModelError(
                    f"tile patch {i} has control points outside [0,1]^{dim}")
        markers = self.face_markers
        if markers is None:
            markers = tuple(detect_face_markers(p) for p in patches)
        else:
            markers = tuple(dict(m or {}) for m in markers)
            if len(markers) != len(patches):
                raise ModelError("one face marker table per tile patch expected")
            for i, (patch, table) in enumerate(zip(patches, markers)):
                for face, cube_face in table.items():
                    axis, side = face_axis(cube_face)
                    pts = patch.control_points[patch_face_indices(patch, face)]
                    if np.any(np.abs(pts[:, axis] - side) >= FACE_TOL):
                        raise ModelError(
                            f"tile patch {i} face {face_label(face)} is marked on "
                            f"cube face {face_label(cube_face)} but does not lie on it"
                        )
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "face_markers", markers)

    @property
    def dim(self):
        return self.patches[0].dim

    @property
    def n_patches(self):
        return len(self.patches)

    @property
    def max_degree(self):
        return max(max(p.degrees) for p in self.patches)

    def cube_face_patches(self, cube_face):
        return [(i, face) for i, table in enumerate(self.face_markers)
                for face, marked in sorted(table.items()) if marked == cube_face]

    def to_dict(self):
        out = []
        for patch, table in zip(self.patches, self.face_markers):
            doc = patch.to_dict()
            doc["face_markers"] = {
                str(face_label(f)): face_label(c)
                for f, c in sorted(table.items())
            }
            out.append(doc)
        return {"patches": out}


@dataclasses.dataclass(frozen=True, eq=False)
class MacroGeometry:
    patch: SplinePatch
    elements: Tuple[BezierElement, ...] = None

    def __post_init__(self):
        if self.patch.dim != self.patch.dim_param:
            raise ModelError("macro map must have equal parametric and physical "
                             "dimension")
        if self.elements is None:
            object.__setattr__(self, "elements", tuple(bezier_extract(
                self.patch)))

    @property
    def dim(self):
        return self.patch.dim

    @property
    def degrees(self):
        return self.patch.degrees

    @property
    def element_shape(self):
        return self.patch.element_shape

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def is_rational(self):
        return self.patch.is_rational

    def neighbors(self, axis):
        """Pairs (e, e') of elements adjacent across their axis faces."""
        shape = self.element_shape
        pairs = []
        for grid_index in np.ndindex(*shape):
            if grid_index[axis] + 1 < shape[axis]:
                nxt = list(grid_index)
                nxt[axis] += 1
                pairs.append((int(np.ravel_multi_index(grid_index, shape)),
                              int(np.ravel_multi_index(tuple(nxt), shape))))
        return pairs

    def boundary_elements(self, face):
        axis, side = face_axis(face)
        last = self.element_shape[axis] - 1
        return [
            e.index for e in self.elements
            if e.grid_index[axis] == (0 if side == 0 else last)
        ]

    def with_control_points(self, control_points):
        return MacroGeometry(self.patch.with_control_points(control_points))

    def to_dict(self):
        return self.patch.to_dict()


@dataclasses.dataclass(frozen=True)
class Material:
    young_modulus: float
    poisson_ratio: float

    def __post_init__(self):
        if not self.young_modulus > 0:
            raise ModelError(f"Young's modulus must be > 0, got {self.young_modulus}")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ModelError(
                f"Poisson ratio must lie in (-1, 0.5), got {self.poisson_ratio}")

    @property
    def lame(self):
        e, nu = self.young_modulus, self.poisson_ratio
        return e * nu / ((1 + nu) * (1 - 2 * nu)), e / (2 * (1 + nu))


@dataclasses.dataclass(frozen=True)
class AffineDisplacement:
    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x):
        return np.asarray(x) @ np.asarray(self.matrix).T + np.asarray(self.offset)

    def to_dict(self):
        return {
            "matrix": np.asarray(self.matrix).tolist(),
            "offset": np.asarray(self.offset).tolist()
        }


@dataclasses.dataclass(frozen=True)
class DirichletCondition:
    face: int
    value: Union[np.ndarray, Callable]

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if callable(self.value):
            return np.asarray(self.value(x), dtype=float).reshape(x.shape)
        return np.broadcast_to(np.asarray(self.value, dtype=float), x.shape)

    def to_dict(self):
        if isinstance(self.value, AffineDisplacement):
            value = self.value.to_dict()
        elif callable(self.value):
            raise ModelError("callable Dirichlet data cannot be serialized")
        else:
            value = np.asarray(self.value, dtype=float).tolist()
        return {"face": face_label(self.face), "value": value}


@dataclasses.dataclass(frozen=True)
class Traction:
    face: int
    value: np.ndarray

    def to_dict(self):
        return {
            "face": face_label(self.face),
            "value": np.asarray(self.value, dtype=float).tolist()
        }


@dataclasses.dataclass(frozen=True, eq=False)
class BoundaryConditions:
    dirichlet: Tuple[DirichletCondition, ...] = ()
    tractions: Tuple[Traction, ...] = ()
    body_force: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "dirichlet", tuple(self.dirichlet))
        object.__setattr__(self, "tractions", tuple(self.tractions))
        fixed = {c.face for c in self.dirichlet}
        for t in self.tractions:
            if t.face in fixed:
                raise UnsupportedLoadError(
                    f"face {face_label(t.face)} carries both a traction and a "
                    "Dirichlet condition")

    def body(self, dim):
        if self.body_force is None:
            return np.zeros(dim)
        return np.asarray(self.body_force, dtype=float)

    def traction_faces(self):
        return sorted({t.face for t in self.tractions})

    def traction(self, face, dim):
        total = np.zeros(dim)
        for t in self.tractions:
            if t.face == face:
                total += np.asarray(t.value, dtype=float)
        return total

    @property
    def has_loads(self):
        return bool(self.tractions) or (self.body_force is not None and
                                        np.any(self.body_force))

    def to_dict(self, dim):
        return {
            "dirichlet": [c.to_dict() for c in self.dirichlet],
            "tractions": [t.to_dict() for t in self.tractions],
            "body_force": self.body(dim).tolist()
        }


@dataclasses.dataclass(frozen=True)
class QuadratureSettings:
    tile_order: Optional[int] = None
    oracle_order: Optional[int] = None


@dataclasses.dataclass(frozen=True)
class ProjectionSettings:
    tol: Optional[float] = None
    degrees: Optional[Tuple[int, ...]] = None


@dataclasses.dataclass(frozen=True, eq=False)
class DofMap:
    n_tile: int
    tile_local: Tuple[np.ndarray, ...]
    global_indices: np.ndarray
    n_global: int
    tile_points: np.ndarray
    face_sets: Tuple[np.ndarray, ...]

    def dofs(self, t, dim):
        return dim * self.global_indices[t][:, None] + np.arange(dim)


def _first_appearance(labels):
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first, kind="stable")
    relabel = np.empty(len(order), dtype=np.int64)
    relabel[order] = np.arange(len(order))
    return relabel[labels]


def _components(n, pairs):
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    graph = scipy.sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = scipy.sparse.csgraph.connected_components(graph,
                                                          directed=False)
    return _first_appearance(labels)


def _merge_tile(tile):
    points, owner, on_face = [], [], []
    for i, patch in enumerate(tile.patches):
        points.append(patch.control_points)
        owner.append(np.full(patch.n_control, i))
        mask = np.zeros(patch.n_control, dtype=bool)
        for face in range(2 * patch.dim_param):
            mask[patch_face_indices(patch, face)] = True
        on_face.append(mask)
    points = np.vstack(points)
    owner = np.concatenate(owner)
    on_face = np.concatenate(on_face)
    candidates = np.flatnonzero(on_face)
    pairs = np.zeros((0, 2), dtype=np.int64)
    if len(candidates) > 1:
        tree = scipy.spatial.cKDTree(points[candidates])
        found = tree.query_pairs(MERGE_TOL, output_type="ndarray")
        if len(found):
            found = candidates[found]
            pairs = found[owner[found[:, 0]] != owner[found[:, 1]]]
    labels = _components(len(points), pairs)
    offsets = np.cumsum([0] + [p.n_control for p in tile.patches])
    tile_local = tuple(labels[offsets[i]:offsets[i + 1]]
                       for i in range(tile.n_patches))
    n_tile = int(labels.max()) + 1
    merged = np.zeros((n_tile, tile.dim))
    merged[labels] = points
    return n_tile, tile_local, merged


def _face_sets(tile, tile_local):
    sets = []
    for cube_face in range(2 * tile.dim):
        members = [
            tile_local[i][patch_face_indices(tile.patches[i], face)]
            for i, face in tile.cube_face_patches(cube_face)
        ]
        sets.append(np.unique(np.concatenate(members)) if members else np.
                    zeros(0, dtype=np.int64))
    return tuple(sets)


def _match_faces(axis, lo, hi, points):
    keep = [k for k in range(points.shape[1]) if k != axis]
    lo_pts = points[lo][:, keep]
    hi_pts = points[hi][:, keep]
    if len(lo) == 0 and len(hi) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if len(lo) == 0 or len(hi) == 0:
        raise TileNotConformingError(axis, points[lo if len(lo) else hi])
    dist, nearest = scipy.spatial.cKDTree(lo_pts).query(hi_pts)
    bad_hi = dist > MERGE_TOL
    matched = np.zeros(len(lo), dtype=bool)
    matched[nearest[~bad_hi]] = True
    if np.any(bad_hi) or not np.all(matched) or len(lo) != len(hi):
        offending = np.vstack([points[hi[bad_hi]], points[lo[~matched]]])
        raise TileNotConformingError(axis, offending)
    return np.stack([hi, lo[nearest]], axis=-1)


def _build_dof_map(tile, macro):
    if tile.dim != macro.dim:
        raise ModelError(
            f"tile dimension {tile.dim} differs from macro dimension {macro.dim}")
    n_tile, tile_local, points = _merge_tile(tile)
    face_sets = _face_sets(tile, tile_local)
    n_elem = macro.n_elements
    pairs = []
    for axis in range(tile.dim):
        if macro.element_shape[axis] < 2:
            continue
        lo, hi = face_sets[2 * axis], face_sets[2 * axis + 1]
        if len(lo) == 0 and len(hi) == 0:
            log.warning(f"tile has no boundary on axis {axis + 1}: tiles are "
                        "not connected along it")
        matches = _match_faces(axis, lo, hi, points)
        for e, nxt in macro.neighbors(axis):
            pairs.append(
                np.stack([e * n_tile + matches[:, 0], nxt * n_tile +
                          matches[:, 1]], axis=-1))
    pairs = np.vstack(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    labels = _components(n_elem * n_tile, pairs).reshape(n_elem, n_tile)
    for t, row in enumerate(labels):
        assert len(np.unique(row)) == n_tile, f"element {t} maps two tile points to one DOF"
    n_global = int(labels.max()) + 1
    log.debug(f"dof map: n_T={n_tile}, m_M={n_elem}, n_global={n_global}")
    return DofMap(n_tile, tile_local, labels, n_global, points, face_sets)


@dataclasses.dataclass(frozen=True, eq=False)
class ComposedModel:
    tile: TileGeometry
    macro: MacroGeometry
    material: Material
    bcs: BoundaryConditions = dataclasses.field(
        default_factory=BoundaryConditions)
    quadrature: QuadratureSettings = dataclasses.field(
        default_factory=QuadratureSettings)
    projection: ProjectionSettings = dataclasses.field(
        default_factory=ProjectionSettings)
    dof_map: Optional[DofMap] = None

    def __post_init__(self):
        if self.tile.dim != self.macro.dim:
            raise ModelError(f"tile dimension {self.tile.dim} differs from "
                             f"macro dimension {self.macro.dim}")
        if self.dim not in (2, 3):
            raise ModelError(f"unsupported dimension {self.dim}")
        for c in self.bcs.dirichlet:
            parse_face(c.face + 1, self.dim)
        for t in self.bcs.tractions:
            parse_face(t.face + 1, self.dim)
            if np.shape(t.value) != (self.dim, ):
                raise ModelError(f"traction on face {face_label(t.face)} needs "
                                 f"{self.dim} components")
        if self.dof_map is None:
            object.__setattr__(self, "dof_map",
                               _build_dof_map(self.tile, self.macro))

    @property
    def dim(self):
        return self.macro.dim

    @property
    def n_dof(self):
        return self.dim * self.dof_map.n_global

    def with_macro(self, macro):
        """Same model on another macro map; the DOF map survives equal element grids."""
        dof_map = self.dof_map if macro.element_shape == self.macro.element_shape else None
        return dataclasses.replace(self, macro=macro, dof_map=dof_map)

    def with_tile(self, tile):
        return dataclasses.replace(self, tile=tile, dof_map=None)


def build_dof_map(model):
    return _build_dof_map(model.tile, model.macro)


def jacobian_det_degree(macro, per_direction=False):
    """Polynomial degree of det J of a B-spline macro map (d * p - 1 per direction)."""
    if macro.is_rational:
        raise RationalMacroError("det J of a rational macro map is not polynomial")
    dim = macro.dim
    degrees = tuple(dim * p - 1 if p > 0 else 0 for p in macro.degrees)
    return degrees if per_direction else max(degrees)


def eval_composed(model, t, patch, theta):
    """Composed position and Jacobian of tile patch `patch` placed in element t."""
    y, jac_t, _ = eval_patch(model.tile.patches[patch], theta, 1)
    single = np.ndim(theta) == 1
    element = model.macro.elements[t]
    x, jac_m, _ = element.evaluate(np.atleast_2d(y), 1)
    if single:
        return x[0], jac_m[0] @ jac_t
    return x, jac_m @ jac_t


def composed_control_points(model, t):
    x, _, _ = model.macro.elements[t].evaluate(model.dof_map.tile_points, 0)
    return x


@dataclasses.dataclass(frozen=True, eq=False)
class TileQuadPatch:
    patch: int
    points: np.ndarray
    weights: np.ndarray
    images: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    grads: np.ndarray
    det: np.ndarray

    @property
    def n_spans(self):
        return self.points.shape[0]


@dataclasses.dataclass(frozen=True, eq=False)
class TileFaceQuad:
    patch: int
    patch_face: int
    cube_face: int
    points: np.ndarray
    weights: np.ndarray
    images: np.ndarray
    indices: np.ndarray
    values: np.ndarray


def _orders(patch, order):
    if order is None:
        return [p + 1 for p in patch.degrees]
    return [int(order)] * patch.dim_param


def _span_rule(patch, boxes, orders):
    pts, wts = [], []
    for box in boxes:
        p, w = tensor_rule(orders, box)
        pts.append(p)
        wts.append(w)
    return np.stack(pts), np.stack(wts)


def tile_quadrature(tile, dof_map, order=None):
    """Quadrature data of every tile patch, batched over knot spans."""
    out = []
    for i, patch in enumerate(tile.patches):
        boxes = span_boxes(patch)
        points, weights = _span_rule(patch, boxes, _orders(patch, order))
        s, q_pts = weights.shape
        flat = points.reshape(-1, patch.dim_param)
        idx, values, grads, _ = patch_basis(patch, flat, 1)
        cps = patch.control_points[idx]
        images = np.einsum("mq,mqd->md", values, cps)
        jac = np.einsum("mqi,mqd->mdi", grads, cps)
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            k = int(np.argmin(det))
            raise SingularTileError(i, flat[k], det[k])
        grads_y = np.einsum("mqi,mij->mqj", grads, np.linalg.inv(jac))
        nq = idx.shape[1]
        out.append(
            TileQuadPatch(
                i, points, weights * det.reshape(s, q_pts),
                images.reshape(s, q_pts, -1),
                dof_map.tile_local[i][idx.reshape(s, q_pts, nq)[:, 0, :]],
                values.reshape(s, q_pts, nq),
                grads_y.reshape(s, q_pts, nq, -1), det.reshape(s, q_pts)))
    return out


def tile_face_quadrature(tile, dof_map, order=None):
    """Quadrature over tile patch faces lying on unit-cube faces."""
    out = []
    for i, patch in enumerate(tile.patches):
        for face, cube_face in sorted(tile.face_markers[i].items()):
            axis, side = face_axis(face)
            c_axis, c_side = face_axis(cube_face)
            in_face = [k for k in range(patch.dim_param) if k != axis]
            orders = _orders(patch, order)
            boxes = span_boxes(patch)
            keep = np.isclose(boxes[:, axis, 0], boxes[0, axis, 0])
            boxes = boxes[keep].copy()
            boxes[:, axis] = side
            points, weights = [], []
            for box in boxes:
                p, w = tensor_rule([orders[k] for k in in_face], box[in_face])
                full = np.empty((len(p), patch.dim_param))
                full[:, in_face] = p
                full[:, axis] = side
                points.append(full)
                weights.append(w)
            points, weights = np.stack(points), np.stack(weights)
            s, q_pts = weights.shape
            flat = points.reshape(-1, patch.dim_param)
            idx, values, grads, _ = patch_basis(patch, flat, 1)
            cps = patch.control_points[idx]
            images = np.einsum("mq,mqd->md", values, cps)
            images[:, c_axis] = c_side
            jac = np.einsum("mqi,mqd->mdi", grads, cps)
            tangents = jac[:, :, in_face]
            if patch.dim == 3:
                measure = np.linalg.norm(np.cross(tangents[:, :, 0],
                                                  tangents[:, :, 1]),
                                         axis=-1)
            else:
                measure = np.linalg.norm(tangents[:, :, 0], axis=-1)
            nq = idx.shape[1]
            out.append(
                TileFaceQuad(
                    i, face, cube_face, points,
                    weights * measure.reshape(s, q_pts),
                    images.reshape(s, q_pts, -1),
                    dof_map.tile_local[i][idx.reshape(s, q_pts, nq)[:, 0, :]],
                    values.reshape(s, q_pts, nq)))
    return out


def interface_gap(model, n_samples=9):
    """Largest position gap between neighboring macro elements on shared faces."""
    dim = model.dim
    face_pts = sample_grid(n_samples, dim - 1)
    gap = 0.0
    for axis in range(dim):
        keep = [k for k in range(dim) if k != axis]
        hi = np.empty((len(face_pts), dim))
        hi[:, keep] = face_pts
        hi[:, axis] = 1.0
        lo = hi.copy()
        lo[:, axis] = 0.0
        for e, nxt in model.macro.neighbors(axis):
            x_hi, _, _ = model.macro.elements[e].evaluate(hi, 0)
            x_lo, _, _ = model.macro.elements[nxt].evaluate(lo, 0)
            gap = max(gap, float(np.abs(x_hi - x_lo).max()))
    return gap


def validate_model(model, order=None):
    """Check Jacobian positivity at all tile quadrature images and element centers."""
    quad = tile_quadrature(model.tile, model.dof_map, order)
    images = np.vstack([q.images.reshape(-1, model.dim) for q in quad])
    center = np.full((1, model.dim), 0.5)
    samples = np.vstack([images, center])
    for element in model.macro.elements:
        _, jac, _ = element.evaluate(samples, 1)
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            k = int(np.argmin(det))
            raise DegenerateElementError(element.index, samples[k], det[k])
    for cube_face, members in enumerate(model.dof_map.face_sets):
        if len(members) == 0:
            log.warning(f"tile has no boundary on cube face {face_label(cube_face)}")
    for c in model.bcs.dirichlet:
        if len(model.dof_map.face_sets[c.face]) == 0:
            log.warning(f"Dirichlet face {face_label(c.face)} has no tile boundary")
    gap = interface_gap(model)
    if gap > MERGE_TOL:
        raise ModelError(f"composed geometry is discontinuous: gap {gap:.3e}")
    return True


def _parse_patch(doc, dim):
    degrees = doc["degrees"]
    if len(degrees) != dim:
        raise ModelError(f"patch needs {dim} degrees, got {len(degrees)}")
    return SplinePatch.from_arrays(degrees, doc["knots"],
                                   np.asarray(doc["control_points"], dtype=float),
                                   doc.get("weights"))


def _parse_markers(doc, dim):
    raw = doc.get("face_markers")
    if raw is None:
        return None
    items = raw.items() if isinstance(raw, dict) else raw
    return {parse_face(f, dim): parse_face(c, dim) for f, c in items}


def _parse_dirichlet(doc, dim):
    face = parse_face(doc["face"], dim)
    value = doc["value"]
    if isinstance(value, dict):
        value = AffineDisplacement(np.asarray(value["matrix"], dtype=float),
                                   np.asarray(value.get("offset", [0.0] * dim),
                                              dtype=float))
    else:
        value = np.asarray(value, dtype=float)
        if value.shape != (dim, ):
            raise ModelError(f"Dirichlet value needs {dim} components")
    return DirichletCondition(face, value)


def model_from_dict(doc):
    try:
        dim = int(doc["dimension"])
        macro = MacroGeometry(_parse_patch(doc["macro"], dim))
        patches = doc["tile"]["patches"]
        markers = [_parse_markers(p, dim) for p in patches]
        tile = TileGeometry(
            tuple(_parse_patch(p, dim) for p in patches),
            None if all(m is None for m in markers) else tuple(
                m if m is not None else detect_face_markers(
                    _parse_patch(p, dim)) for m, p in zip(markers, patches)))
        mat = doc["material"]
        material = Material(float(mat["E"]), float(mat["nu"]))
        bdoc = doc.get("bcs", {})
        body = bdoc.get("body_force")
        bcs = BoundaryConditions(
            tuple(_parse_dirichlet(c, dim) for c in bdoc.get("dirichlet", [])),
            tuple(
                Traction(parse_face(t["face"], dim),
                         np.asarray(t["value"], dtype=float))
                for t in bdoc.get("tractions", [])),
            None if body is None else np.asarray(body, dtype=float))
        qdoc = doc.get("quadrature", {})
        quadrature = QuadratureSettings(qdoc.get("tile_order"),
                                        qdoc.get("oracle_order"))
        pdoc = doc.get("projection", {})
        degrees = pdoc.get("degrees")
        if isinstance(degrees, int):
            degrees = [degrees] * dim
        projection = ProjectionSettings(
            pdoc.get("tol"), None if degrees is None else tuple(degrees))
    except KeyError as err:
        raise ModelError(f"model file misses field {err}") from err
    return ComposedModel(tile, macro, material, bcs, quadrature, projection)


def load_model(path):
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    log.info(f"loaded model {path}")
    return model_from_dict(doc)


def model_to_dict(model):
    doc = {
        "dimension": model.dim,
        "macro": model.macro.to_dict(),
        "tile": model.tile.to_dict(),
        "material": {
            "E": model.material.young_modulus,
            "nu": model.material.poisson_ratio
        },
        "bcs": model.bcs.to_dict(model.dim)
    }
    quad = {
        k: v
        for k, v in dataclasses.asdict(model.quadrature).items() if v is not None
    }
    if quad:
        doc["quadrature"] = quad
    if model.projection.degrees is not None:
        doc["projection"] = {"degrees": list(model.projection.degrees)}
    elif model.projection.tol is not None:
        doc["projection"] = {"tol": model.projection.tol}
    return doc


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=1)
