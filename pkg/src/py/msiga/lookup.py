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
Micro-scale lookup tables of the reference tile.

All integrals are pulled back to the tile parameter space, so the tile map
is never inverted. The stiffness table stores the pairs A <= B only.
"""
import dataclasses
import hashlib
import json
import logging
import os
import struct
import tempfile
from typing import Tuple

import numpy as np

from .errors import CacheError, CacheKeyMismatch, DimensionMismatchError
from .model import tile_face_quadrature, tile_quadrature
from .quadrature import span_boxes
from .splines import patch_basis
from .utils import parallel_map

log = logging.getLogger(__name__)

MAGIC = b"MSLT"
VERSION = 1


@dataclasses.dataclass(frozen=True, eq=False)
class SparsityPattern:
    rows: np.ndarray
    cols: np.ndarray
    n_tile: int

    @classmethod
    def from_keys(cls, keys, n_tile):
        keys = np.unique(np.asarray(keys, dtype=np.int64))
        return cls(keys // n_tile, keys % n_tile, n_tile)

    @property
    def n_nz(self):
        return len(self.rows)

    @property
    def pairs(self):
        return np.stack([self.rows, self.cols], axis=-1)

    @property
    def offsets(self):
        return np.searchsorted(self.rows, np.arange(self.n_tile + 1))

    @property
    def keys(self):
        return self.rows * self.n_tile + self.cols

    @property
    def diagonal(self):
        return self.rows == self.cols

    def locate(self, a, b):
        keys = np.asarray(a, dtype=np.int64) * self.n_tile + np.asarray(b)
        pos = np.searchsorted(self.keys, keys)
        assert np.all(self.keys[np.minimum(pos, self.n_nz - 1)] == keys), \
            "pair outside the sparsity pattern"
        return pos


def _span_functions(patch, local):
    centers = span_boxes(patch).mean(axis=2)
    idx, _, _, _ = patch_basis(patch, centers, 0)
    return local[idx]


def build_sparsity(tile, dof_map):
    """All tile-local pairs A <= B whose supports share a knot span."""
    n = dof_map.n_tile
    keys = []
    for i, patch in enumerate(tile.patches):
        active = _span_functions(patch, dof_map.tile_local[i])
        lo = np.minimum(active[:, :, None], active[:, None, :])
        hi = np.maximum(active[:, :, None], active[:, None, :])
        keys.append((lo * n + hi).ravel())
    pattern = SparsityPattern.from_keys(np.concatenate(keys), n)
    log.debug(f"sparsity pattern: n_T={n}, n_nz={pattern.n_nz}")
    return pattern


@dataclasses.dataclass(frozen=True, eq=False)
class TileData:
    """Tabulated tile: quadrature of patch interiors and of cube-face patches."""
    tile: object
    dof_map: object
    order: int
    volume: list
    faces: list

    @property
    def dim(self):
        return self.tile.dim

    @property
    def n_tile(self):
        return self.dof_map.n_tile


def tabulate_tile(model, order=None):
    return TileData(model.tile, model.dof_map, order,
                    tile_quadrature(model.tile, model.dof_map, order),
                    tile_face_quadrature(model.tile, model.dof_map, order))


def build_volume_table(tile, space):
    """t^h and its folded form t_pi^h = M^-1 t^h."""
    t_h = np.zeros(space.n)
    for qp in tile.volume:
        images = qp.images.reshape(-1, tile.dim)
        t_h += space.basis(images).T @ qp.weights.ravel()
    return t_h, space.solve(t_h)


def build_stiffness_table(tile, space, sparsity, threads=1):
    """mat[K], shape (n_nz, n_pi * d * d) with columns ordered (C, i, j)."""
    dim = tile.dim
    n_pi = space.n
    table = np.zeros((sparsity.n_nz, n_pi, dim, dim))
    for qp in tile.volume:
        basis = space.basis(qp.images.reshape(-1, dim)).reshape(
            qp.n_spans, -1, n_pi)

        def span(s, qp=qp, basis=basis):
            grads = qp.grads[s]
            n_pts, q, _ = grads.shape
            weighted = grads * qp.weights[s][:, None, None]
            left = np.einsum("xai,xc->aicx", weighted, basis[s]).reshape(-1, n_pts)
            local = (left @ grads.reshape(n_pts, -1)).reshape(q, dim, n_pi, q, dim)
            idx = qp.indices[s]
            a, b = np.nonzero(idx[:, None] <= idx[None, :])
            rows = sparsity.locate(idx[a], idx[b])
            return rows, local[a, :, :, b, :].transpose(0, 2, 1, 3)

        for rows, values in parallel_map(span, range(qp.n_spans), threads):
            table[rows] += values
    return table.reshape(sparsity.n_nz, -1)


def build_load_table(tile, space):
    """F[A, C, s]: slot 0 volume integrals, slot 1 + face the cube-face integrals."""
    dim = tile.dim
    table = np.zeros((tile.n_tile, space.n, 1 + 2 * dim))
    for qp in tile.volume:
        basis = space.basis(qp.images.reshape(-1, dim)).reshape(
            qp.n_spans, -1, space.n)
        for s in range(qp.n_spans):
            weighted = qp.values[s] * qp.weights[s][:, None]
            table[qp.indices[s], :, 0] += weighted.T @ basis[s]
    for fq in tile.faces:
        s_count, n_pts, _ = fq.values.shape
        basis = space.basis(fq.images.reshape(-1, dim)).reshape(
            s_count, n_pts, space.n)
        for s in range(s_count):
            weighted = fq.values[s] * fq.weights[s][:, None]
            table[fq.indices[s], :, 1 + fq.cube_face] += weighted.T @ basis[s]
    return table


def tile_hash(tile):
    text = json.dumps(tile.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).digest()


@dataclasses.dataclass(frozen=True)
class CacheKey:
    tile_hash: bytes
    degrees: Tuple[int, ...]
    quad_order: int

    def file_name(self):
        degrees = "_".join(str(p) for p in self.degrees)
        return f"{self.tile_hash.hex()[:16]}-p{degrees}-q{self.quad_order}.mslt"


@dataclasses.dataclass(frozen=True, eq=False)
class LookupTables:
    sparsity: SparsityPattern
    t_h: np.ndarray
    t_pi: np.ndarray
    mat_k: np.ndarray
    load: np.ndarray
    key: CacheKey
    dim: int

    @property
    def degrees(self):
        return self.key.degrees

    @property
    def n_tile(self):
        return self.sparsity.n_tile

    @property
    def n_pi(self):
        return len(self.t_h)

    @property
    def n_nz(self):
        return self.sparsity.n_nz

    def stiffness_tensor(self):
        """Logical view K[n, C, i, j] of the stored rows n = (A, B)."""
        return self.mat_k.reshape(self.n_nz, self.n_pi, self.dim, self.dim)

    def check(self, space, n_tile=None):
        if tuple(space.degrees) != tuple(self.degrees) or space.n != self.n_pi:
            raise DimensionMismatchError(
                f"tables built for degrees {self.degrees}, projection uses "
                f"{space.degrees}")
        if n_tile is not None and n_tile != self.n_tile:
            raise DimensionMismatchError(
                f"tables built for n_T={self.n_tile}, model has n_T={n_tile}")


def default_tile_order(tile, degrees):
    """Tile Gauss order exact for affine patches against the Bernstein factors."""
    p_tile = tile.max_degree
    return p_tile + (max(degrees) * p_tile + 1) // 2 + 1


def cache_key(model, degrees, order=None):
    if order is None:
        order = default_tile_order(model.tile, degrees)
    return CacheKey(tile_hash(model.tile), tuple(int(p) for p in degrees),
                    int(order))


def build_tables(model, space, order=None, threads=1):
    if order is None:
        order = default_tile_order(model.tile, space.degrees)
    tile = tabulate_tile(model, order)
    sparsity = build_sparsity(model.tile, model.dof_map)
    t_h, t_pi = build_volume_table(tile, space)
    mat_k = build_stiffness_table(tile, space, sparsity, threads)
    load = build_load_table(tile, space)
    log.info(f"built lookup tables: n_T={tile.n_tile}, n_pi={space.n}, "
             f"n_nz={sparsity.n_nz}")
    return LookupTables(sparsity, t_h, t_pi, mat_k, load,
                        cache_key(model, space.degrees, order), model.dim)


def _header_format(dim):
    return "<4sB32sB" + "B" * dim + "BIIQ"


def cache_store(tables, path):
    key = tables.key
    header = struct.pack(_header_format(tables.dim), MAGIC, VERSION,
                         key.tile_hash, tables.dim, *key.degrees,
                         key.quad_order, tables.n_tile, tables.n_pi,
                         tables.n_nz)
    body = [
        tables.sparsity.pairs.astype("<u4").tobytes(),
        tables.t_h.astype("<f8").tobytes(),
        tables.t_pi.astype("<f8").tobytes(),
        tables.mat_k.astype("<f8").tobytes(),
        tables.load.astype("<f8").tobytes()
    ]
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    with os.fdopen(fd, "wb") as f:
        f.write(header)
        for chunk in body:
            f.write(chunk)
    os.replace(tmp, path)
    log.debug(f"stored lookup tables in {path}")
    return path


def cache_load(path, expected=None):
    """Read a cache file; raises CacheError on damage and CacheKeyMismatch on another key."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 6 or data[:4] != MAGIC:
        raise CacheError(f"{path}: not a lookup table cache (bad magic)")
    if data[4] != VERSION:
        raise CacheError(f"{path}: unsupported cache version {data[4]}")
    if len(data) < 38:
        raise CacheError(f"{path}: truncated header")
    dim = data[37]
    if dim not in (2, 3):
        raise CacheError(f"{path}: corrupt header (dimension {dim})")
    fmt = _header_format(dim)
    size = struct.calcsize(fmt)
    if len(data) < size:
        raise CacheError(f"{path}: truncated header")
    fields = struct.unpack(fmt, data[:size])
    digest = fields[2]
    degrees = tuple(fields[4:4 + dim])
    quad_order, n_tile, n_pi, n_nz = fields[4 + dim:]
    counts = [2 * n_nz, n_pi, n_pi, n_nz * n_pi * dim * dim,
              n_tile * n_pi * (1 + 2 * dim)]
    expected_size = size + 4 * counts[0] + 8 * sum(counts[1:])
    if len(data) != expected_size or n_pi != int(np.prod([p + 1 for p in degrees])):
        raise CacheError(f"{path}: corrupt cache file ({len(data)} bytes, "
                         f"expected {expected_size})")
    key = CacheKey(digest, degrees, quad_order)
    if expected is not None and key != expected:
        raise CacheKeyMismatch(f"{path}: cache key does not match the request")
    offset = size
    pairs = np.frombuffer(data, "<u4", counts[0], offset).reshape(n_nz, 2)
    offset += 4 * counts[0]
    arrays = []
    for count in counts[1:]:
        arrays.append(np.frombuffer(data, "<f8", count, offset).copy())
        offset += 8 * count
    rows = pairs[:, 0].astype(np.int64)
    cols = pairs[:, 1].astype(np.int64)
    if n_nz and (np.any(rows > cols) or np.any(np.diff(rows * n_tile + cols) <= 0)):
        raise CacheError(f"{path}: corrupt sparsity pattern")
    sparsity = SparsityPattern(rows, cols, n_tile)
    return LookupTables(sparsity, arrays[0], arrays[1],
                        arrays[2].reshape(n_nz, n_pi * dim * dim),
                        arrays[3].reshape(n_tile, n_pi, 1 + 2 * dim), key, dim)


def cache_path(cache_dir, key):
    return os.path.join(cache_dir, key.file_name())


def load_or_build_tables(model, space, cfg):
    """
    Tables for the model tile and space, through the cache directory of cfg.

    :return: (tables, cache hit)
    """
    order = cfg.tile_order
    if not cfg.use_cache or not cfg.cache_dir:
        return build_tables(model, space, order, cfg.threads), False
    key = cache_key(model, space.degrees, order)
    path = cache_path(cfg.cache_dir, key)
    if os.path.exists(path):
        try:
            tables = cache_load(path, key)
            log.info(f"lookup table cache hit: {path}")
            return tables, True
        except CacheKeyMismatch:
            log.warning(f"stale lookup table cache {path}, rebuilding")
    else:
        log.info(f"lookup table cache miss: {path}")
    tables = build_tables(model, space, order, cfg.threads)
    try:
        cache_store(tables, path)
    except OSError as err:
        log.warning(f"could not write lookup table cache {path}: {err}")
    return tables, False
