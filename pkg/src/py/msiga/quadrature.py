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
import functools
import itertools

import numpy as np

from .errors import DomainError


@functools.lru_cache(maxsize=None)
def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    nodes = 0.5 * (x + 1.0)
    weights = 0.5 * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def gauss_rule(n):
    """
    Gauss-Legendre rule with n points on [0,1].

    :return: nodes, weights
    """
    n = int(n)
    if not 1 <= n <= 64:
        raise DomainError(f"Gauss rule needs 1 <= n <= 64 points, got {n}")
    return _gauss(n)


def tensor_rule(orders, boxes=None):
    """
    Tensor Gauss rule, optionally mapped onto a parameter box.

    :param orders: points per direction
    :param boxes: (dim, 2) lower/upper bounds, the unit box when None
    :return: points (m, dim), weights (m,)
    """
    rules = [gauss_rule(n) for n in orders]
    if boxes is not None:
        boxes = np.asarray(boxes, dtype=float)
        rules = [(lo + (hi - lo) * x, (hi - lo) * w)
                 for (x, w), (lo, hi) in zip(rules, boxes)]
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=-1)
    weights = functools.reduce(np.multiply.outer, [r[1] for r in rules])
    return points, np.asarray(weights).ravel()


def span_boxes(patch):
    """Parameter boxes of all nonzero knot spans, in C order."""
    breaks = [kv.breaks for kv in patch.knot_vectors]
    boxes = []
    for grid_index in itertools.product(*[range(len(b) - 1) for b in breaks]):
        boxes.append([(breaks[k][e], breaks[k][e + 1])
                      for k, e in enumerate(grid_index)])
    return np.array(boxes, dtype=float).reshape(-1, patch.dim_param, 2)


def sample_grid(n, dim):
    """Uniform tensor grid with n points per direction on [0,1]^dim."""
    axis = np.linspace(0.0, 1.0, n)
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)
