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
import numpy as np
import pytest

from msiga.errors import ModelError
from msiga.gallery import (LOADS, greville_patch, interpolated_patch,
                           macro_names, make_bcs, make_macro, make_model,
                           make_tile, tile_names)
from msiga.splines import eval_patch


def random_points(n, dim, seed=0):
    return np.random.default_rng(seed).random((n, dim))


def test_registries():
    assert tile_names() == ["identity", "cross", "frame"]
    assert set(macro_names()) == {"cube", "affine", "arc", "bent", "twist", "rod"}
    with pytest.raises(ModelError):
        make_tile("sponge")
    with pytest.raises(ModelError):
        make_macro("torus")


def test_greville_patch_is_exact_for_affine_maps():
    matrix = np.array([[2.0, 0.5], [-0.3, 1.5]])
    patch = greville_patch(lambda x: x @ matrix.T + 1.0, (2, 3), (2, 1))
    pts = random_points(20, 2)
    x, _, _ = eval_patch(patch, pts)
    assert np.allclose(x, pts @ matrix.T + 1.0)


def test_interpolated_patch_hits_greville_points():
    def fn(x):
        return np.stack([np.sin(x[:, 0]) * x[:, 1], np.cos(x[:, 1])], axis=-1)

    patch = interpolated_patch(fn, (3, 2), (2, 3))
    grids = np.meshgrid(*[kv.greville() for kv in patch.knot_vectors],
                        indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    x, _, _ = eval_patch(patch, pts)
    assert np.allclose(x, fn(pts), atol=1e-12)


def test_tile_parameters():
    with pytest.raises(ModelError):
        make_tile("cross", arm=0.6)
    with pytest.raises(ModelError):
        make_tile("cross", arm=0.3, waist=0.25)
    with pytest.raises(ModelError):
        make_tile("frame", hole=0.5)
    with pytest.raises(ModelError):
        make_tile("identity", 4)
    with pytest.raises(ModelError):
        make_tile("identity", 2, degree=0)
    assert make_tile("cross", 2, degree=2).max_degree == 2
    assert make_tile("frame", 3).n_patches == 4
    assert make_tile("cross", 3).n_patches == 7


def test_cross_waist_narrows_the_arms():
    tile = make_tile("cross", 2, arm=0.3, waist=0.1)
    arm = tile.patches[1]
    x, _, _ = eval_patch(arm, np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(x[0], [0.0, 0.4])
    assert np.allclose(x[1], [0.0, 0.6])
    assert np.allclose(x[2], [0.3, 0.3])


def test_affine_macro():
    macro = make_macro("affine", 2, n_elements=3)
    assert macro.element_shape == (3, 3)
    cps = macro.patch.control_points
    assert np.allclose(cps.max(axis=0), [1.25, 1.1])
    assert np.linalg.det(np.array([[1.0, 0.25], [0.1, 1.0]])) == pytest.approx(0.975)
    with pytest.raises(ModelError):
        make_macro("affine", 2, matrix=[[0.0, 1.0], [1.0, 0.0]])


def test_arc_macro_is_exact():
    macro = make_macro("arc", 2, n_elements=3)
    assert macro.is_rational
    pts = random_points(30, 2, seed=1)
    x, _, _ = eval_patch(macro.patch, pts)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0 + pts[:, 0])
    assert np.all(x >= -1e-14)


def test_bent_macro_is_polynomial():
    macro = make_macro("bent", 2)
    assert not macro.is_rational
    assert macro.degrees == (2, 2)
    assert macro.element_shape == (2, 2)


def test_twist_macro():
    with pytest.raises(ModelError):
        make_macro("twist", 2)
    macro = make_macro("twist", 3, angle=np.pi / 2)
    bottom = random_points(10, 3, seed=2)
    bottom[:, 2] = 0.0
    x, _, _ = eval_patch(macro.patch, bottom)
    assert np.allclose(x, bottom)
    corners = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 1.0]])
    x, _, _ = eval_patch(macro.patch, corners)
    assert np.allclose(x, [[1.0, 0.0, 1.0], [1.0, 1.0, 1.0]])


def test_rod_macro():
    macro = make_macro("rod", 2)
    assert macro.element_shape == (4, 1)
    assert np.allclose(macro.patch.control_points.max(axis=0), [4.0, 1.0])
    assert make_macro("rod", 3).element_shape == (4, 1, 1)
    assert make_macro("rod", 2, n_elements=2, length=2.0).element_shape == (2, 2)


def test_load_cases():
    assert LOADS == ("traction", "gravity", "displacement", "none")
    traction = make_bcs(2)
    assert [c.face for c in traction.dirichlet] == [0]
    assert traction.traction_faces() == [1]
    assert np.allclose(traction.traction(1, 2), [1.0, 0.0])
    gravity = make_bcs(3, "gravity")
    assert np.allclose(gravity.body(3), [0.0, 0.0, -1.0])
    assert not gravity.tractions
    displacement = make_bcs(2, "displacement", value=[0.0, 0.2])
    assert [c.face for c in displacement.dirichlet] == [0, 1]
    assert not displacement.has_loads
    assert not make_bcs(2, "none").dirichlet
    with pytest.raises(ModelError):
        make_bcs(2, "wind")


def test_make_model_settings():
    model = make_model("frame", "arc", 2, p_proj=2, tol=1e-3, tile_order=4,
                       oracle_order=6, young_modulus=210.0, poisson_ratio=0.25)
    assert model.projection.degrees == (2, 2)
    assert model.projection.tol == 1e-3
    assert model.quadrature.tile_order == 4
    assert model.quadrature.oracle_order == 6
    assert model.material.young_modulus == 210.0
    assert make_model().projection.degrees is None
    assert make_model(dim=3, p_proj=(1, 2, 3)).projection.degrees == (1, 2, 3)


if __name__ == "__main__":
    test_registries()
    test_greville_patch_is_exact_for_affine_maps()
    test_interpolated_patch_hits_greville_points()
    test_tile_parameters()
    test_cross_waist_narrows_the_arms()
    test_affine_macro()
    test_arc_macro_is_exact()
    test_bent_macro_is_polynomial()
    test_twist_macro()
    test_rod_macro()
    test_load_cases()
    test_make_model_settings()
