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

from msiga.errors import (DegenerateElementError, ModelError,
                          TileNotConformingError, UnsupportedLoadError)
from msiga.gallery import make_macro, make_model, make_tile
from msiga.model import (BoundaryConditions, ComposedModel, DirichletCondition,
                         MacroGeometry, Material, TileGeometry, Traction,
                         composed_control_points, eval_composed, interface_gap,
                         load_model, parse_face, save_model, tile_quadrature,
                         validate_model)
from msiga.splines import KnotVector, SplinePatch


def box_patch(lo, hi):
    kvs = (KnotVector.uniform(1), KnotVector.uniform(1))
    cps = [[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], lo[1]], [hi[0], hi[1]]]
    return SplinePatch(kvs, cps)


def test_identity_tile_dofs():
    model = make_model("identity", "cube", 2, macro_params={"n_elements": 2})
    assert model.dof_map.n_tile == 4
    assert model.dof_map.n_global == 9
    assert model.n_dof == 18
    labels = model.dof_map.global_indices
    assert labels[0, 2] == labels[2, 0]
    assert labels[0, 1] == labels[1, 0]


def test_cross_and_frame_dofs():
    cross = make_model("cross", "cube", 2, macro_params={"n_elements": 2})
    assert cross.dof_map.n_tile == 12
    assert cross.dof_map.n_global == 40
    assert all(len(s) == 2 for s in cross.dof_map.face_sets)
    frame = make_model("frame", "cube", 2, macro_params={"n_elements": 2})
    assert frame.dof_map.n_tile == 8
    # outer corners shared on a 3x3 lattice, hole corners private to each element
    assert frame.dof_map.n_global == 3 * 3 + 4 * 4


def test_cross_3d_dofs():
    model = make_model("cross", "cube", 3, macro_params={"n_elements": 1})
    assert model.dof_map.n_tile == 8 + 6 * 4
    assert model.n_dof == 3 * 32


def test_tile_quadrature_volumes():
    for name, volume in (("identity", 1.0), ("cross", 0.64), ("frame", 0.75)):
        model = make_model(name, "cube", 2, macro_params={"n_elements": 1})
        quad = tile_quadrature(model.tile, model.dof_map)
        assert sum(q.weights.sum() for q in quad) == pytest.approx(volume)


def test_nonconforming_tile():
    tile = TileGeometry((box_patch((0, 0), (1, 0.4)), box_patch((0, 0.6),
                                                                (0.5, 1))))
    macro = make_macro("rod", 2, n_elements=(2, 1), length=2.0)
    with pytest.raises(TileNotConformingError):
        ComposedModel(tile, macro, Material(1.0, 0.3))


def test_tile_outside_unit_cube():
    with pytest.raises(ModelError):
        TileGeometry((box_patch((0, 0), (1.5, 1)), ))


def test_degenerate_macro():
    kvs = (KnotVector.uniform(1), KnotVector.uniform(1))
    mirrored = SplinePatch(kvs, [[1, 0], [1, 1], [0, 0], [0, 1]])
    model = ComposedModel(make_tile("identity"), MacroGeometry(mirrored),
                          Material(1.0, 0.3))
    with pytest.raises(DegenerateElementError):
        validate_model(model)


def test_validate_gallery_models():
    for macro in ("cube", "affine", "arc", "bent"):
        assert validate_model(make_model("cross", macro, 2))
    assert interface_gap(make_model("identity", "arc", 2)) < 1e-12


def test_material_and_faces():
    with pytest.raises(ModelError):
        Material(1.0, 0.5)
    with pytest.raises(ModelError):
        Material(0.0, 0.3)
    lam, mu = Material(1.0, 0.25).lame
    assert lam == pytest.approx(0.4)
    assert mu == pytest.approx(0.4)
    assert parse_face(4, 2) == 3
    with pytest.raises(ModelError):
        parse_face(0, 2)
    with pytest.raises(ModelError):
        parse_face(7, 3)


def test_traction_on_dirichlet_face():
    with pytest.raises(UnsupportedLoadError):
        BoundaryConditions((DirichletCondition(1, np.zeros(2)), ),
                           (Traction(1, np.ones(2)), ))


def test_composed_points():
    model = make_model("identity", "affine", 2, macro_params={"n_elements": 2})
    matrix = np.array([[1.0, 0.25], [0.1, 1.0]])
    x = composed_control_points(model, 3)
    y = 0.5 + 0.5 * model.dof_map.tile_points
    assert np.allclose(x, y @ matrix.T)
    pos, jac = eval_composed(model, 0, 0, np.array([0.5, 0.5]))
    assert np.allclose(pos, matrix @ [0.25, 0.25])
    assert np.allclose(jac, 0.5 * matrix)


def test_composed_map_degree():
    base = make_tile("identity", 2, degree=2).patches[0]
    cps = base.control_points.copy()
    cps[4] += [0.2, -0.15]
    tile = TileGeometry((SplinePatch(base.knot_vectors, cps), ))
    coarse = make_macro("cube", 2, n_elements=1, degree=2).patch
    cps = coarse.control_points.copy()
    cps[4] += [0.25, 0.2]
    macro = MacroGeometry(SplinePatch(coarse.knot_vectors, cps))
    model = ComposedModel(tile, macro, Material(1.0, 0.3))
    # d * p_M * p_T along any parameter line
    degree = 2 * 2 * 2
    nodes = 0.5 - 0.5 * np.cos(np.pi * np.arange(degree + 1) / degree)
    check = np.linspace(0.03, 0.97, 11)
    for axis in range(2):
        for level in (0.2, 0.65):
            theta = np.full((degree + 1, 2), level)
            theta[:, axis] = nodes
            x, _ = eval_composed(model, 0, 0, theta)
            between = np.full((len(check), 2), level)
            between[:, axis] = check
            exact, _ = eval_composed(model, 0, 0, between)
            fit = np.polynomial.polynomial.polyfit(nodes, x, degree)
            assert np.allclose(
                np.polynomial.polynomial.polyval(check, fit).T, exact,
                rtol=1e-10, atol=1e-10)


def test_model_file_round_trip(tmp_path):
    model = make_model("cross", "arc", 2, load="traction", p_proj=3,
                       oracle_order=5)
    path = str(tmp_path / "model.json")
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.n_dof == model.n_dof
    assert loaded.macro.is_rational
    assert np.allclose(loaded.macro.patch.control_points,
                       model.macro.patch.control_points)
    assert loaded.projection.degrees == (3, 3)
    assert loaded.quadrature.oracle_order == 5
    assert loaded.bcs.traction_faces() == [1]
    assert np.array_equal(loaded.dof_map.global_indices,
                          model.dof_map.global_indices)


def test_model_file_missing_field(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"dimension": 2, "tile": {"patches": []}}')
    with pytest.raises(ModelError):
        load_model(str(path))


if __name__ == "__main__":
    import pathlib
    import tempfile
    test_identity_tile_dofs()
    test_cross_and_frame_dofs()
    test_cross_3d_dofs()
    test_tile_quadrature_volumes()
    test_nonconforming_tile()
    test_tile_outside_unit_cube()
    test_degenerate_macro()
    test_validate_gallery_models()
    test_material_and_faces()
    test_traction_on_dirichlet_face()
    test_composed_points()
    test_composed_map_degree()
    test_model_file_round_trip(pathlib.Path(tempfile.mkdtemp()))
    test_model_file_missing_field(pathlib.Path(tempfile.mkdtemp()))
