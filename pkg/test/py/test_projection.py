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

from msiga.errors import ProjectionNotConvergedError
from msiga.gallery import make_model
from msiga.projection import (build_space, mass_1d, project_element,
                              project_face, project_model, projection_error,
                              reconstruct, relative_error, select_degree)
from msiga.quadrature import gauss_rule
from msiga.splines import bernstein_1d

AFFINE_DET = 1.0 - 0.25 * 0.1


def test_mass_matrix():
    x, w = gauss_rule(6)
    for p in range(5):
        b = bernstein_1d(p, x)[:, 0, :]
        assert np.allclose(mass_1d(p), b.T @ (w[:, None] * b))


def test_space_layout():
    space = build_space((2, 1))
    assert space.n == 6
    assert space.shape == (3, 2)
    assert list(space.face_sets[0]) == [0, 1]
    assert list(space.face_sets[1]) == [4, 5]
    assert list(space.face_sets[2]) == [0, 2, 4]
    assert list(space.face_sets[3]) == [1, 3, 5]
    assert build_space((2, 1)) is space
    with pytest.raises(ValueError):
        build_space((-1, 2))


def test_polynomials_are_reproduced():
    space = build_space((2, 1))

    def field(pts):
        return np.stack([pts[:, 0]**2 * pts[:, 1] + 1.0, pts[:, 1]], axis=-1)

    coeffs = project_element(space, field, 4)
    pts = np.random.default_rng(0).random((10, 2))
    assert np.allclose(reconstruct(space, coeffs, pts), field(pts))
    assert projection_error(space, coeffs, field) < 1e-12


def test_projection_is_idempotent():
    space = build_space((2, 3))
    rng = np.random.default_rng(5)
    coeffs = rng.standard_normal((space.n, 3))
    again = project_element(space, lambda pts: reconstruct(space, coeffs, pts),
                            5)
    assert np.allclose(again, coeffs, rtol=1e-12, atol=1e-12)

    def field(pts):
        return np.stack([np.exp(pts[:, 0]) * np.cos(2 * pts[:, 1]),
                         1.0 / (1.0 + pts[:, 0] + pts[:, 1])], axis=-1)

    once = project_element(space, field, 6)
    twice = project_element(space, lambda pts: reconstruct(space, once, pts), 6)
    assert np.allclose(twice, once, rtol=1e-12, atol=1e-12)
    lower = build_space((1, 2))
    inner = rng.standard_normal((lower.n, 1))
    lifted = project_element(space, lambda pts: reconstruct(lower, inner, pts), 5)
    pts = rng.random((15, 2))
    assert np.allclose(reconstruct(space, lifted, pts),
                       reconstruct(lower, inner, pts))


def test_face_projection():
    space = build_space((1, 2))
    coeffs = project_face(space, 0, lambda pts: pts[:, 1:2]**2, 4)
    assert coeffs.shape == (3, 1)
    full = np.zeros((space.n, 1))
    full[space.face_sets[0]] = coeffs
    t = np.linspace(0, 1, 5)
    pts = np.stack([np.zeros_like(t), t], axis=-1)
    assert np.allclose(reconstruct(space, full, pts)[:, 0], t**2)


def test_relative_error():
    exact = np.array([[1.0, 0.0], [0.0, 2.0]])
    approx = np.array([[1.1, 0.0], [0.0, 2.0]])
    assert relative_error(exact, approx) == pytest.approx(0.1)
    assert relative_error(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0


def test_affine_macro_projection():
    model = make_model("cross", "affine", 2, load="gravity",
                       macro_params={"n_elements": 2})
    projected = project_model(model, build_space((0, 0)))
    assert projected.n_elements == 4
    assert projected.e_proj < 1e-12
    assert np.allclose(projected.coeffs_det, AFFINE_DET / 4)
    assert np.allclose(projected.coeffs_b[:, 0], [0.0, -AFFINE_DET / 4])
    assert projected.coeffs_t == {}
    assert projected.full_a().shape == (4, 1, 2, 2, 2, 2)


@pytest.mark.parametrize("dim", [2, 3])
def test_cube_macro_closed_form(dim):
    length = 2.0
    model = make_model("identity", "cube", dim, load="gravity",
                       macro_params={"n_elements": 1, "length": length})
    projected = project_model(model, build_space((0, ) * dim))
    lam, mu = model.material.lame
    scale = length**(dim - 2)
    a = projected.full_a()[0, 0]
    assert projected.e_proj < 1e-12
    assert projected.coeffs_det[0, 0] == pytest.approx(length**dim)
    assert a[0, 0, 0, 0] == pytest.approx((lam + 2 * mu) * scale)
    assert a[0, 0, 1, 1] == pytest.approx(mu * scale)
    assert a[0, 1, 0, 1] == pytest.approx(lam * scale)
    assert a[0, 1, 1, 0] == pytest.approx(mu * scale)
    d = np.eye(dim)
    expected = scale * (lam * np.einsum("ki,lj->ijkl", d, d) + mu *
                        (np.einsum("kl,ij->ijkl", d, d) +
                         np.einsum("kj,il->ijkl", d, d)))
    assert np.allclose(a, expected, rtol=1e-12, atol=1e-12)


def test_traction_coefficients():
    model = make_model("identity", "cube", 2, load="traction",
                       macro_params={"n_elements": 2})
    projected = project_model(model, build_space((1, 1)))
    assert list(projected.coeffs_t) == [1]
    coeffs = projected.coeffs_t[1]
    assert coeffs.shape == (4, 2, 2)
    loaded = model.macro.boundary_elements(1)
    assert loaded == [2, 3]
    assert np.allclose(coeffs[loaded][:, :, 0], 0.5)
    assert np.allclose(coeffs[loaded][:, :, 1], 0.0)
    assert np.allclose(coeffs[[0, 1]], 0.0)


def test_degree_selection():
    affine = make_model("identity", "affine", 2)
    assert select_degree(affine, 1e-6) == (1, 1)
    arc = make_model("identity", "arc", 2)
    degrees, error = select_degree(arc, 1e-3, return_error=True)
    assert error <= 1e-3
    assert degrees[0] >= 1 and degrees[1] >= 2
    with pytest.raises(ProjectionNotConvergedError):
        select_degree(arc, 1e-14, cap=2)
    with pytest.raises(ValueError):
        select_degree(arc, 0.0)


def test_errors_decrease_with_degree():
    model = make_model("identity", "bent", 2)
    errors = [project_model(model, build_space((p, p))).e_proj for p in (1, 3, 5)]
    assert errors[0] > errors[1] > errors[2]


if __name__ == "__main__":
    test_mass_matrix()
    test_space_layout()
    test_polynomials_are_reproduced()
    test_projection_is_idempotent()
    test_face_projection()
    test_relative_error()
    test_affine_macro_projection()
    for dim in (2, 3):
        test_cube_macro_closed_form(dim)
    test_traction_coefficients()
    test_degree_selection()
    test_errors_decrease_with_degree()
