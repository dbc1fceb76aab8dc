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

from msiga.config import AssemblyConfig
from msiga.errors import EmptyDirichletSetError
from msiga.fast_assembly import assemble_all
from msiga.gallery import make_macro, make_model, make_tile
from msiga.model import (AffineDisplacement, BoundaryConditions, ComposedModel,
                         DirichletCondition, Material, ProjectionSettings,
                         TileGeometry, composed_control_points)
from msiga.oracle import oracle_assemble
from msiga.solve import (MatrixFreeOperator, apply_dirichlet, compliance,
                         compute_metrics, dirichlet_values, matvec_free,
                         reactions, ritz_values, solve_linear, solve_model)
from msiga.splines import KnotVector, SplinePatch

NO_CACHE = AssemblyConfig(use_cache=False)


def rod(load="traction", tile="cross", macro="rod", **kwargs):
    return make_model(tile, macro, 2, load=load, p_proj=0, tile_order=3,
                      oracle_order=3, **kwargs)


def test_matrix_free_matches_assembled():
    model = make_model("frame", "arc", 2, p_proj=2)
    op, _, state = assemble_all(model, NO_CACHE, return_state=True)
    free = MatrixFreeOperator(model, state.tables, state.projected,
                              block_size=3)
    u = np.random.default_rng(0).standard_normal(model.n_dof)
    assert np.allclose(free.matvec(u), op.K @ u, rtol=1e-12, atol=1e-12)
    assert np.allclose(matvec_free(model, state.tables, state.projected, u),
                       op.K @ u)
    assert np.allclose(free.diagonal(), op.K.diagonal())
    assert np.allclose(free.f, op.f)
    assert free.peak_block_bytes == 3 * state.tables.n_nz * 4 * 8


def test_dirichlet_values():
    model = rod(load="displacement")
    fixed, values = dirichlet_values(model)
    assert len(fixed) == len(values)
    assert np.all(np.diff(fixed) > 0)
    on_loaded = values[fixed % 2 == 0]
    assert set(np.round(on_loaded, 12)) == {0.0, 0.1}
    assert np.allclose(values[fixed % 2 == 1], 0.0)


def test_direct_and_cg_agree():
    model = rod()
    op, _ = assemble_all(model, NO_CACHE)
    system = apply_dirichlet(op, model.bcs, model)
    direct = solve_linear(system, "direct")
    iterative = solve_linear(system, "cg", 1e-10)
    assert np.allclose(direct, iterative, rtol=1e-6, atol=1e-9)
    assert np.allclose(direct[system.fixed], 0.0)
    with pytest.raises(ValueError):
        solve_linear(system, "lu")


def test_reactions_balance_the_load():
    model = rod()
    op, _ = assemble_all(model, NO_CACHE)
    system = apply_dirichlet(op, model.bcs, model)
    u = solve_linear(system)
    r = reactions(op, u, system)
    fixed_x = system.fixed % 2 == 0
    assert r[fixed_x].sum() == pytest.approx(-op.f[0::2].sum(), rel=1e-8)
    assert compliance(op.f, u) > 0


def test_inhomogeneous_dirichlet():
    model = rod(load="displacement")
    result = solve_model(model, NO_CACHE)
    fixed, values = dirichlet_values(model)
    assert np.allclose(result.u[fixed], values)
    op = result.op
    free = np.setdiff1d(np.arange(model.n_dof), fixed)
    assert np.allclose((op.K @ result.u)[free], 0.0, atol=1e-10)


def test_matrix_free_solve():
    model = make_model("cross", "bent", 2, p_proj=3)
    assembled = solve_model(model, NO_CACHE)
    free = solve_model(model, NO_CACHE.updated(matrix_free=True,
                                                solver_tol=1e-9))
    assert isinstance(free.op, MatrixFreeOperator)
    assert free.report.method == "fast-matrix-free"
    assert np.allclose(free.u, assembled.u, rtol=1e-4,
                       atol=1e-6 * np.abs(assembled.u).max())
    assert free.compliance == pytest.approx(assembled.compliance, rel=1e-6)


def test_empty_dirichlet_set():
    tile = TileGeometry((SplinePatch(
        (KnotVector.uniform(1), KnotVector.uniform(1)),
        [[0.0, 0.2], [0.0, 0.8], [1.0, 0.2], [1.0, 0.8]]), ))
    bcs = BoundaryConditions((DirichletCondition(2, np.zeros(2)), ))
    model = ComposedModel(tile, make_macro("cube", 2, n_elements=1),
                          Material(1.0, 0.3), bcs)
    with pytest.raises(EmptyDirichletSetError):
        dirichlet_values(model)


def test_patch_test():
    grad = np.array([[0.02, -0.01], [0.015, 0.03]])
    value = AffineDisplacement(grad, np.array([0.001, -0.002]))
    bcs = BoundaryConditions(
        tuple(DirichletCondition(face, value) for face in range(4)))
    model = ComposedModel(make_tile("identity", 2, degree=2),
                          make_macro("affine", 2, n_elements=3),
                          Material(1.0, 0.3), bcs,
                          projection=ProjectionSettings(degrees=(0, 0)))
    result = solve_model(model, NO_CACHE)
    expected = np.zeros((model.dof_map.n_global, 2))
    for t in range(model.macro.n_elements):
        expected[model.dof_map.global_indices[t]] = value(
            composed_control_points(model, t))
    assert np.allclose(result.u, expected.ravel(), rtol=0.0, atol=1e-10)


def test_ritz_values():
    model = make_model("identity", "affine", 2)
    op, _ = assemble_all(model, NO_CACHE)
    dense = np.linalg.eigvalsh(op.K.toarray())[::-1]
    values = ritz_values(op.K, k=3, iterations=model.n_dof)
    assert len(values) <= 3
    assert values[0] == pytest.approx(dense[0], rel=1e-8)
    assert np.all(np.diff(values) <= 0)
    assert np.all(values <= dense[0] * (1 + 1e-10))


def test_affine_metrics():
    model = rod(macro="affine")
    fast = solve_model(model, NO_CACHE, "fast")
    oracle = solve_model(model, NO_CACHE, "oracle")
    metrics = compute_metrics(model, fast, oracle)
    assert metrics.e_mat < 1e-12
    assert metrics.e_vec < 1e-12
    assert metrics.e_disp < 1e-8
    assert metrics.e_stress < 1e-8
    assert metrics.e_proj < 1e-12
    assert metrics.t_cost > 0
    assert metrics.compliance_fast == pytest.approx(metrics.compliance_oracle,
                                                    rel=1e-10)
    assert set(metrics.to_dict()) >= {"e_disp", "e_stress", "e_mat", "t_cost"}


def test_curved_metrics():
    model = make_model("cross", "arc", 2, tol=1e-4, tile_order=8,
                       oracle_order=6)
    fast = solve_model(model, NO_CACHE, "fast")
    oracle = solve_model(model, NO_CACHE, "oracle")
    metrics = compute_metrics(model, fast, oracle)
    assert metrics.e_proj <= 1e-4
    assert metrics.e_mat < 1e-2
    assert metrics.e_disp < 1e-2
    with pytest.raises(ValueError):
        solve_model(model, NO_CACHE, "magic")


@pytest.mark.slow
def test_errors_shrink_with_projection_degree():
    model = make_model("cross", "arc", 2, tile_order=8, oracle_order=8)
    oracle = solve_model(model, NO_CACHE, "oracle")
    sweep = []
    for p in range(5):
        fast = solve_model(model, NO_CACHE.updated(p_proj=(p, p)), "fast")
        sweep.append(compute_metrics(model, fast, oracle))
    for name in ("e_proj", "e_mat", "e_disp", "e_stress"):
        errors = [getattr(m, name) for m in sweep]
        assert all(b <= a for a, b in zip(errors, errors[1:])), (name, errors)
    selected = solve_model(model, NO_CACHE.updated(tol=1e-3), "fast")
    metrics = compute_metrics(model, selected, oracle)
    assert metrics.e_proj <= 1e-3
    assert metrics.e_disp < 1e-3
    assert metrics.e_stress < 1e-2


@pytest.mark.slow
def test_speedup_grows_with_element_count():
    costs = []
    for n in (2, 4, 8):
        model = make_model("cross", "bent", 3, tile_params={"degree": 2},
                           macro_params={"n_elements": n}, p_proj=2)
        _, fast = assemble_all(model, NO_CACHE)
        _, oracle = oracle_assemble(model)
        assert model.macro.n_elements == n**3
        costs.append(oracle.nz_time / fast.nz_time)
    assert costs[-1] > 5, costs


if __name__ == "__main__":
    test_matrix_free_matches_assembled()
    test_dirichlet_values()
    test_direct_and_cg_agree()
    test_reactions_balance_the_load()
    test_inhomogeneous_dirichlet()
    test_matrix_free_solve()
    test_empty_dirichlet_set()
    test_patch_test()
    test_ritz_values()
    test_affine_metrics()
    test_curved_metrics()
    test_errors_shrink_with_projection_degree()
    test_speedup_grows_with_element_count()
