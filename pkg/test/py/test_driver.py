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
import json
import pathlib
import tempfile

import numpy as np
import pandas as pd
import pytest
import scipy.io

from msiga.config import AssemblyConfig
from msiga.driver import BENCH_COLUMNS, main
from msiga.fast_assembly import assemble_all
from msiga.gallery import make_model
from msiga.model import save_model

NO_CACHE = AssemblyConfig(use_cache=False)


def write_model(tmp_path, name="model.json", **kwargs):
    model = make_model(**kwargs)
    path = tmp_path / name
    save_model(model, path)
    return model, str(path)


def run(tmp_path, *argv):
    return main(["--cache-dir", str(tmp_path / "cache")] + [str(a) for a in argv])


def read_report(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def test_volume(tmp_path):
    _, path = write_model(tmp_path, tile="cross", macro="cube", dim=2)
    report = tmp_path / "volume.json"
    assert run(tmp_path, "volume", path, "--p-proj", "1", "--report", report) == 0
    doc = read_report(report)
    assert doc["volume"] == pytest.approx(0.64, rel=1e-12)
    assert doc["p_proj"] == [1, 1]
    assert len(doc["element_volumes"]) == 4
    assert run(tmp_path, "volume", path, "--method", "gauss", "--report",
               report) == 0
    assert read_report(report)["volume"] == pytest.approx(0.64, rel=1e-12)


def test_table_cache_is_reused(tmp_path):
    _, path = write_model(tmp_path, tile="frame", macro="affine", dim=2)
    report = tmp_path / "volume.json"
    assert run(tmp_path, "volume", path, "--p-proj", "0", "--report", report) == 0
    assert not read_report(report)["cache_hit"]
    assert run(tmp_path, "volume", path, "--p-proj", "0", "--report", report) == 0
    doc = read_report(report)
    assert doc["cache_hit"]
    assert doc["volume"] == pytest.approx(0.75 * 0.975, rel=1e-12)
    assert run(tmp_path, "--no-cache", "volume", path, "--p-proj", "0",
               "--report", report) == 0
    assert not read_report(report)["cache_hit"]


def test_assemble_exports(tmp_path):
    model, path = write_model(tmp_path, tile="cross", macro="bent", dim=2,
                              p_proj=2)
    matrix = tmp_path / "K.mtx"
    vector = tmp_path / "f.txt"
    report = tmp_path / "assemble.json"
    assert run(tmp_path, "assemble", path, "--out-matrix", matrix,
               "--out-vector", vector, "--report", report) == 0
    op, _ = assemble_all(model, NO_CACHE)
    K = scipy.io.mmread(str(matrix)).tocsr()
    assert abs(K - op.K).max() <= 1e-14 * abs(op.K).max()
    assert np.allclose(np.loadtxt(vector), op.f, rtol=1e-15, atol=0.0)
    doc = read_report(report)
    assert doc["method"] == "fast"
    assert doc["n_dof"] == model.n_dof
    assert doc["p_proj"] == [2, 2]


def test_solve_outputs(tmp_path):
    model, path = write_model(tmp_path, tile="frame", macro="arc", dim=2,
                              p_proj=2)
    solution = tmp_path / "u.csv"
    fields = tmp_path / "fields.csv"
    report = tmp_path / "solve.json"
    assert run(tmp_path, "solve", path, "--out-solution", solution,
               "--out-fields", fields, "--samples", 3, "--report", report) == 0
    u = pd.read_csv(solution)
    assert list(u.columns) == ["dof", "value"]
    assert len(u) == model.n_dof
    samples = pd.read_csv(fields)
    assert list(samples.columns) == ["x", "y", "ux", "uy", "von_mises"]
    assert len(samples) == 9 * model.tile.n_patches * model.macro.n_elements
    doc = read_report(report)
    assert doc["compliance"] > 0
    assert not doc["matrix_free"]


def test_matrix_free_solve(tmp_path):
    _, path = write_model(tmp_path, tile="cross", macro="rod", dim=2, p_proj=0)
    assembled = tmp_path / "assembled.json"
    free = tmp_path / "free.json"
    assert run(tmp_path, "solve", path, "--report", assembled) == 0
    assert run(tmp_path, "solve", path, "--matrix-free", "--report", free) == 0
    doc = read_report(free)
    assert doc["matrix_free"]
    assert doc["peak_block_bytes"] > 0
    assert doc["compliance"] == pytest.approx(
        read_report(assembled)["compliance"], rel=1e-6)


def test_compare(tmp_path, capsys):
    _, path = write_model(tmp_path, tile="cross", macro="affine", dim=2,
                          p_proj=0, tile_order=3, oracle_order=3)
    report = tmp_path / "compare.json"
    assert run(tmp_path, "compare", path, "--report", report) == 0
    metrics = json.loads(capsys.readouterr().out)
    assert metrics["e_mat"] < 1e-12
    assert metrics["e_disp"] < 1e-8
    doc = read_report(report)
    assert doc["fast"]["method"] == "fast"
    assert doc["oracle"]["method"] == "oracle"
    assert doc["metrics"]["e_vec"] < 1e-12


def test_table_build_and_inspect(tmp_path, capsys):
    model, path = write_model(tmp_path, tile="cross", macro="cube", dim=2)
    tile_only = tmp_path / "tile.json"
    with open(tile_only, "w", encoding="utf-8") as f:
        json.dump({"dimension": 2, "tile": model.tile.to_dict()}, f)
    cache = tmp_path / "tables.bin"
    assert run(tmp_path, "table", "build", tile_only, "--p-proj", "1,2",
               "--out", cache) == 0
    assert "n_T: 12" in capsys.readouterr().out
    assert run(tmp_path, "table", "inspect", cache) == 0
    out = capsys.readouterr().out
    assert "degrees: [1, 2]" in out
    assert "n_nz: 38" in out
    assert "n_pi: 6" in out
    assert run(tmp_path, "table", "build", path, "--p-proj", "1") == 0
    assert list((tmp_path / "cache").iterdir())


def test_volume_gradient(tmp_path):
    model, path = write_model(tmp_path, tile="identity", macro="cube", dim=2,
                              macro_params={"n_elements": 1})
    out = tmp_path / "grad.csv"
    report = tmp_path / "grad.json"
    assert run(tmp_path, "grad", path, "--qoi", "volume", "--p-proj", "1",
               "--check-fd", "--out", out, "--report", report) == 0
    frame = pd.read_csv(out)
    cps = model.macro.patch.control_points
    assert np.allclose(frame["value"].to_numpy(), (cps - 0.5).ravel())
    doc = read_report(report)
    assert doc["volume"] == pytest.approx(1.0)
    assert doc["fd_best_error"] < 1e-8
    assert len(doc["fd_errors"]) == len(doc["fd_steps"]) == 3


def test_compliance_gradient(tmp_path):
    _, path = write_model(tmp_path, tile="cross", macro="cube", dim=2,
                          p_proj=1)
    report = tmp_path / "grad.json"
    assert run(tmp_path, "grad", path, "--qoi", "compliance", "--report",
               report) == 0
    doc = read_report(report)
    assert doc["compliance"] > 0
    assert doc["gradient_norm"] > 0


def test_bench(tmp_path):
    _, path = write_model(tmp_path, tile="cross", macro="bent", dim=2)
    out = tmp_path / "bench.csv"
    assert run(tmp_path, "bench", path, "--sweep", "pproj", "--values", "1,3",
               "--out", out) == 0
    frame = pd.read_csv(out)
    assert tuple(frame.columns) == BENCH_COLUMNS
    assert frame["p_proj"].tolist() == ["1x1", "3x3"]
    assert frame["e_mat"].iloc[1] < frame["e_mat"].iloc[0]
    assert run(tmp_path, "bench", path, "--sweep", "tiles", "--values", "1,2",
               "--out", out) == 0
    assert pd.read_csv(out)["n_elements"].tolist() == [4, 16]


def test_exit_codes(tmp_path, capsys):
    assert main([]) == 2
    assert run(tmp_path, "volume", tmp_path / "missing.json") == 2
    _, path = write_model(tmp_path, dim=2)
    assert run(tmp_path, "volume", path, "--p-proj", "1,2,3") == 2
    broken = tmp_path / "broken.bin"
    broken.write_bytes(b"not a cache")
    assert run(tmp_path, "table", "inspect", broken) == 2
    assert "error:" in capsys.readouterr().err


if __name__ == "__main__":
    test_volume(pathlib.Path(tempfile.mkdtemp()))
    test_table_cache_is_reused(pathlib.Path(tempfile.mkdtemp()))
    test_assemble_exports(pathlib.Path(tempfile.mkdtemp()))
    test_solve_outputs(pathlib.Path(tempfile.mkdtemp()))
    test_matrix_free_solve(pathlib.Path(tempfile.mkdtemp()))
    test_volume_gradient(pathlib.Path(tempfile.mkdtemp()))
    test_compliance_gradient(pathlib.Path(tempfile.mkdtemp()))
    test_bench(pathlib.Path(tempfile.mkdtemp()))
