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
Fast formation of isogeometric stiffness operators for spline lattices
built from one reference tile composed with a macro spline map.
"""
from .config import AssemblyConfig
from .errors import (CacheError, ConvergenceError, DegenerateElementError,
                     ModelError, MsigaError, NumericalError,
                     ProjectionNotConvergedError, TileNotConformingError,
                     UsageError)
from .fast_assembly import (AssemblyReport, SparseOperator, assemble_all,
                            assemble_load, assemble_stiffness, assemble_volume,
                            prepare_fast)
from .gallery import make_macro, make_model, make_tile
from .lookup import LookupTables, build_tables, load_or_build_tables
from .model import (ComposedModel, MacroGeometry, Material, TileGeometry,
                    load_model, save_model, validate_model)
from .oracle import oracle_assemble, oracle_fields, oracle_volume
from .projection import build_space, project_model, select_degree
from .sensitivity import (finite_difference_gradient, grad_compliance,
                          grad_volume)
from .solve import (MatrixFreeOperator, apply_dirichlet, compute_metrics,
                    solve_linear, solve_model)

__version__ = "0.1.0"

__all__ = [
    "AssemblyConfig", "AssemblyReport", "CacheError", "ComposedModel",
    "ConvergenceError", "DegenerateElementError", "LookupTables",
    "MacroGeometry", "Material", "MatrixFreeOperator", "ModelError",
    "MsigaError", "NumericalError", "ProjectionNotConvergedError",
    "SparseOperator", "TileGeometry", "TileNotConformingError", "UsageError",
    "apply_dirichlet", "assemble_all", "assemble_load", "assemble_stiffness",
    "assemble_volume", "build_space", "build_tables", "compute_metrics",
    "finite_difference_gradient", "grad_compliance", "grad_volume",
    "load_model", "load_or_build_tables", "make_macro", "make_model",
    "make_tile", "oracle_assemble", "oracle_fields", "oracle_volume",
    "prepare_fast", "project_model", "save_model", "select_degree",
    "solve_linear", "solve_model", "validate_model"
]
