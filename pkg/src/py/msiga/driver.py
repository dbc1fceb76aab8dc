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
Command line driver: volume, assembly, solves, comparisons, lookup table
management, gradients and benchmark sweeps.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np
import pandas as pd

from .config import AssemblyConfig, parse_degrees
from .errors import MsigaError
from .fast_assembly import (assemble_all, assemble_volume, export_matrix_market,
                            export_vector, prepare_fast)
from .gallery import make_macro
from .lookup import (build_tables, cache_load, cache_path, cache_store,
                     tile_hash)
from .model import (MacroGeometry, TileGeometry, load_model, model_from_dict,
                    validate_model)
from .oracle import oracle_assemble, oracle_fields, oracle_volume
from .projection import build_space
from .sensitivity import (export_gradient, finite_difference_gradient,
                          grad_compliance, grad_volume)
from .solve import (compute_metrics, export_fields, export_solution,
                    solve_model)
from .splines import elevate_degree, refine_patch
from .utils import progress

log = logging.getLogger(__name__)

BENCH_COLUMNS = ("sweep", "value", "n_elements", "p_proj", "n_dof", "e_proj",
                 "e_mat", "e_vec", "e_disp", "e_stress", "t_fast", "t_oracle",
                 "t_cost")


def _add_projection_args(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--p-proj',
                       type=str,
                       help='projection degrees, N or N,N[,N]')
    group.add_argument('--tol',
                       type=float,
                       help='projection tolerance for the degree choice '
                       '(default = 1e-3)')


def _add_report_arg(parser):
    parser.add_argument('--report', type=str, help='write a JSON report')


def parse_args(argv=None):
    parser = argparse.ArgumentParser(
        prog='msiga',
        description='Multiscale isogeometric operator formation for '
        'spline lattices composed of a reference tile and a macro map.')
    parser.add_argument('--threads',
                        type=int,
                        help='cap on worker threads (default = MSIGA_THREADS or 1)')
    parser.add_argument('--cache-dir',
                        type=str,
                        help='lookup table cache directory '
                        '(default = MSIGA_CACHE_DIR or ~/.cache/msiga)')
    parser.add_argument('--no-cache',
                        action='store_true',
                        help='always rebuild the lookup tables')
    parser.add_argument('-v',
                        '--verbose',
                        action='count',
                        default=0,
                        help='raise the log level (repeat for debug output)')
    sub = parser.add_subparsers(dest='command', required=True)

    volume = sub.add_parser('volume', help='compute the structure volume')
    volume.add_argument('model', help='model JSON file')
    volume.add_argument('--method', choices=['fast', 'gauss'], default='fast')
    volume.add_argument('--quad',
                        type=int,
                        help='Gauss points per direction for --method gauss')
    _add_projection_args(volume)
    _add_report_arg(volume)

    for name, text in (('assemble', 'assemble stiffness and load'),
                       ('solve', 'assemble and solve'),
                       ('compare', 'run the fast path and the oracle')):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument('model', help='model JSON file')
        if name != 'compare':
            cmd.add_argument('--method',
                             choices=['fast', 'oracle'],
                             default='fast')
        cmd.add_argument('--matrix-free',
                         action='store_true',
                         help='apply K element by element (implies cg)')
        cmd.add_argument('--solver', choices=['direct', 'cg'], default=None)
        cmd.add_argument('--quad',
                         type=int,
                         help='oracle Gauss points per direction and span')
        cmd.add_argument('--out-matrix', type=str, help='Matrix Market output')
        cmd.add_argument('--out-vector', type=str, help='load vector output')
        cmd.add_argument('--out-solution', type=str, help='solution CSV')
        cmd.add_argument('--out-fields', type=str, help='sampled field CSV')
        cmd.add_argument('--samples',
                         type=int,
                         default=5,
                         help='field samples per direction and tile patch')
        _add_projection_args(cmd)
        _add_report_arg(cmd)

    table = sub.add_parser('table', help='lookup table cache management')
    table_sub = table.add_subparsers(dest='table_command', required=True)
    build = table_sub.add_parser('build', help='build and store tables')
    build.add_argument('tile', help='tile or model JSON file')
    build.add_argument('--p-proj', type=str, required=True)
    build.add_argument('--quad', type=int, help='tile quadrature order')
    build.add_argument('--out', type=str, help='cache file to write')
    inspect = table_sub.add_parser('inspect', help='summarize a cache file')
    inspect.add_argument('path', help='cache file')

    grad = sub.add_parser('grad', help='gradients w.r.t. macro control points')
    grad.add_argument('model', help='model JSON file')
    grad.add_argument('--qoi', choices=['volume', 'compliance'], required=True)
    grad.add_argument('--check-fd',
                      action='store_true',
                      help='verify against re-assembled finite differences')
    grad.add_argument('--fixed-load-support', action='store_true')
    grad.add_argument('--out', type=str, help='gradient CSV')
    _add_projection_args(grad)
    _add_report_arg(grad)

    bench = sub.add_parser('bench', help='timing and error sweeps')
    bench.add_argument('model', help='model JSON file')
    bench.add_argument('--sweep',
                       choices=['pproj', 'tiles', 'tile-degree'],
                       required=True)
    bench.add_argument('--values',
                       type=str,
                       help='comma separated sweep values')
    bench.add_argument('--out', type=str, help='CSV output (default stdout)')
    _add_projection_args(bench)
    return parser.parse_args(argv)


def _setup_logging(verbose):
    default = os.environ.get('MSIGA_LOG_LEVEL', 'WARNING').upper()
    level = getattr(logging, default, logging.WARNING)
    level = max(logging.DEBUG, level - 10 * verbose)
    logging.basicConfig(level=level,
                        format='%(levelname)s %(name)s: %(message)s')
    logging.getLogger('msiga').setLevel(level)


def _config(args, model=None):
    dim = model.dim if model is not None else None
    cfg = AssemblyConfig.from_env(
        p_proj=parse_degrees(getattr(args, 'p_proj', None), dim),
        tol=getattr(args, 'tol', None),
        oracle_order=getattr(args, 'quad', None),
        cache_dir=args.cache_dir,
        threads=args.threads,
        solver=getattr(args, 'solver', None),
        matrix_free=getattr(args, 'matrix_free', None) or None)
    if args.no_cache:
        cfg = cfg.updated(use_cache=False)
    return cfg.resolve(model) if model is not None else cfg


def _write_report(path, report):
    if not path:
        return

    def default(value):
        if isinstance(value, np.generic):
            return value.item()
        if isinstance(value, np.ndarray):
            return value.tolist()
        raise TypeError(f"{type(value).__name__} is not JSON serializable")

    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2, default=default)


def _load(path):
    model = load_model(path)
    validate_model(model)
    return model


def cmd_volume(args):
    model = _load(args.model)
    cfg = _config(args, model)
    report = {'command': 'volume', 'method': args.method}
    if args.method == 'gauss':
        report['volume'] = oracle_volume(model, cfg.oracle_order)
    else:
        state = prepare_fast(model, cfg)
        total, per_element = assemble_volume(model, state.tables,
                                             state.projected)
        report.update(volume=total,
                      p_proj=list(state.space.degrees),
                      e_proj=state.projected.e_proj,
                      cache_hit=state.cache_hit,
                      times={
                          'projection': state.timer['projection'],
                          'tables': state.timer['tables']
                      },
                      element_volumes=per_element.tolist())
    print(f"volume: {report['volume']:.17g}")
    _write_report(args.report, report)
    return 0


def _export_operator(args, op):
    if args.out_matrix and not hasattr(op, 'upper'):
        log.warning('matrix-free operator: --out-matrix ignored')
    elif args.out_matrix:
        export_matrix_market(op, args.out_matrix)
    if args.out_vector:
        export_vector(op.f, args.out_vector)


def cmd_assemble(args):
    model = _load(args.model)
    cfg = _config(args, model)
    if args.method == 'fast':
        op, report = assemble_all(model, cfg)
    else:
        op, report = oracle_assemble(model, cfg.oracle_order, cfg.threads,
                                     cfg.block_size)
    _export_operator(args, op)
    print(f"n_dof: {report.n_dof}  n_nz: {report.n_nz_global}  "
          f"nz time: {report.nz_time:.4f}s")
    _write_report(args.report, report.to_dict())
    return 0


def _export_solution(args, model, result):
    if args.out_solution:
        export_solution(result.u, args.out_solution)
    if args.out_fields:
        export_fields(oracle_fields(model, result.u, args.samples, "grid"),
                      args.out_fields)


def cmd_solve(args):
    model = _load(args.model)
    cfg = _config(args, model)
    result = solve_model(model, cfg, args.method)
    _export_operator(args, result.op)
    _export_solution(args, model, result)
    print(f"compliance: {result.compliance:.17g}")
    report = result.report.to_dict()
    report['compliance'] = result.compliance
    report['matrix_free'] = cfg.matrix_free
    if hasattr(result.op, 'peak_block_bytes'):
        report['peak_block_bytes'] = result.op.peak_block_bytes
    _write_report(args.report, report)
    return 0


def cmd_compare(args):
    model = _load(args.model)
    cfg = _config(args, model)
    fast = solve_model(model, cfg, 'fast')
    oracle = solve_model(model, cfg, 'oracle')
    metrics = compute_metrics(model, fast, oracle)
    _export_operator(args, fast.op)
    _export_solution(args, model, fast)
    print(json.dumps(metrics.to_dict(), indent=2))
    _write_report(
        args.report, {
            'metrics': metrics.to_dict(),
            'fast': fast.report.to_dict(),
            'oracle': oracle.report.to_dict()
        })
    return 0


def _load_tile_model(path):
    """Model JSON, or a tile-only JSON placed on one unit-cube element."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if "macro" not in doc:
        dim = int(doc["dimension"])
        doc = dict(doc,
                   macro=make_macro("cube", dim, n_elements=1).to_dict(),
                   material={
                       "E": 1.0,
                       "nu": 0.3
                   })
    return model_from_dict(doc)


def cmd_table(args):
    if args.table_command == 'inspect':
        tables = cache_load(args.path)
        sizes = {
            'mat_k': tables.mat_k.nbytes,
            'load': tables.load.nbytes,
            't_h': tables.t_h.nbytes,
            'sparsity': 8 * tables.n_nz
        }
        print(f"tile hash: {tables.key.tile_hash.hex()}")
        print(f"dimension: {tables.dim}  degrees: {list(tables.degrees)}  "
              f"quad order: {tables.key.quad_order}")
        print(f"n_T: {tables.n_tile}  n_nz: {tables.n_nz}  n_pi: {tables.n_pi}")
        print(f"bytes: {sizes}  file: {os.path.getsize(args.path)}")
        return 0
    model = _load_tile_model(args.tile)
    degrees = parse_degrees(args.p_proj, model.dim)
    cfg = _config(args).updated(tile_order=args.quad)
    tables = build_tables(model, build_space(degrees), cfg.tile_order,
                          cfg.threads)
    path = args.out or cache_path(cfg.cache_dir, tables.key)
    cache_store(tables, path)
    print(f"tile hash: {tile_hash(model.tile).hex()}")
    print(f"n_T: {tables.n_tile}  n_nz: {tables.n_nz}  n_pi: {tables.n_pi}")
    print(f"wrote {path}")
    return 0


def cmd_grad(args):
    model = _load(args.model)
    cfg = _config(args, model)
    state = prepare_fast(model, cfg)
    report = {'command': 'grad', 'qoi': args.qoi,
              'p_proj': list(state.space.degrees)}
    if args.qoi == 'volume':
        gradient = grad_volume(model, state.tables)
        report['volume'] = assemble_volume(model, state.tables,
                                           state.projected)[0]
    else:
        result = solve_model(model, cfg.updated(p_proj=state.space.degrees),
                             'fast')
        gradient = grad_compliance(model, state.tables, state.projected,
                                   result.u, args.fixed_load_support,
                                   threads=cfg.threads)
        report['compliance'] = result.compliance
    if args.out:
        export_gradient(gradient, args.out)
    report['gradient_norm'] = float(np.linalg.norm(gradient))
    if args.check_fd:
        check = finite_difference_gradient(model, state.tables, args.qoi,
                                           cfg=cfg, quiet=args.verbose == 0)
        errors = check.errors(gradient)
        report['fd_steps'] = list(check.steps)
        report['fd_errors'] = errors.tolist()
        report['fd_best_error'] = float(errors.min())
        print(f"finite difference check: best relative error "
              f"{errors.min():.3e}")
    print(f"gradient norm: {report['gradient_norm']:.17g}")
    _write_report(args.report, report)
    return 0


def _sweep_models(model, sweep, values):
    for value in values:
        if sweep == 'tiles':
            macro = MacroGeometry(refine_patch(model.macro.patch, value))
            yield value, model.with_macro(macro)
        elif sweep == 'tile-degree':
            tile = TileGeometry(
                tuple(elevate_degree(p, value) for p in model.tile.patches),
                model.tile.face_markers)
            yield value, model.with_tile(tile)
        else:
            yield value, model


def cmd_bench(args):
    model = _load(args.model)
    defaults = {'pproj': '0,1,2,3', 'tiles': '1,2,4', 'tile-degree': '0,1'}
    values = [int(v) for v in (args.values or defaults[args.sweep]).split(',')]
    base = _config(args, model)
    rows = []
    oracle = None
    for value, current in progress(list(_sweep_models(model, args.sweep, values)),
                                   'bench', args.verbose == 0):
        cfg = base.updated(p_proj=(value, ) * model.dim) if args.sweep == 'pproj' else base
        cfg = cfg.resolve(current)
        fast = solve_model(current, cfg, 'fast')
        if oracle is None or args.sweep != 'pproj':
            oracle = solve_model(current, cfg, 'oracle')
        metrics = compute_metrics(current, fast, oracle)
        rows.append({
            'sweep': args.sweep,
            'value': value,
            'n_elements': current.macro.n_elements,
            'p_proj': 'x'.join(str(p) for p in fast.report.p_proj),
            'n_dof': current.n_dof,
            'e_proj': metrics.e_proj,
            'e_mat': metrics.e_mat,
            'e_vec': metrics.e_vec,
            'e_disp': metrics.e_disp,
            'e_stress': metrics.e_stress,
            't_fast': fast.report.nz_time,
            't_oracle': oracle.report.nz_time,
            't_cost': metrics.t_cost
        })
    frame = pd.DataFrame(rows, columns=list(BENCH_COLUMNS))
    if args.out:
        frame.to_csv(args.out, index=False)
    else:
        print(frame.to_csv(index=False), end='')
    return 0


COMMANDS = {
    'volume': cmd_volume,
    'assemble': cmd_assemble,
    'solve': cmd_solve,
    'compare': cmd_compare,
    'table': cmd_table,
    'grad': cmd_grad,
    'bench': cmd_bench,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except SystemExit as err:
        return err.code
    _setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except MsigaError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.exit_code
    except (OSError, json.JSONDecodeError, ValueError, KeyError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == '__main__':
    sys.exit(main())
