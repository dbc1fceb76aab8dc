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
import os
import sys
from argparse import ArgumentParser

sys.path.insert(
    0,
    os.path.join(os.path.dirname(os.path.abspath(__file__)), '..', '..', 'src',
                 'py'))

from msiga.errors import MsigaError
from msiga.gallery import LOADS, macro_names, make_model, tile_names
from msiga.model import save_model


def get_args():
    parser = ArgumentParser(
        description='Write gallery tile/macro combinations as model JSON files')
    parser.add_argument('--tile',
                        choices=['all'] + tile_names(),
                        nargs='+',
                        default=['all'],
                        dest='tile_names',
                        type=str,
                        help='Tiles to place on the macro maps')
    parser.add_argument('--macro',
                        choices=['all'] + macro_names(),
                        nargs='+',
                        default=['all'],
                        dest='macro_names',
                        type=str,
                        help='Macro maps to compose the tiles with')
    parser.add_argument('--dim',
                        choices=[2, 3],
                        nargs='+',
                        default=[2],
                        type=int,
                        help='Dimensions to generate')
    parser.add_argument('--elements',
                        type=int,
                        help='Macro elements per direction (default: macro default)')
    parser.add_argument('--load', choices=LOADS, default='traction')
    parser.add_argument('--p-proj',
                        type=int,
                        help='Projection degree stored in the model file')
    parser.add_argument('--tol',
                        type=float,
                        help='Projection tolerance stored in the model file')
    parser.add_argument(
        '--output-folder-prefix',
        default='generated',
        help='Output path will be "<this-prefix>/<dim>d/<tile>-<macro>.json"')
    return parser.parse_args()


def select(names, available):
    if 'all' in names:
        return list(available)
    return [name for name in available if name in names]


def main(tile_names_=('all', ),
         macro_names_=('all', ),
         dims=(2, ),
         elements=None,
         load='traction',
         p_proj=None,
         tol=None,
         output_folder_prefix='generated'):
    written = []
    for dim in dims:
        folder = os.path.join(output_folder_prefix, f"{dim}d")
        os.makedirs(folder, exist_ok=True)
        for tile in select(tile_names_, tile_names()):
            for macro in select(macro_names_, macro_names()):
                macro_params = None if elements is None else {
                    'n_elements': elements
                }
                try:
                    model = make_model(tile,
                                       macro,
                                       dim,
                                       macro_params=macro_params,
                                       load=load,
                                       p_proj=p_proj,
                                       tol=tol)
                except MsigaError as err:
                    print(f"Skip {tile}-{macro} in {dim}D: {err}")
                    continue
                path = os.path.join(folder, f"{tile}-{macro}.json")
                save_model(model, path)
                print(f"Wrote {path} ({model.n_dof} dofs)")
                written.append(path)
    return written


if __name__ == "__main__":
    args = get_args()
    main(args.tile_names, args.macro_names, args.dim, args.elements, args.load,
         args.p_proj, args.tol, args.output_folder_prefix)
